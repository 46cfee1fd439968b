#pragma once

// Selective state space model with diagonal transition.
//
//   h_t = Abar_t * h_{t-1} + Bbar_t x_t,     y_t = C_t . h_t + D_skip * x_t
//
// per channel c and state index n, where for input token x_t (E channels)
//
//   Delta_t = softplus(W_Delta x_t)            (E values, > 0)
//   Abar_t  = exp(Delta_t * A),  A = -exp(A_log)      (zero-order hold)
//   Bbar_t  = Delta_t * (W_B x_t)              (Euler)
//   C_t     = W_C x_t                           (N values, shared by channels)
//
// Three evaluation paths share the same per-lane arithmetic helpers:
// ssm_recurrence (sequential oracle), ssm_scan (work-efficient prefix scan
// over ScanElements) and ssm_step (one token, constant memory).

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mamba/rng.hpp"
#include "mamba/seqcore.hpp"
#include "mamba/tensor.hpp"

namespace mamba::ssm {

inline constexpr std::size_t kDefaultStateSize = 16;

struct SsmInit {
  std::size_t state_size = kDefaultStateSize;
  /// Rank of the factorised W_Delta; 0 picks ceil(channels / 16).
  std::size_t delta_rank = 0;
  double delta_min = 1e-3;
  double delta_max = 1e-1;
};

struct SelectiveSsmParams {
  Matrix a_log;            // channels x state, A = -exp(a_log)
  Linear b_proj;           // channels -> state
  Linear c_proj;           // channels -> state
  Linear delta_down;       // channels -> rank (no bias)
  Linear delta_up;         // rank -> channels (bias = step-size offset)
  std::vector<float> d_skip;  // channels

  static SelectiveSsmParams random(std::size_t channels, Rng& rng, const SsmInit& init = {});
  /// Input-independent parameters: projection weights zero, random biases
  /// for B, C and Delta, A_log ~ U(-2, 1).
  static SelectiveSsmParams random_time_invariant(std::size_t channels, Rng& rng, const SsmInit& init = {});

  std::size_t channels() const noexcept { return a_log.rows(); }
  std::size_t state_size() const noexcept { return a_log.cols(); }
  std::size_t param_count() const noexcept;

  float transition(std::size_t c, std::size_t n) const { return -std::exp(a_log(c, n)); }

  /// True when B, C and Delta cannot depend on the input (projection weights
  /// all zero), i.e. the model is linear time-invariant.
  bool is_time_invariant() const;
};

/// Input-dependent projections for a whole sequence.
struct Projections {
  FeatureSequence delta;  // L x E, softplus applied
  FeatureSequence b;      // L x N
  FeatureSequence c;      // L x N
};

Projections project(const FeatureSequence& x, const SelectiveSsmParams& p);

/// Per-step discrete parameters, materialised.
struct DiscreteSsm {
  std::size_t length = 0;
  std::size_t channels = 0;
  std::size_t state_size = 0;
  Buffer<float> a_bar;  // L x E x N
  Buffer<float> b_bar;  // L x E x N
  Buffer<float> c;      // L x N

  float abar(std::size_t t, std::size_t e, std::size_t n) const {
    return a_bar[(t * channels + e) * state_size + n];
  }
  float bbar(std::size_t t, std::size_t e, std::size_t n) const {
    return b_bar[(t * channels + e) * state_size + n];
  }
  float cvec(std::size_t t, std::size_t n) const { return c[t * state_size + n]; }
};

DiscreteSsm selectivize(const FeatureSequence& x, const SelectiveSsmParams& p);

/// Affine map h -> a*h + b on every (channel, state) lane.
struct ScanElement {
  std::size_t channels = 0;
  std::size_t state_size = 0;
  Buffer<double> a;
  Buffer<double> b;

  static ScanElement identity(std::size_t channels, std::size_t state_size);
};

/// (later o earlier): apply `earlier` first, then `later`.
/// (a2, b2) o (a1, b1) = (a2*a1, a2*b1 + b2).
ScanElement compose(const ScanElement& later, const ScanElement& earlier);

/// Recurrent state: h is channels x state, `position` is the index of the
/// last absorbed token (-1 before the first step).
struct SsmState {
  std::size_t channels = 0;
  std::size_t state_size = 0;
  Buffer<double> h;
  std::int64_t position = -1;

  static SsmState zeros(std::size_t channels, std::size_t state_size);
};

struct StepResult {
  SsmState state;
  std::vector<float> y;
};

/// One recurrence update in O(E*N) time and constant memory.
StepResult ssm_step(SsmState state, std::span<const float> x_t, const SelectiveSsmParams& p);
void ssm_step_inplace(SsmState& state, std::span<const float> x_t, const SelectiveSsmParams& p,
                      std::span<float> y_t);

/// Strictly sequential evaluation from h_0 = 0; the reference for ssm_scan.
/// Bit-identical to folding ssm_step over the sequence.
FeatureSequence ssm_recurrence(const FeatureSequence& x, const SelectiveSsmParams& p);

/// Same output as ssm_recurrence via an inclusive prefix scan of
/// ScanElements. The combination tree depends only on the sequence length.
FeatureSequence ssm_scan(const FeatureSequence& x, const SelectiveSsmParams& p);

/// Constant-parameter (LTI) SSM for the convolution-kernel form.
struct LtiSsm {
  std::size_t channels = 0;
  std::size_t state_size = 0;
  Buffer<double> a;  // channels x state
  Buffer<double> b;  // channels x state
  Buffer<double> c;  // channels x state
  std::vector<float> d_skip;
};

/// Discretised constant parameters of a time-invariant model.
/// Throws UsageError if p.is_time_invariant() is false.
LtiSsm time_invariant_form(const SelectiveSsmParams& p);

/// K[k][c] = sum_n c[c][n] * a[c][n]^k * b[c][n], k = 0 .. length-1.
Matrix ssm_kernel(const LtiSsm& lti, std::size_t length);

/// y = x * K (causal, per channel) + d_skip * x.
FeatureSequence ssm_kernel_conv(const FeatureSequence& x, const LtiSsm& lti);
/// Rejects selective parameters: the kernel form needs constant A, B, C.
FeatureSequence ssm_kernel_conv(const FeatureSequence& x, const SelectiveSsmParams& p);

/// Workers used by ssm_scan (lanes are split, the tree is not). Default 1.
void set_scan_workers(unsigned workers) noexcept;
unsigned scan_workers() noexcept;

namespace testing {
/// Fault injection for verification self-tests: when enabled, ssm_scan
/// composes elements in the wrong order.
void set_scan_order_fault(bool enabled) noexcept;
bool scan_order_fault() noexcept;
}  // namespace testing

}  // namespace mamba::ssm
