#pragma once

// Dense primitives shared by every layer: projections, normalisation,
// activations, depthwise convolution and a few sequence utilities.
//
// Storage is f32; every reduction (dot products, moments, softmax sums)
// accumulates in f64 and rounds once. Each output row is computed by the same
// instruction sequence no matter where it sits in the batch, so per-token
// results are bit-identical between batched and single-row evaluation.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "mamba/rng.hpp"
#include "mamba/tensor.hpp"

namespace mamba {

inline constexpr float kLayerNormEps = 1e-5f;
inline constexpr std::size_t kDefaultConvWidth = 4;

/// out[rows x cols] = a[rows x inner] * b[inner x cols] (+ bias), all row-major.
void matmul(const float* a, std::size_t rows, std::size_t inner, const float* b, std::size_t cols,
            std::span<const float> bias, float* out);

/// out[t] = x[t] * w + bias. Throws ShapeError if x.channels() != w.rows()
/// or a non-empty bias does not have w.cols() entries.
FeatureSequence linear(const FeatureSequence& x, const Matrix& w, std::span<const float> bias = {});

/// A dense projection with optional bias.
struct Linear {
  Matrix weight;            // in_features x out_features
  std::vector<float> bias;  // empty, or out_features entries

  /// Weights ~ N(0, 1/sqrt(in)), bias zero.
  static Linear random(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true);
  static Linear zeros(std::size_t in, std::size_t out, bool with_bias = true);

  std::size_t in_features() const noexcept { return weight.rows(); }
  std::size_t out_features() const noexcept { return weight.cols(); }
  std::size_t param_count() const noexcept { return weight.size() + bias.size(); }

  FeatureSequence operator()(const FeatureSequence& x) const { return linear(x, weight, bias); }

  /// Single token; out must hold out_features() values.
  void apply_row(std::span<const float> in, std::span<float> out) const;
};

/// Per-token normalisation to zero mean / unit (population) variance, then
/// gain * x + bias.
FeatureSequence layer_norm(const FeatureSequence& x, std::span<const float> gain,
                           std::span<const float> bias, float eps = kLayerNormEps);

void layer_norm_row(std::span<const float> in, std::span<const float> gain,
                    std::span<const float> bias, float eps, std::span<float> out);

struct LayerNorm {
  std::vector<float> gain;
  std::vector<float> bias;
  float eps = kLayerNormEps;

  static LayerNorm identity(std::size_t channels);

  std::size_t param_count() const noexcept { return gain.size() + bias.size(); }
  FeatureSequence operator()(const FeatureSequence& x) const { return layer_norm(x, gain, bias, eps); }
  void apply_row(std::span<const float> in, std::span<float> out) const {
    layer_norm_row(in, gain, bias, eps, out);
  }
};

inline float silu(float v) noexcept { return v / (1.0f + std::exp(-v)); }
FeatureSequence silu(const FeatureSequence& x);
void silu_inplace(std::span<float> v) noexcept;

/// a * silu(b), elementwise. Throws ShapeError on shape mismatch.
FeatureSequence gated_mult(const FeatureSequence& a, const FeatureSequence& b);

/// Depthwise 1-D convolution over time with `left_pad` zeros in front of the
/// sequence (and width - 1 - left_pad behind). kernel is width x channels;
/// tap k multiplies x[t - left_pad + k]. left_pad = width - 1 is causal.
FeatureSequence depthwise_conv1d(const FeatureSequence& x, const Matrix& kernel,
                                 std::span<const float> bias, std::size_t left_pad);

/// Causal depthwise convolution: out[t] depends on x[t-K+1 .. t] only; the
/// last tap multiplies the current step.
FeatureSequence causal_conv1d(const FeatureSequence& x, const Matrix& kernel,
                              std::span<const float> bias = {});

/// One causal-conv output from a window holding the last K inputs
/// (window row K-1 is the current step). Same arithmetic as causal_conv1d.
void causal_conv_window(const Matrix& window, const Matrix& kernel, std::span<const float> bias,
                        std::span<float> out);

/// Two-layer MLP: down(silu(up(x))). Hidden width is 4 * d_model by default.
struct FeedForward {
  Linear up;
  Linear down;

  static FeedForward random(std::size_t d_model, Rng& rng, std::size_t hidden = 0);

  std::size_t param_count() const noexcept { return up.param_count() + down.param_count(); }
  FeatureSequence operator()(const FeatureSequence& x) const;
  void apply_row(std::span<const float> in, std::span<float> out) const;
};

/// Lookup table: vocab x d_model.
struct Embedding {
  Matrix table;

  static Embedding random(std::size_t vocab, std::size_t d_model, Rng& rng);

  std::size_t vocab() const noexcept { return table.rows(); }
  std::size_t param_count() const noexcept { return table.size(); }
  FeatureSequence lookup(std::span<const int> ids) const;
  /// out += table[id]
  void accumulate(int id, std::span<float> out) const;
};

// Sequence utilities.
FeatureSequence concat_rows(std::span<const FeatureSequence* const> parts);
FeatureSequence concat_rows(const FeatureSequence& a, const FeatureSequence& b);
FeatureSequence slice_rows(const FeatureSequence& x, std::size_t begin, std::size_t end);
FeatureSequence reversed(const FeatureSequence& x);
/// First `channels` columns starting at `offset`.
FeatureSequence slice_channels(const FeatureSequence& x, std::size_t offset, std::size_t channels);

void add_inplace(FeatureSequence& acc, const FeatureSequence& x, float scale = 1.0f);
FeatureSequence add(const FeatureSequence& a, const FeatureSequence& b);

FeatureSequence random_sequence(std::size_t length, std::size_t channels, Rng& rng, float stddev = 1.0f);

bool all_finite(std::span<const float> v) noexcept;
double max_abs_diff(std::span<const float> a, std::span<const float> b);
double max_abs_diff(const FeatureSequence& a, const FeatureSequence& b);

}  // namespace mamba
