#include "mamba/ssm.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "mamba/errors.hpp"

namespace mamba::ssm {
namespace {

std::atomic<unsigned> g_scan_workers{1};
std::atomic<bool> g_scan_fault{false};

// Channels per scan block; lanes per block = kBlockChannels * state_size.
constexpr std::size_t kBlockChannels = 16;

float softplus(float z) noexcept {
  const double zd = z;
  return static_cast<float>(zd > 20.0 ? zd : std::log1p(std::exp(zd)));
}

// --- per-lane arithmetic shared by every evaluation path -------------------

inline double lane_decay(float delta, float a) noexcept { return std::exp(delta * a); }

inline double lane_input(float delta, float b, float x) noexcept {
  return static_cast<double>(delta) * static_cast<double>(b) * static_cast<double>(x);
}

inline float lane_readout(const double* h, const float* c, std::size_t state, float d, float x) noexcept {
  double acc = 0.0;
  for (std::size_t n = 0; n < state; ++n) acc += static_cast<double>(c[n]) * h[n];
  acc += static_cast<double>(d) * static_cast<double>(x);
  return static_cast<float>(acc);
}

bool all_zero(const Matrix& m) {
  const auto v = m.values();
  return std::all_of(v.begin(), v.end(), [](float e) { return e == 0.0f; });
}

struct RowProjection {
  Buffer<float> low;    // rank
  Buffer<float> delta;  // channels
  Buffer<float> b;      // state
  Buffer<float> c;      // state

  explicit RowProjection(const SelectiveSsmParams& p)
      : low(p.delta_down.out_features()), delta(p.channels()), b(p.state_size()), c(p.state_size()) {}

  void compute(std::span<const float> x, const SelectiveSsmParams& p) {
    p.delta_down.apply_row(x, low);
    p.delta_up.apply_row(low, delta);
    for (float& v : delta) v = softplus(v);
    p.b_proj.apply_row(x, b);
    p.c_proj.apply_row(x, c);
  }
};

void check_input(const FeatureSequence& x, const SelectiveSsmParams& p) {
  if (x.channels() != p.channels()) {
    throw ShapeError("ssm: input has " + std::to_string(x.channels()) + " channels, params expect " +
                     std::to_string(p.channels()));
  }
}

// In-place inclusive scan over rows 0..n-1 of (sa, sb); each row holds
// `stride` lanes and only lanes [lo, hi) are touched. Brent-Kung order:
// up-sweep builds power-of-two block reductions, down-sweep fills the gaps.
// Row i becomes element_i o ... o element_0.
void scan_lanes(double* sa, double* sb, std::size_t n, std::size_t stride, std::size_t lo, std::size_t hi,
                bool fault) {
  auto combine = [&](std::size_t later, std::size_t earlier) {
    double* al = sa + later * stride;
    double* bl = sb + later * stride;
    const double* ae = sa + earlier * stride;
    const double* be = sb + earlier * stride;
    if (!fault) {
      for (std::size_t l = lo; l < hi; ++l) {
        bl[l] = al[l] * be[l] + bl[l];
        al[l] = al[l] * ae[l];
      }
    } else {
      for (std::size_t l = lo; l < hi; ++l) {
        bl[l] = ae[l] * bl[l] + be[l];
        al[l] = ae[l] * al[l];
      }
    }
  };

  std::size_t top = 1;
  for (std::size_t d = 1; d < n; d *= 2) {
    for (std::size_t i = 2 * d - 1; i < n; i += 2 * d) combine(i, i - d);
    top = d;
  }
  for (std::size_t d = top; d >= 1; d /= 2) {
    for (std::size_t i = 3 * d - 1; i < n; i += 2 * d) combine(i, i - d);
  }
}

}  // namespace

SelectiveSsmParams SelectiveSsmParams::random(std::size_t channels, Rng& rng, const SsmInit& init) {
  if (channels == 0 || init.state_size == 0) throw ConfigError("ssm: channels and state size must be >= 1");
  const std::size_t rank = init.delta_rank != 0 ? init.delta_rank : (channels + 15) / 16;
  SelectiveSsmParams p;
  p.a_log = Matrix(channels, init.state_size);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t n = 0; n < init.state_size; ++n) p.a_log(c, n) = static_cast<float>(std::log(n + 1.0));
  }
  p.b_proj = Linear::random(channels, init.state_size, rng);
  p.c_proj = Linear::random(channels, init.state_size, rng);
  p.delta_down = Linear::random(channels, rank, rng, /*with_bias=*/false);
  p.delta_up = Linear::random(rank, channels, rng);
  // Step sizes start log-uniform in [delta_min, delta_max]; the bias is the
  // inverse softplus of that value.
  for (float& bias : p.delta_up.bias) {
    const double dt = std::exp(rng.uniform(std::log(init.delta_min), std::log(init.delta_max)));
    bias = static_cast<float>(dt + std::log(-std::expm1(-dt)));
  }
  p.d_skip.assign(channels, 1.0f);
  return p;
}

SelectiveSsmParams SelectiveSsmParams::random_time_invariant(std::size_t channels, Rng& rng, const SsmInit& init) {
  auto p = random(channels, rng, init);
  std::fill(p.b_proj.weight.values().begin(), p.b_proj.weight.values().end(), 0.0f);
  std::fill(p.c_proj.weight.values().begin(), p.c_proj.weight.values().end(), 0.0f);
  std::fill(p.delta_down.weight.values().begin(), p.delta_down.weight.values().end(), 0.0f);
  for (float& v : p.b_proj.bias) v = static_cast<float>(rng.normal());
  for (float& v : p.c_proj.bias) v = static_cast<float>(rng.normal());
  for (float& v : p.a_log.values()) v = static_cast<float>(rng.uniform(-2.0, 1.0));
  return p;
}

std::size_t SelectiveSsmParams::param_count() const noexcept {
  return a_log.size() + b_proj.param_count() + c_proj.param_count() + delta_down.param_count() +
         delta_up.param_count() + d_skip.size();
}

bool SelectiveSsmParams::is_time_invariant() const {
  return all_zero(b_proj.weight) && all_zero(c_proj.weight) &&
         (all_zero(delta_down.weight) || all_zero(delta_up.weight));
}

Projections project(const FeatureSequence& x, const SelectiveSsmParams& p) {
  check_input(x, p);
  Projections out{p.delta_up(p.delta_down(x)), p.b_proj(x), p.c_proj(x)};
  for (float& v : out.delta.values()) v = softplus(v);
  return out;
}

DiscreteSsm selectivize(const FeatureSequence& x, const SelectiveSsmParams& p) {
  const Projections proj = project(x, p);
  const std::size_t L = x.length(), E = p.channels(), N = p.state_size();
  DiscreteSsm d{L, E, N, Buffer<float>(L * E * N), Buffer<float>(L * E * N), Buffer<float>(L * N)};
  for (std::size_t t = 0; t < L; ++t) {
    for (std::size_t e = 0; e < E; ++e) {
      const float delta = proj.delta(t, e);
      for (std::size_t n = 0; n < N; ++n) {
        const std::size_t i = (t * E + e) * N + n;
        d.a_bar[i] = static_cast<float>(lane_decay(delta, p.transition(e, n)));
        d.b_bar[i] = delta * proj.b(t, n);
      }
    }
    std::copy(proj.c.row(t).begin(), proj.c.row(t).end(), d.c.begin() + static_cast<std::ptrdiff_t>(t * N));
  }
  return d;
}

ScanElement ScanElement::identity(std::size_t channels, std::size_t state_size) {
  return ScanElement{channels, state_size, Buffer<double>(channels * state_size, 1.0),
                     Buffer<double>(channels * state_size, 0.0)};
}

ScanElement compose(const ScanElement& later, const ScanElement& earlier) {
  if (later.a.size() != earlier.a.size() || later.b.size() != earlier.b.size() ||
      later.a.size() != later.b.size()) {
    throw ShapeError("compose: element shapes differ");
  }
  ScanElement out{later.channels, later.state_size, Buffer<double>(later.a.size()), Buffer<double>(later.b.size())};
  for (std::size_t l = 0; l < out.a.size(); ++l) {
    out.a[l] = later.a[l] * earlier.a[l];
    out.b[l] = later.a[l] * earlier.b[l] + later.b[l];
  }
  return out;
}

SsmState SsmState::zeros(std::size_t channels, std::size_t state_size) {
  return SsmState{channels, state_size, Buffer<double>(channels * state_size, 0.0), -1};
}

void ssm_step_inplace(SsmState& state, std::span<const float> x_t, const SelectiveSsmParams& p,
                      std::span<float> y_t) {
  const std::size_t E = p.channels(), N = p.state_size();
  if (x_t.size() != E || y_t.size() != E) throw ShapeError("ssm_step: token size != channels");
  if (state.h.size() != E * N) throw ShapeError("ssm_step: state shape does not match params");
  RowProjection proj(p);
  proj.compute(x_t, p);
  for (std::size_t e = 0; e < E; ++e) {
    double* h = state.h.data() + e * N;
    const float delta = proj.delta[e];
    for (std::size_t n = 0; n < N; ++n) {
      h[n] = lane_decay(delta, p.transition(e, n)) * h[n] + lane_input(delta, proj.b[n], x_t[e]);
    }
    y_t[e] = lane_readout(h, proj.c.data(), N, p.d_skip[e], x_t[e]);
  }
  ++state.position;
}

StepResult ssm_step(SsmState state, std::span<const float> x_t, const SelectiveSsmParams& p) {
  std::vector<float> y(p.channels());
  ssm_step_inplace(state, x_t, p, y);
  return StepResult{std::move(state), std::move(y)};
}

FeatureSequence ssm_recurrence(const FeatureSequence& x, const SelectiveSsmParams& p) {
  check_input(x, p);
  FeatureSequence y(x.length(), p.channels());
  SsmState state = SsmState::zeros(p.channels(), p.state_size());
  for (std::size_t t = 0; t < x.length(); ++t) ssm_step_inplace(state, x.row(t), p, y.row(t));
  return y;
}

FeatureSequence ssm_scan(const FeatureSequence& x, const SelectiveSsmParams& p) {
  const Projections proj = project(x, p);
  const std::size_t L = x.length(), E = p.channels(), N = p.state_size();
  FeatureSequence y(L, E);
  if (L == 0) return y;

  const std::size_t block = std::min(kBlockChannels, E);
  const std::size_t stride = block * N;
  Buffer<double> sa(L * stride);
  Buffer<double> sb(L * stride);
  const bool fault = testing::scan_order_fault();
  const unsigned workers = std::max(1u, std::min<unsigned>(scan_workers(), static_cast<unsigned>(stride)));

  for (std::size_t e0 = 0; e0 < E; e0 += block) {
    const std::size_t nch = std::min(block, E - e0);
    const std::size_t lanes = nch * N;

    for (std::size_t t = 0; t < L; ++t) {
      double* ra = sa.data() + t * stride;
      double* rb = sb.data() + t * stride;
      const float* bt = proj.b.row(t).data();
      for (std::size_t k = 0; k < nch; ++k) {
        const std::size_t e = e0 + k;
        const float delta = proj.delta(t, e);
        const float xe = x(t, e);
        for (std::size_t n = 0; n < N; ++n) {
          ra[k * N + n] = lane_decay(delta, p.transition(e, n));
          rb[k * N + n] = lane_input(delta, bt[n], xe);
        }
      }
    }

    if (workers == 1) {
      scan_lanes(sa.data(), sb.data(), L, stride, 0, lanes, fault);
    } else {
      std::vector<std::thread> pool;
      const std::size_t per = (lanes + workers - 1) / workers;
      for (unsigned w = 0; w < workers; ++w) {
        const std::size_t lo = w * per, hi = std::min(lanes, lo + per);
        if (lo >= hi) break;
        pool.emplace_back([&, lo, hi] { scan_lanes(sa.data(), sb.data(), L, stride, lo, hi, fault); });
      }
      for (auto& th : pool) th.join();
    }

    // After the scan the additive part of row t is h_t (h_{-1} = 0).
    for (std::size_t t = 0; t < L; ++t) {
      const double* h = sb.data() + t * stride;
      const float* ct = proj.c.row(t).data();
      for (std::size_t k = 0; k < nch; ++k) {
        const std::size_t e = e0 + k;
        y(t, e) = lane_readout(h + k * N, ct, N, p.d_skip[e], x(t, e));
      }
    }
  }
  return y;
}

LtiSsm time_invariant_form(const SelectiveSsmParams& p) {
  if (!p.is_time_invariant()) {
    throw UsageError(
        "ssm_kernel_conv: parameters are selective (input-dependent); the convolution kernel "
        "form only exists for constant A, B, C");
  }
  const std::size_t E = p.channels(), N = p.state_size();
  // With zero projection weights every token projects to the same values.
  const std::vector<float> zeros(E, 0.0f);
  RowProjection proj(p);
  proj.compute(zeros, p);

  LtiSsm lti{E, N, Buffer<double>(E * N), Buffer<double>(E * N), Buffer<double>(E * N), p.d_skip};
  for (std::size_t e = 0; e < E; ++e) {
    for (std::size_t n = 0; n < N; ++n) {
      lti.a[e * N + n] = lane_decay(proj.delta[e], p.transition(e, n));
      lti.b[e * N + n] = static_cast<double>(proj.delta[e]) * static_cast<double>(proj.b[n]);
      lti.c[e * N + n] = proj.c[n];
    }
  }
  return lti;
}

Matrix ssm_kernel(const LtiSsm& lti, std::size_t length) {
  const std::size_t E = lti.channels, N = lti.state_size;
  Matrix k(length, E);
  for (std::size_t e = 0; e < E; ++e) {
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t i = e * N + n;
      double power = 1.0;  // a^k
      for (std::size_t step = 0; step < length; ++step) {
        k(step, e) += static_cast<float>(lti.c[i] * power * lti.b[i]);
        power *= lti.a[i];
      }
    }
  }
  return k;
}

FeatureSequence ssm_kernel_conv(const FeatureSequence& x, const LtiSsm& lti) {
  if (x.channels() != lti.channels) throw ShapeError("ssm_kernel_conv: channel mismatch");
  const std::size_t L = x.length(), E = lti.channels, N = lti.state_size;
  // Kernel taps accumulated in f64 (not via the f32 ssm_kernel matrix).
  Buffer<double> kernel(L * E, 0.0);
  for (std::size_t e = 0; e < E; ++e) {
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t i = e * N + n;
      double power = 1.0;
      for (std::size_t step = 0; step < L; ++step) {
        kernel[step * E + e] += lti.c[i] * power * lti.b[i];
        power *= lti.a[i];
      }
    }
  }
  FeatureSequence y(L, E);
  for (std::size_t t = 0; t < L; ++t) {
    for (std::size_t e = 0; e < E; ++e) {
      double acc = 0.0;
      for (std::size_t k = 0; k <= t; ++k) acc += kernel[k * E + e] * x(t - k, e);
      acc += static_cast<double>(lti.d_skip[e]) * x(t, e);
      y(t, e) = static_cast<float>(acc);
    }
  }
  return y;
}

FeatureSequence ssm_kernel_conv(const FeatureSequence& x, const SelectiveSsmParams& p) {
  check_input(x, p);
  return ssm_kernel_conv(x, time_invariant_form(p));
}

void set_scan_workers(unsigned workers) noexcept { g_scan_workers.store(std::max(1u, workers)); }
unsigned scan_workers() noexcept { return g_scan_workers.load(); }

namespace testing {
void set_scan_order_fault(bool enabled) noexcept { g_scan_fault.store(enabled); }
bool scan_order_fault() noexcept { return g_scan_fault.load(); }
}  // namespace testing

}  // namespace mamba::ssm
