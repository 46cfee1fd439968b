#pragma once

// Independent reference implementations used only by tests. Written as
// plainly as possible and sharing no code with the library kernels.

#include <cmath>
#include <vector>

#include "mamba/attention.hpp"
#include "mamba/layers.hpp"
#include "mamba/seqcore.hpp"
#include "mamba/ssm.hpp"

namespace oracle {

inline std::vector<double> matmul(const std::vector<double>& a, std::size_t rows, std::size_t inner,
                                  const std::vector<double>& b, std::size_t cols) {
  std::vector<double> out(rows * cols, 0.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < inner; ++k) s += a[i * inner + k] * b[k * cols + j];
      out[i * cols + j] = s;
    }
  return out;
}

inline std::vector<double> to_double(std::span<const float> v) { return {v.begin(), v.end()}; }

inline std::vector<double> linear(const mamba::FeatureSequence& x, const mamba::Linear& l) {
  auto y = matmul(to_double(x.values()), x.length(), x.channels(), to_double(l.weight.values()), l.out_features());
  if (!l.bias.empty())
    for (std::size_t t = 0; t < x.length(); ++t)
      for (std::size_t j = 0; j < l.out_features(); ++j) y[t * l.out_features() + j] += l.bias[j];
  return y;
}

inline double softplus(double z) { return std::log1p(std::exp(z)); }

/// Plain double-precision selective SSM recurrence, evaluated from the
/// definition with no shared helpers.
inline std::vector<double> ssm(const mamba::FeatureSequence& x, const mamba::ssm::SelectiveSsmParams& p) {
  const std::size_t L = x.length(), E = p.channels(), N = p.state_size();
  const auto low = linear(x, p.delta_down);
  mamba::FeatureSequence lowf(L, p.delta_down.out_features());
  for (std::size_t i = 0; i < low.size(); ++i) lowf.values()[i] = static_cast<float>(low[i]);
  const auto dpre = linear(lowf, p.delta_up);
  const auto b = linear(x, p.b_proj);
  const auto c = linear(x, p.c_proj);
  std::vector<double> h(E * N, 0.0), y(L * E, 0.0);
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t e = 0; e < E; ++e) {
      const double delta = softplus(dpre[t * E + e]);
      double acc = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const double a = -std::exp(static_cast<double>(p.a_log(e, n)));
        double& hn = h[e * N + n];
        hn = std::exp(delta * a) * hn + delta * b[t * N + n] * x(t, e);
        acc += c[t * N + n] * hn;
      }
      y[t * E + e] = acc + p.d_skip[e] * x(t, e);
    }
  return y;
}

inline double silu(double v) { return v / (1.0 + std::exp(-v)); }

inline mamba::FeatureSequence to_float(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
  mamba::FeatureSequence out(rows, cols);
  for (std::size_t i = 0; i < v.size(); ++i) out.values()[i] = static_cast<float>(v[i]);
  return out;
}

/// Causal depthwise conv, SiLU and SSM of one branch; main is L x E.
inline std::vector<double> branch(const std::vector<double>& main, std::size_t L, std::size_t E,
                                  const mamba::SsmBranch& br) {
  const std::size_t K = br.conv_kernel.rows();
  std::vector<double> u(L * E, 0.0);
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t e = 0; e < E; ++e) {
      double acc = br.conv_bias.empty() ? 0.0 : br.conv_bias[e];
      for (std::size_t k = 0; k < K; ++k) {
        const long src = static_cast<long>(t) - static_cast<long>(K - 1) + static_cast<long>(k);
        if (src >= 0) acc += br.conv_kernel(k, e) * main[static_cast<std::size_t>(src) * E + e];
      }
      u[t * E + e] = silu(acc);
    }
  return ssm(to_float(u, L, E), br.ssm);
}

inline std::vector<double> reverse_rows(const std::vector<double>& v, std::size_t L, std::size_t C) {
  std::vector<double> out(v.size());
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t c = 0; c < C; ++c) out[(L - 1 - t) * C + c] = v[t * C + c];
  return out;
}

inline std::vector<double> gate_and_project(const std::vector<double>& y, const std::vector<double>& xz, std::size_t L,
                                            std::size_t E, const mamba::Linear& out_proj) {
  std::vector<double> g(L * E);
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t e = 0; e < E; ++e) g[t * E + e] = y[t * E + e] * silu(xz[t * 2 * E + E + e]);
  return matmul(g, L, E, to_double(out_proj.weight.values()), out_proj.out_features());
}

inline std::vector<double> main_half(const std::vector<double>& xz, std::size_t L, std::size_t E) {
  std::vector<double> m(L * E);
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t e = 0; e < E; ++e) m[t * E + e] = xz[t * 2 * E + e];
  return m;
}

/// Gated unidirectional Mamba block from its definition.
inline std::vector<double> uni_mamba(const mamba::FeatureSequence& x, const mamba::UniMambaBlock& b) {
  const std::size_t L = x.length(), E = b.inner();
  const auto xz = linear(x, b.in_proj);
  return gate_and_project(branch(main_half(xz, L, E), L, E, b.branch), xz, L, E, b.out_proj);
}

/// Bidirectional block: forward branch and time-reversed backward branch averaged.
inline std::vector<double> bi_mamba(const mamba::FeatureSequence& x, const mamba::BiMambaBlock& b) {
  const std::size_t L = x.length(), E = b.out_proj.in_features();
  const auto xz = linear(x, b.in_proj);
  const auto main = main_half(xz, L, E);
  const auto fwd = branch(main, L, E, b.forward);
  const auto bwd = reverse_rows(branch(reverse_rows(main, L, E), L, E, b.backward), L, E);
  std::vector<double> avg(L * E);
  for (std::size_t i = 0; i < avg.size(); ++i) avg[i] = 0.5 * (fwd[i] + bwd[i]);
  return gate_and_project(avg, xz, L, E, b.out_proj);
}

/// Naive per-head attention in double. q_seq/kv_seq are raw (unprojected).
inline std::vector<double> attention(const mamba::MultiHeadAttention& m, const mamba::FeatureSequence& qs,
                                     const mamba::FeatureSequence& kvs, bool causal) {
  const std::size_t d = m.d_model(), H = m.heads, dh = d / H, lq = qs.length(), lk = kvs.length();
  const auto q = linear(qs, m.q_proj), k = linear(kvs, m.k_proj), v = linear(kvs, m.v_proj);
  std::vector<double> ctx(lq * d, 0.0);
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t i = 0; i < lq; ++i) {
      std::vector<double> s(lk, -INFINITY);
      double top = -INFINITY;
      const std::size_t valid = causal ? i + 1 : lk;
      for (std::size_t j = 0; j < valid; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < dh; ++c) dot += q[i * d + h * dh + c] * k[j * d + h * dh + c];
        s[j] = dot / std::sqrt(static_cast<double>(dh));
        top = std::max(top, s[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < valid; ++j) z += std::exp(s[j] - top);
      for (std::size_t j = 0; j < valid; ++j) {
        const double w = std::exp(s[j] - top) / z;
        for (std::size_t c = 0; c < dh; ++c) ctx[i * d + h * dh + c] += w * v[j * d + h * dh + c];
      }
    }
  auto out = matmul(ctx, lq, d, to_double(m.o_proj.weight.values()), d);
  for (std::size_t i = 0; i < lq; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] += m.o_proj.bias[j];
  return out;
}

inline double max_abs(std::span<const float> got, const std::vector<double>& want) {
  double m = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) m = std::max(m, std::abs(static_cast<double>(got[i]) - want[i]));
  return m;
}

}  // namespace oracle
