#include "mamba/seqcore.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mamba/errors.hpp"

namespace mamba {

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<float>> rows) {
  const std::size_t cols = rows.size() == 0 ? 0 : rows.begin()->size();
  Matrix m(rows.size(), cols);
  std::size_t r = 0;
  for (const auto& row : rows) {
    if (row.size() != cols) throw ShapeError("Matrix::from_rows: ragged rows");
    std::copy(row.begin(), row.end(), m.row(r++).begin());
  }
  return m;
}

FeatureSequence::FeatureSequence(std::size_t length, std::size_t channels)
    : length_(length), channels_(channels) {
  if (channels == 0) throw ShapeError("FeatureSequence needs at least one channel");
  data_.assign(length * channels, 0.0f);
}

FeatureSequence FeatureSequence::from_rows(std::initializer_list<std::initializer_list<float>> rows) {
  if (rows.size() == 0) throw ShapeError("FeatureSequence::from_rows: no rows to infer D from");
  FeatureSequence x(rows.size(), rows.begin()->size());
  std::size_t t = 0;
  for (const auto& row : rows) {
    if (row.size() != x.channels()) throw ShapeError("FeatureSequence::from_rows: ragged rows");
    std::copy(row.begin(), row.end(), x.row(t++).begin());
  }
  return x;
}

namespace {

constexpr std::size_t kRowTile = 4;
constexpr std::size_t kColTile = 256;

}  // namespace

namespace {

// One row tile. Each row accumulates its own products in k order, so the
// result of a row does not depend on how many rows share the tile.
template <std::size_t R>
void matmul_tile(const float* a, std::size_t inner, const float* b, std::size_t cols,
                 std::span<const float> bias, float* out) {
  alignas(64) double acc[R][kColTile];
  for (std::size_t j0 = 0; j0 < cols; j0 += kColTile) {
    const std::size_t nc = std::min(kColTile, cols - j0);
    for (auto& r : acc) std::fill(r, r + nc, 0.0);
    for (std::size_t k = 0; k < inner; ++k) {
      const float* w = b + k * cols + j0;
      double xs[R];
      for (std::size_t r = 0; r < R; ++r) xs[r] = static_cast<double>(a[r * inner + k]);
      for (std::size_t j = 0; j < nc; ++j) {
        const double wj = w[j];
#pragma GCC unroll 4
        for (std::size_t r = 0; r < R; ++r) acc[r][j] += xs[r] * wj;
      }
    }
    for (std::size_t r = 0; r < R; ++r) {
      float* o = out + r * cols + j0;
      if (bias.empty()) {
        for (std::size_t j = 0; j < nc; ++j) o[j] = static_cast<float>(acc[r][j]);
      } else {
        for (std::size_t j = 0; j < nc; ++j) o[j] = static_cast<float>(acc[r][j] + static_cast<double>(bias[j0 + j]));
      }
    }
  }
}

}  // namespace

void matmul(const float* a, std::size_t rows, std::size_t inner, const float* b, std::size_t cols,
            std::span<const float> bias, float* out) {
  std::size_t t = 0;
  for (; t + kRowTile <= rows; t += kRowTile) {
    matmul_tile<kRowTile>(a + t * inner, inner, b, cols, bias, out + t * cols);
  }
  switch (rows - t) {
    case 3: matmul_tile<3>(a + t * inner, inner, b, cols, bias, out + t * cols); break;
    case 2: matmul_tile<2>(a + t * inner, inner, b, cols, bias, out + t * cols); break;
    case 1: matmul_tile<1>(a + t * inner, inner, b, cols, bias, out + t * cols); break;
    default: break;
  }
}

FeatureSequence linear(const FeatureSequence& x, const Matrix& w, std::span<const float> bias) {
  if (x.channels() != w.rows()) {
    throw ShapeError("linear: input has D=" + std::to_string(x.channels()) + ", weight expects " +
                     std::to_string(w.rows()));
  }
  if (!bias.empty() && bias.size() != w.cols()) throw ShapeError("linear: bias size mismatch");
  FeatureSequence out(x.length(), w.cols());
  matmul(x.data(), x.length(), x.channels(), w.data(), w.cols(), bias, out.data());
  return out;
}

Linear Linear::random(std::size_t in, std::size_t out, Rng& rng, bool with_bias) {
  Linear l = zeros(in, out, with_bias);
  const double stddev = 1.0 / std::sqrt(static_cast<double>(in));
  for (float& v : l.weight.values()) v = static_cast<float>(rng.normal(0.0, stddev));
  return l;
}

Linear Linear::zeros(std::size_t in, std::size_t out, bool with_bias) {
  Linear l;
  l.weight = Matrix(in, out);
  if (with_bias) l.bias.assign(out, 0.0f);
  return l;
}

void Linear::apply_row(std::span<const float> in, std::span<float> out) const {
  if (in.size() != in_features() || out.size() != out_features()) {
    throw ShapeError("Linear::apply_row: size mismatch");
  }
  matmul(in.data(), 1, in.size(), weight.data(), weight.cols(), bias, out.data());
}

void layer_norm_row(std::span<const float> in, std::span<const float> gain,
                    std::span<const float> bias, float eps, std::span<float> out) {
  const std::size_t d = in.size();
  double mean = 0.0;
  for (float v : in) mean += v;
  mean /= static_cast<double>(d);
  double var = 0.0;
  for (float v : in) {
    const double c = v - mean;
    var += c * c;
  }
  var /= static_cast<double>(d);
  const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
  for (std::size_t c = 0; c < d; ++c) {
    const double normed = (in[c] - mean) * inv;
    out[c] = static_cast<float>(normed * gain[c] + bias[c]);
  }
}

FeatureSequence layer_norm(const FeatureSequence& x, std::span<const float> gain,
                           std::span<const float> bias, float eps) {
  if (gain.size() != x.channels() || bias.size() != x.channels()) {
    throw ShapeError("layer_norm: gain/bias size mismatch");
  }
  if (!(eps > 0.0f)) throw UsageError("layer_norm: eps must be positive");
  FeatureSequence out(x.length(), x.channels());
  for (std::size_t t = 0; t < x.length(); ++t) layer_norm_row(x.row(t), gain, bias, eps, out.row(t));
  return out;
}

LayerNorm LayerNorm::identity(std::size_t channels) {
  return LayerNorm{std::vector<float>(channels, 1.0f), std::vector<float>(channels, 0.0f), kLayerNormEps};
}

void silu_inplace(std::span<float> v) noexcept {
  for (float& e : v) e = silu(e);
}

FeatureSequence silu(const FeatureSequence& x) {
  FeatureSequence out = x;
  silu_inplace(out.values());
  return out;
}

FeatureSequence gated_mult(const FeatureSequence& a, const FeatureSequence& b) {
  if (a.length() != b.length() || a.channels() != b.channels()) {
    throw ShapeError("gated_mult: operand shapes differ");
  }
  FeatureSequence out(a.length(), a.channels());
  auto av = a.values();
  auto bv = b.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * silu(bv[i]);
  return out;
}

FeatureSequence depthwise_conv1d(const FeatureSequence& x, const Matrix& kernel,
                                 std::span<const float> bias, std::size_t left_pad) {
  const std::size_t width = kernel.rows();
  const std::size_t d = x.channels();
  if (width == 0) throw UsageError("depthwise_conv1d: kernel width must be >= 1");
  if (kernel.cols() != d) throw ShapeError("depthwise_conv1d: kernel channels != input channels");
  if (!bias.empty() && bias.size() != d) throw ShapeError("depthwise_conv1d: bias size mismatch");
  if (left_pad >= width) throw UsageError("depthwise_conv1d: left_pad must be < width");

  const auto length = static_cast<std::ptrdiff_t>(x.length());
  FeatureSequence out(x.length(), d);
  Buffer<double> acc(d);
  for (std::ptrdiff_t t = 0; t < length; ++t) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t k = 0; k < width; ++k) {
      const std::ptrdiff_t src = t - static_cast<std::ptrdiff_t>(left_pad) + static_cast<std::ptrdiff_t>(k);
      if (src < 0 || src >= length) continue;
      const auto xr = x.row(static_cast<std::size_t>(src));
      const auto kr = kernel.row(k);
      for (std::size_t c = 0; c < d; ++c) acc[c] += static_cast<double>(kr[c]) * xr[c];
    }
    auto o = out.row(static_cast<std::size_t>(t));
    for (std::size_t c = 0; c < d; ++c) {
      o[c] = static_cast<float>(bias.empty() ? acc[c] : acc[c] + bias[c]);
    }
  }
  return out;
}

FeatureSequence causal_conv1d(const FeatureSequence& x, const Matrix& kernel, std::span<const float> bias) {
  if (kernel.rows() == 0) throw UsageError("causal_conv1d: kernel width must be >= 1");
  return depthwise_conv1d(x, kernel, bias, kernel.rows() - 1);
}

void causal_conv_window(const Matrix& window, const Matrix& kernel, std::span<const float> bias,
                        std::span<float> out) {
  const std::size_t width = kernel.rows();
  const std::size_t d = kernel.cols();
  if (window.rows() != width || window.cols() != d || out.size() != d) {
    throw ShapeError("causal_conv_window: window/kernel/out shape mismatch");
  }
  // Taps over zero padding contribute exact zeros, matching the skipped taps
  // of the batched path.
  for (std::size_t c = 0; c < d; ++c) {
    double acc = 0.0;
    for (std::size_t k = 0; k < width; ++k) acc += static_cast<double>(kernel(k, c)) * window(k, c);
    out[c] = static_cast<float>(bias.empty() ? acc : acc + bias[c]);
  }
}

FeedForward FeedForward::random(std::size_t d_model, Rng& rng, std::size_t hidden) {
  if (hidden == 0) hidden = 4 * d_model;
  return FeedForward{Linear::random(d_model, hidden, rng), Linear::random(hidden, d_model, rng)};
}

FeatureSequence FeedForward::operator()(const FeatureSequence& x) const {
  FeatureSequence h = up(x);
  silu_inplace(h.values());
  return down(h);
}

void FeedForward::apply_row(std::span<const float> in, std::span<float> out) const {
  Buffer<float> h(up.out_features());
  up.apply_row(in, h);
  silu_inplace(h);
  down.apply_row(h, out);
}

Embedding Embedding::random(std::size_t vocab, std::size_t d_model, Rng& rng) {
  Embedding e{Matrix(vocab, d_model)};
  for (float& v : e.table.values()) v = static_cast<float>(rng.normal());
  return e;
}

FeatureSequence Embedding::lookup(std::span<const int> ids) const {
  FeatureSequence out(ids.size(), table.cols());
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= vocab()) {
      throw UsageError("Embedding::lookup: id " + std::to_string(ids[t]) + " out of range");
    }
    auto src = table.row(static_cast<std::size_t>(ids[t]));
    std::copy(src.begin(), src.end(), out.row(t).begin());
  }
  return out;
}

void Embedding::accumulate(int id, std::span<float> out) const {
  if (id < 0 || static_cast<std::size_t>(id) >= vocab()) {
    throw UsageError("Embedding::accumulate: id " + std::to_string(id) + " out of range");
  }
  auto src = table.row(static_cast<std::size_t>(id));
  for (std::size_t c = 0; c < out.size(); ++c) out[c] += src[c];
}

FeatureSequence concat_rows(std::span<const FeatureSequence* const> parts) {
  if (parts.empty()) throw UsageError("concat_rows: nothing to concatenate");
  const std::size_t d = parts.front()->channels();
  std::size_t total = 0;
  for (const auto* p : parts) {
    if (p->channels() != d) throw ShapeError("concat_rows: channel counts differ");
    total += p->length();
  }
  FeatureSequence out(total, d);
  float* dst = out.data();
  for (const auto* p : parts) dst = std::copy(p->values().begin(), p->values().end(), dst);
  return out;
}

FeatureSequence concat_rows(const FeatureSequence& a, const FeatureSequence& b) {
  const FeatureSequence* parts[] = {&a, &b};
  return concat_rows(parts);
}

FeatureSequence slice_rows(const FeatureSequence& x, std::size_t begin, std::size_t end) {
  if (begin > end || end > x.length()) throw UsageError("slice_rows: range out of bounds");
  FeatureSequence out(end - begin, x.channels());
  std::copy(x.data() + begin * x.channels(), x.data() + end * x.channels(), out.data());
  return out;
}

FeatureSequence reversed(const FeatureSequence& x) {
  FeatureSequence out(x.length(), x.channels());
  for (std::size_t t = 0; t < x.length(); ++t) {
    auto src = x.row(x.length() - 1 - t);
    std::copy(src.begin(), src.end(), out.row(t).begin());
  }
  return out;
}

FeatureSequence slice_channels(const FeatureSequence& x, std::size_t offset, std::size_t channels) {
  if (offset + channels > x.channels()) throw ShapeError("slice_channels: range out of bounds");
  FeatureSequence out(x.length(), channels);
  for (std::size_t t = 0; t < x.length(); ++t) {
    auto src = x.row(t).subspan(offset, channels);
    std::copy(src.begin(), src.end(), out.row(t).begin());
  }
  return out;
}

void add_inplace(FeatureSequence& acc, const FeatureSequence& x, float scale) {
  if (acc.length() != x.length() || acc.channels() != x.channels()) {
    throw ShapeError("add_inplace: shapes differ");
  }
  auto a = acc.values();
  auto b = x.values();
  if (scale == 1.0f) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  } else {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += scale * b[i];
  }
}

FeatureSequence add(const FeatureSequence& a, const FeatureSequence& b) {
  FeatureSequence out = a;
  add_inplace(out, b);
  return out;
}

FeatureSequence random_sequence(std::size_t length, std::size_t channels, Rng& rng, float stddev) {
  FeatureSequence x(length, channels);
  for (float& v : x.values()) v = static_cast<float>(rng.normal(0.0, stddev));
  return x;
}

bool all_finite(std::span<const float> v) noexcept {
  return std::all_of(v.begin(), v.end(), [](float e) { return std::isfinite(e); });
}

double max_abs_diff(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw ShapeError("max_abs_diff: sizes differ");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

double max_abs_diff(const FeatureSequence& a, const FeatureSequence& b) {
  if (a.length() != b.length() || a.channels() != b.channels()) {
    throw ShapeError("max_abs_diff: shapes differ");
  }
  return max_abs_diff(a.values(), b.values());
}

}  // namespace mamba
