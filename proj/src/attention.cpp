#include "mamba/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mamba/errors.hpp"

namespace mamba {
namespace {

// Scaled softmax over the first `valid` entries of a score row; the rest of
// the row (masked positions) becomes exactly zero.
void softmax_row(float* s, std::size_t valid, std::size_t total, double scale) {
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < valid; ++j) top = std::max(top, static_cast<double>(s[j]) * scale);
  double sum = 0.0;
  for (std::size_t j = 0; j < valid; ++j) {
    const double e = std::exp(static_cast<double>(s[j]) * scale - top);
    s[j] = static_cast<float>(e);
    sum += s[j];
  }
  for (std::size_t j = 0; j < valid; ++j) s[j] = static_cast<float>(s[j] / sum);
  std::fill(s + valid, s + total, 0.0f);
}

// Multi-head attention over projected q (lq x D), k and v (lk x D).
// With `causal`, query i sees keys 0..i + offset.
void attend(std::size_t heads, const FeatureSequence& q, const FeatureSequence& k, const FeatureSequence& v,
            bool causal, std::size_t offset, Buffer<float>& scores, FeatureSequence& out) {
  const std::size_t lq = q.length(), lk = k.length(), d = q.channels(), dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  scores.assign(heads * lq * lk, 0.0f);
  out = FeatureSequence(lq, d);

  Buffer<float> qh(lq * dh), kt(dh * lk), vh(lk * dh), oh(lq * dh);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t c0 = h * dh;
    for (std::size_t i = 0; i < lq; ++i) std::copy_n(q.row(i).data() + c0, dh, qh.data() + i * dh);
    for (std::size_t j = 0; j < lk; ++j) {
      for (std::size_t c = 0; c < dh; ++c) kt[c * lk + j] = k(j, c0 + c);
      std::copy_n(v.row(j).data() + c0, dh, vh.data() + j * dh);
    }
    float* s = scores.data() + h * lq * lk;
    matmul(qh.data(), lq, dh, kt.data(), lk, {}, s);
    for (std::size_t i = 0; i < lq; ++i) {
      const std::size_t valid = causal ? std::min(lk, i + offset + 1) : lk;
      softmax_row(s + i * lk, valid, lk, scale);
    }
    matmul(s, lq, lk, vh.data(), dh, {}, oh.data());
    for (std::size_t i = 0; i < lq; ++i) std::copy_n(oh.data() + i * dh, dh, out.row(i).data() + c0);
  }
}

// Single query against every cached row; same arithmetic order as attend().
void attend_one(std::size_t heads, std::span<const float> q, const KvCache& cache, std::span<float> out) {
  const std::size_t d = cache.d_model, dh = d / heads, n = cache.length;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Buffer<float> s(n);
  Buffer<double> acc(dh);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t c0 = h * dh;
    for (std::size_t j = 0; j < n; ++j) {
      const float* kj = cache.keys.data() + j * d + c0;
      double acc = 0.0;
      for (std::size_t c = 0; c < dh; ++c) acc += static_cast<double>(q[c0 + c]) * static_cast<double>(kj[c]);
      s[j] = static_cast<float>(acc);
    }
    softmax_row(s.data(), n, n, scale);
    // Row-major walk over the cache; each channel still sums j = 0..n-1 in order.
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      const double sj = s[j];
      const float* vj = cache.values.data() + j * d + c0;
      for (std::size_t c = 0; c < dh; ++c) acc[c] += sj * static_cast<double>(vj[c]);
    }
    for (std::size_t c = 0; c < dh; ++c) out[c0 + c] = static_cast<float>(acc[c]);
  }
}

void check_dim(const FeatureSequence& x, std::size_t d, const char* who) {
  if (x.channels() != d) {
    throw ShapeError(std::string(who) + ": input has " + std::to_string(x.channels()) + " channels, expected " +
                     std::to_string(d));
  }
}

void residual_row(std::span<float> acc, std::span<const float> delta) {
  for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += delta[c];
}

}  // namespace

MultiHeadAttention MultiHeadAttention::random(std::size_t d_model, std::size_t heads, Rng& rng) {
  if (heads == 0 || d_model == 0 || d_model % heads != 0) {
    throw ConfigError("attention: d_model " + std::to_string(d_model) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  MultiHeadAttention m;
  m.heads = heads;
  m.q_proj = Linear::random(d_model, d_model, rng);
  m.k_proj = Linear::random(d_model, d_model, rng);
  m.v_proj = Linear::random(d_model, d_model, rng);
  m.o_proj = Linear::random(d_model, d_model, rng);
  return m;
}

std::size_t MultiHeadAttention::param_count() const noexcept {
  return q_proj.param_count() + k_proj.param_count() + v_proj.param_count() + o_proj.param_count();
}

FeatureSequence MultiHeadAttention::self_attention(const FeatureSequence& x, MaskMode mask) const {
  check_dim(x, d_model(), "self_attention");
  FeatureSequence ctx;
  {
    Buffer<float> scores;
    attend(heads, q_proj(x), k_proj(x), v_proj(x), mask == MaskMode::causal, 0, scores, ctx);
  }
  return o_proj(ctx);
}

FeatureSequence MultiHeadAttention::cross_attention(const FeatureSequence& q_seq,
                                                    const FeatureSequence& kv_seq) const {
  check_dim(q_seq, d_model(), "cross_attention query");
  check_dim(kv_seq, d_model(), "cross_attention memory");
  if (kv_seq.empty()) throw UsageError("cross_attention: key/value sequence is empty, softmax is undefined");
  FeatureSequence ctx;
  {
    Buffer<float> scores;
    attend(heads, q_proj(q_seq), k_proj(kv_seq), v_proj(kv_seq), false, 0, scores, ctx);
  }
  return o_proj(ctx);
}

AttentionWeights MultiHeadAttention::weights(const FeatureSequence& q_seq, const FeatureSequence& kv_seq,
                                             MaskMode mask) const {
  check_dim(q_seq, d_model(), "attention weights query");
  check_dim(kv_seq, d_model(), "attention weights memory");
  if (kv_seq.empty()) throw UsageError("attention weights: key/value sequence is empty");
  AttentionWeights w{heads, q_seq.length(), kv_seq.length(), {}};
  FeatureSequence ctx;
  attend(heads, q_proj(q_seq), k_proj(kv_seq), v_proj(kv_seq), mask == MaskMode::causal, 0, w.p, ctx);
  return w;
}

KvCache MultiHeadAttention::empty_cache() const { return KvCache{d_model(), 0, {}, {}}; }

KvCache MultiHeadAttention::prefill(const FeatureSequence& memory) const {
  check_dim(memory, d_model(), "prefill");
  const FeatureSequence k = k_proj(memory);
  const FeatureSequence v = v_proj(memory);
  return KvCache{d_model(), memory.length(), Buffer<float>(k.values().begin(), k.values().end()),
                 Buffer<float>(v.values().begin(), v.values().end())};
}

void MultiHeadAttention::step(KvCache& cache, std::span<const float> x_t, std::span<float> y_t) const {
  const std::size_t d = d_model();
  if (x_t.size() != d || y_t.size() != d || cache.d_model != d) throw ShapeError("attn_step: token size");
  Buffer<float> q(d), kv(d), ctx(d);
  k_proj.apply_row(x_t, kv);
  cache.keys.insert(cache.keys.end(), kv.begin(), kv.end());
  v_proj.apply_row(x_t, kv);
  cache.values.insert(cache.values.end(), kv.begin(), kv.end());
  ++cache.length;
  q_proj.apply_row(x_t, q);
  attend_one(heads, q, cache, ctx);
  o_proj.apply_row(ctx, y_t);
}

void MultiHeadAttention::attend_cached(const KvCache& cache, std::span<const float> x_t,
                                       std::span<float> y_t) const {
  const std::size_t d = d_model();
  if (x_t.size() != d || y_t.size() != d || cache.d_model != d) throw ShapeError("attend_cached: token size");
  if (cache.length == 0) throw UsageError("attend_cached: empty cache");
  Buffer<float> q(d), ctx(d);
  q_proj.apply_row(x_t, q);
  attend_one(heads, q, cache, ctx);
  o_proj.apply_row(ctx, y_t);
}

FeatureSequence self_attention(const MultiHeadAttention& attn, const FeatureSequence& x, MaskMode mask) {
  return attn.self_attention(x, mask);
}

FeatureSequence cross_attention(const MultiHeadAttention& attn, const FeatureSequence& q_seq,
                                const FeatureSequence& kv_seq) {
  return attn.cross_attention(q_seq, kv_seq);
}

void attn_step(const MultiHeadAttention& attn, KvCache& cache, std::span<const float> x_t, std::span<float> y_t) {
  attn.step(cache, x_t, y_t);
}

// --- layers ---------------------------------------------------------------

TransformerEncoderLayer TransformerEncoderLayer::random(std::size_t d_model, std::size_t heads, Rng& rng) {
  return TransformerEncoderLayer{LayerNorm::identity(d_model), MultiHeadAttention::random(d_model, heads, rng),
                                 LayerNorm::identity(d_model), FeedForward::random(d_model, rng)};
}

std::size_t TransformerEncoderLayer::param_count() const noexcept {
  return norm.param_count() + attn.param_count() + ff_norm.param_count() + ff.param_count();
}

FeatureSequence TransformerEncoderLayer::operator()(const FeatureSequence& x) const {
  FeatureSequence h = x;
  add_inplace(h, attn.self_attention(norm(x)));
  add_inplace(h, ff(ff_norm(h)));
  return h;
}

TransformerDecoderLayer TransformerDecoderLayer::random(std::size_t d_model, std::size_t heads, bool with_cross,
                                                        Rng& rng) {
  TransformerDecoderLayer l;
  l.norm = LayerNorm::identity(d_model);
  l.self_attn = MultiHeadAttention::random(d_model, heads, rng);
  if (with_cross) {
    l.cross_norm = LayerNorm::identity(d_model);
    l.cross_attn = MultiHeadAttention::random(d_model, heads, rng);
  }
  l.ff_norm = LayerNorm::identity(d_model);
  l.ff = FeedForward::random(d_model, rng);
  return l;
}

std::size_t TransformerDecoderLayer::param_count() const noexcept {
  std::size_t n = norm.param_count() + self_attn.param_count() + ff_norm.param_count() + ff.param_count();
  if (cross_attn) n += cross_norm->param_count() + cross_attn->param_count();
  return n;
}

FeatureSequence TransformerDecoderLayer::operator()(const FeatureSequence& x, const FeatureSequence* memory) const {
  FeatureSequence h = x;
  add_inplace(h, self_attn.self_attention(norm(x), MaskMode::causal));
  if (memory != nullptr && cross_attn) add_inplace(h, cross_attn->cross_attention((*cross_norm)(h), *memory));
  add_inplace(h, ff(ff_norm(h)));
  return h;
}

TransformerDecoderLayer::State TransformerDecoderLayer::initial_state(const FeatureSequence* memory) const {
  State s{self_attn.empty_cache(), std::nullopt};
  if (memory != nullptr && cross_attn) {
    if (memory->empty()) throw UsageError("decoder: memory sequence is empty");
    s.cross = cross_attn->prefill(*memory);
  }
  return s;
}

void TransformerDecoderLayer::step(State& state, std::span<const float> x_t, std::span<float> y_t) const {
  const std::size_t d = d_model();
  if (x_t.size() != d || y_t.size() != d) throw ShapeError("decoder step: token size");
  Buffer<float> normed(d), delta(d);
  std::copy(x_t.begin(), x_t.end(), y_t.begin());

  norm.apply_row(x_t, normed);
  self_attn.step(state.self, normed, delta);
  residual_row(y_t, delta);
  if (state.cross) {
    cross_norm->apply_row(y_t, normed);
    cross_attn->attend_cached(*state.cross, normed, delta);
    residual_row(y_t, delta);
  }
  ff_norm.apply_row(y_t, normed);
  ff.apply_row(normed, delta);
  residual_row(y_t, delta);
}

void sinusoidal_row(std::size_t position, std::span<float> out) {
  const auto d = static_cast<double>(out.size());
  for (std::size_t i = 0; i < out.size(); i += 2) {
    const double angle = static_cast<double>(position) / std::pow(10000.0, static_cast<double>(i) / d);
    out[i] = static_cast<float>(std::sin(angle));
    if (i + 1 < out.size()) out[i + 1] = static_cast<float>(std::cos(angle));
  }
}

void add_sinusoidal_positions(FeatureSequence& x, std::size_t offset) {
  Buffer<float> pe(x.channels());
  for (std::size_t t = 0; t < x.length(); ++t) {
    sinusoidal_row(offset + t, pe);
    residual_row(x.row(t), pe);
  }
}

}  // namespace mamba
