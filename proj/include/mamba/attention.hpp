#pragma once

// Transformer baselines: multi-head attention with an explicitly
// materialised H x Lq x Lk score matrix, KV-cache incremental decoding, and
// pre-norm encoder/decoder layers.

#include <cstddef>
#include <optional>
#include <span>

#include "mamba/rng.hpp"
#include "mamba/seqcore.hpp"
#include "mamba/tensor.hpp"

namespace mamba {

inline constexpr std::size_t kDefaultHeads = 8;

enum class MaskMode { none, causal };

/// Softmax weights, heads x lq x lk, row-major.
struct AttentionWeights {
  std::size_t heads = 0;
  std::size_t lq = 0;
  std::size_t lk = 0;
  Buffer<float> p;

  float operator()(std::size_t h, std::size_t i, std::size_t j) const { return p[(h * lq + i) * lk + j]; }
};

/// Keys and values seen so far (already projected), one row per token.
struct KvCache {
  std::size_t d_model = 0;
  std::size_t length = 0;
  Buffer<float> keys;    // length x d_model
  Buffer<float> values;  // length x d_model

  std::size_t bytes() const noexcept { return (keys.capacity() + values.capacity()) * sizeof(float); }
};

class MultiHeadAttention {
 public:
  std::size_t heads = kDefaultHeads;
  Linear q_proj;
  Linear k_proj;
  Linear v_proj;
  Linear o_proj;

  /// Throws ConfigError unless heads >= 1 divides d_model.
  static MultiHeadAttention random(std::size_t d_model, std::size_t heads, Rng& rng);

  std::size_t d_model() const noexcept { return q_proj.in_features(); }
  std::size_t head_dim() const noexcept { return d_model() / heads; }
  std::size_t param_count() const noexcept;

  FeatureSequence self_attention(const FeatureSequence& x, MaskMode mask = MaskMode::none) const;
  /// Queries from q_seq, keys/values from kv_seq. Empty kv_seq -> UsageError.
  FeatureSequence cross_attention(const FeatureSequence& q_seq, const FeatureSequence& kv_seq) const;
  AttentionWeights weights(const FeatureSequence& q_seq, const FeatureSequence& kv_seq,
                           MaskMode mask = MaskMode::none) const;

  KvCache empty_cache() const;
  /// Cache holding the projected keys/values of `memory` (for cross attention).
  KvCache prefill(const FeatureSequence& memory) const;

  /// Appends x_t's key/value to the cache and attends over the whole cache.
  void step(KvCache& cache, std::span<const float> x_t, std::span<float> y_t) const;
  /// Attends over a fixed cache without appending (cross attention step).
  void attend_cached(const KvCache& cache, std::span<const float> q_t, std::span<float> y_t) const;
};

/// Free-function spellings of the attention entry points.
FeatureSequence self_attention(const MultiHeadAttention& attn, const FeatureSequence& x, MaskMode mask);
FeatureSequence cross_attention(const MultiHeadAttention& attn, const FeatureSequence& q_seq,
                                const FeatureSequence& kv_seq);
void attn_step(const MultiHeadAttention& attn, KvCache& cache, std::span<const float> x_t, std::span<float> y_t);

/// x + attn(norm(x)), then x + ff(norm(x)).
class TransformerEncoderLayer {
 public:
  LayerNorm norm;
  MultiHeadAttention attn;
  LayerNorm ff_norm;
  FeedForward ff;

  static TransformerEncoderLayer random(std::size_t d_model, std::size_t heads, Rng& rng);

  std::size_t param_count() const noexcept;
  FeatureSequence operator()(const FeatureSequence& x) const;
};

/// x + causal_attn(norm(x)); with memory, x + cross_attn(norm(x), memory);
/// then x + ff(norm(x)).
class TransformerDecoderLayer {
 public:
  LayerNorm norm;
  MultiHeadAttention self_attn;
  std::optional<LayerNorm> cross_norm;
  std::optional<MultiHeadAttention> cross_attn;
  LayerNorm ff_norm;
  FeedForward ff;

  static TransformerDecoderLayer random(std::size_t d_model, std::size_t heads, bool with_cross, Rng& rng);

  std::size_t d_model() const noexcept { return self_attn.d_model(); }
  std::size_t param_count() const noexcept;
  FeatureSequence operator()(const FeatureSequence& x, const FeatureSequence* memory = nullptr) const;

  struct State {
    KvCache self;
    std::optional<KvCache> cross;
  };
  State initial_state(const FeatureSequence* memory = nullptr) const;
  void step(State& state, std::span<const float> x_t, std::span<float> y_t) const;
};

/// Absolute sinusoidal encoding: pe[pos][2i] = sin(pos / 10000^(2i/D)),
/// pe[pos][2i+1] = cos(same).
void sinusoidal_row(std::size_t position, std::span<float> out);
/// x[t] += pe[offset + t]
void add_sinusoidal_positions(FeatureSequence& x, std::size_t offset = 0);

}  // namespace mamba
