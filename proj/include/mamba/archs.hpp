#pragma once

// Skeletal speech architectures with random (seeded) weights:
//
//   TasNetModel  waveform encoder -> single-path masknet -> S masks -> decoder
//   AsrModel     2x stride-2 conv frontend -> macaron encoder blocks
//                (ConMamba or Conformer) -> optional decoder stack
//   CodecLm      AR stack over (phonemes, enrollment, codebook-1 codes) and
//                NAR stages predicting codebooks 2..8
//
// Each model comes in a Mamba flavour and a transformer flavour so the
// benchmark can compare like with like.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "mamba/attention.hpp"
#include "mamba/layers.hpp"
#include "mamba/rng.hpp"
#include "mamba/seqcore.hpp"
#include "mamba/tensor.hpp"

namespace mamba {

enum class Backbone { mamba, transformer };

const char* to_string(Backbone b) noexcept;

// --- token geometry ---------------------------------------------------------

/// Duration of one token as an exact fraction of a millisecond.
struct TokenResolution {
  std::int64_t num_ms = 1;
  std::int64_t den = 1;

  double ms() const noexcept { return static_cast<double>(num_ms) / static_cast<double>(den); }
  /// Nearest fraction with denominator <= 1000 (13.333.. -> 40/3).
  static TokenResolution from_ms(double ms);
};

/// floor(duration_ms / resolution_ms). Non-positive inputs -> UsageError.
std::size_t tokens_for_duration(double duration_ms, TokenResolution resolution);
std::size_t tokens_for_duration(double duration_ms, double resolution_ms);

// --- separation ---------------------------------------------------------------

struct TasNetConfig {
  std::size_t d_model = 256;
  std::size_t layers = 32;
  std::size_t sources = 2;
  std::size_t window = 16;   // samples
  std::size_t stride = 8;    // samples; 8 kHz / 8 = 1 ms tokens
  std::size_t sample_rate = 8000;
  Backbone backbone = Backbone::mamba;
  bool feedforward = false;
  std::size_t heads = kDefaultHeads;
};

class TasNetModel {
 public:
  TasNetConfig config;
  Linear encoder;  // window -> D, ReLU
  std::vector<MambaEncoderLayer> mamba_layers;
  std::vector<TransformerEncoderLayer> transformer_layers;
  LayerNorm out_norm;
  Linear mask_head;  // D -> S*D, ReLU
  Linear decoder;    // D -> window, overlap-add

  /// S < 1 or stride > window -> ConfigError.
  static TasNetModel random(const TasNetConfig& cfg, Rng& rng);

  std::size_t param_count() const noexcept;
  /// ceil(samples / stride); samples < stride -> UsageError.
  std::size_t frames_for(std::size_t samples) const;

  FeatureSequence encode(std::span<const float> wave) const;
  /// Overlap-add of the decoded frames, trimmed to `samples`.
  std::vector<float> decode(const FeatureSequence& frames, std::size_t samples) const;
  std::vector<float> reconstruct(std::span<const float> wave) const;
  /// Non-negative masks, one frames x D sequence per source.
  std::vector<FeatureSequence> masks(const FeatureSequence& encoded) const;
  std::vector<std::vector<float>> separate(std::span<const float> wave) const;
};

std::vector<std::vector<float>> tasnet_separate(const TasNetModel& model, std::span<const float> mix);

// --- recognition --------------------------------------------------------------

inline constexpr std::size_t kMelBins = 80;
inline constexpr std::size_t kConformerConvWidth = 31;

struct FeedForwardModule {
  LayerNorm norm;
  FeedForward ff;

  static FeedForwardModule random(std::size_t d_model, Rng& rng);
  std::size_t param_count() const noexcept { return norm.param_count() + ff.param_count(); }
  FeatureSequence operator()(const FeatureSequence& x) const { return ff(norm(x)); }
};

/// LN -> pointwise D->2D -> GLU -> depthwise conv ("same" padding) -> LN ->
/// SiLU -> pointwise D->D.
struct ConvModule {
  LayerNorm norm;
  Linear pointwise_in;
  Matrix depthwise;  // width x D
  std::vector<float> depthwise_bias;
  LayerNorm conv_norm;
  Linear pointwise_out;

  static ConvModule random(std::size_t d_model, Rng& rng, std::size_t width = kConformerConvWidth);
  std::size_t param_count() const noexcept;
  FeatureSequence operator()(const FeatureSequence& x) const;
};

/// Sequence mixer of a macaron block: LN then BiMamba or self-attention.
struct MixerModule {
  LayerNorm norm;
  std::optional<BiMambaBlock> mamba;
  std::optional<MultiHeadAttention> attention;

  std::size_t param_count() const noexcept;
  FeatureSequence operator()(const FeatureSequence& x) const;
};

/// Macaron block (ConMamba with a BiMamba mixer, Conformer with attention):
///   x1 = x  + s * FF1(x)
///   x2 = x1 + Mixer(x1)
///   x3 = x2 + Conv(x2)
///   y  = LayerNorm(x3 + s * FF2(x3)),   s = ff_scale = 1/2
class MacaronBlock {
 public:
  FeedForwardModule ff1;
  MixerModule mixer;
  ConvModule conv;
  FeedForwardModule ff2;
  LayerNorm final_norm;
  float ff_scale = 0.5f;

  static MacaronBlock random_conmamba(std::size_t d_model, Rng& rng);
  static MacaronBlock random_conformer(std::size_t d_model, std::size_t heads, Rng& rng);

  std::size_t param_count() const noexcept;

  struct Trace {
    FeatureSequence x1, x2, x3, y;
  };
  Trace trace(const FeatureSequence& x) const;
  FeatureSequence operator()(const FeatureSequence& x) const;
};

FeatureSequence conmamba_block(const MacaronBlock& block, const FeatureSequence& x);

/// Two stride-2, width-3, pad-1 convolutions over time with ReLU:
/// F frames -> ceil(F / 4) tokens.
struct ConvFrontend {
  Linear conv1;  // 3*mel -> D
  Linear conv2;  // 3*D -> D

  static ConvFrontend random(std::size_t mel_bins, std::size_t d_model, Rng& rng);
  std::size_t param_count() const noexcept { return conv1.param_count() + conv2.param_count(); }
  static std::size_t tokens_for_frames(std::size_t frames) noexcept { return (frames + 3) / 4; }
  FeatureSequence operator()(const FeatureSequence& mel) const;
};

struct AsrConfig {
  std::size_t d_model = 256;
  std::size_t encoder_layers = 12;
  std::size_t decoder_layers = 0;
  Backbone backbone = Backbone::mamba;
  std::size_t mel_bins = kMelBins;
  std::size_t heads = kDefaultHeads;
  std::size_t vocab = 256;  // decoder output units (synthetic)
};

class AsrModel {
 public:
  AsrConfig config;
  ConvFrontend frontend;
  std::vector<MacaronBlock> encoder;
  Embedding token_embedding;  // only with decoder layers
  std::vector<MambaDecoderLayer> mamba_decoder;
  std::vector<TransformerDecoderLayer> transformer_decoder;

  static AsrModel random(const AsrConfig& cfg, Rng& rng);

  std::size_t param_count() const noexcept;
  /// mel: frames x mel_bins at a 10 ms hop -> ceil(frames/4) x D.
  FeatureSequence encode(const FeatureSequence& mel) const;
  /// Decoder features for `tokens` attending to `memory`.
  FeatureSequence decode(std::span<const int> tokens, const FeatureSequence& memory) const;
};

// --- codec language model -------------------------------------------------------

struct CodecConfig {
  std::size_t d_model = 1024;
  std::size_t ar_layers = 12;
  std::size_t nar_layers = 12;
  Backbone ar_backbone = Backbone::mamba;
  Backbone nar_backbone = Backbone::mamba;
  bool feedforward = true;
  std::size_t heads = kDefaultHeads;
  std::size_t phoneme_vocab = 128;
  std::size_t codebooks = 8;
  std::size_t codebook_size = 1024;

  int eos() const noexcept { return static_cast<int>(codebook_size); }
  int bos() const noexcept { return static_cast<int>(codebook_size) + 1; }
  std::size_t code_vocab() const noexcept { return codebook_size + 2; }
};

/// Codes for several codebooks: length x codebooks, row-major.
struct CodeMatrix {
  std::size_t length = 0;
  std::size_t codebooks = 0;
  std::vector<int> codes;

  int operator()(std::size_t t, std::size_t j) const { return codes[t * codebooks + j]; }
  int& operator()(std::size_t t, std::size_t j) { return codes[t * codebooks + j]; }
  std::vector<int> column(std::size_t j) const;
};

struct Sampler {
  /// 0 = greedy (arg max, lowest index on ties).
  double temperature = 0.0;
  std::uint64_t seed = 0;
};

struct GenerateOptions {
  std::size_t max_steps = 0;
  bool stop_on_eos = true;
  /// Called after every generated step with the number of tokens so far.
  std::function<void(std::size_t)> on_step;
};

struct GenerateResult {
  std::vector<int> tokens;          // codebook-1 codes, EOS excluded
  std::vector<double> step_seconds;  // one entry per generated token
  bool hit_eos = false;
};

class CodecLm {
 public:
  CodecConfig config;
  Embedding phoneme_embedding;
  std::vector<Embedding> code_embeddings;  // one per codebook, code_vocab rows
  std::vector<MambaDecoderLayer> ar_mamba;
  std::vector<TransformerDecoderLayer> ar_transformer;
  LayerNorm ar_norm;
  Linear ar_head;  // D -> codebook_size + 1 (codes and EOS)
  Embedding stage_embedding;  // codebooks - 1 rows
  std::vector<MambaEncoderLayer> nar_mamba;
  std::vector<TransformerEncoderLayer> nar_transformer;
  LayerNorm nar_norm;
  std::vector<Linear> nar_heads;  // one per stage, D -> codebook_size

  static CodecLm random(const CodecConfig& cfg, Rng& rng);

  std::size_t param_count() const noexcept;
  std::size_t d_model() const noexcept { return config.d_model; }

  /// AR input embeddings for phonemes || BOS || enrollment || codes.
  FeatureSequence ar_inputs(std::span<const int> phonemes, std::span<const int> enrollment,
                            std::span<const int> codes) const;
  /// Teacher-forced logits for every position of the AR input sequence;
  /// row i scores the token at position i + 1.
  FeatureSequence ar_logits(std::span<const int> phonemes, std::span<const int> enrollment,
                            std::span<const int> codes) const;
  /// Hidden states of the AR stack (before the final norm).
  FeatureSequence ar_hidden(const FeatureSequence& inputs) const;

  /// Logits (T x codebook_size) of NAR stage j (2..codebooks) for the target
  /// codes known so far (columns < j-1 of `target`, 0-based).
  FeatureSequence nar_stage_logits(std::size_t stage, std::span<const int> phonemes, const CodeMatrix& enrollment,
                                   const CodeMatrix& target) const;
};

/// Incremental AR decoding: one layer state per AR layer (SsmState or
/// KvCache inside), plus the absolute position for positional encoding.
class ArSession {
 public:
  explicit ArSession(const CodecLm& lm);

  /// Feeds one input token of codebook-1 vocabulary (or a phoneme when
  /// `phoneme` is true) and returns the logits predicting the next token.
  std::span<const float> feed(int token, bool phoneme = false);
  std::size_t position() const noexcept { return position_; }

 private:
  const CodecLm* lm_;
  std::vector<MambaDecoderLayer::State> mamba_states_;
  std::vector<TransformerDecoderLayer::State> transformer_states_;
  std::size_t position_ = 0;
  Buffer<float> x_, y_, normed_, logits_;
};

/// Samples codebook-1 tokens one step at a time. Empty phonemes/enrollment or max_steps == 0 -> UsageError.
GenerateResult ar_generate(const CodecLm& lm, std::span<const int> phonemes, std::span<const int> enrollment,
                           const GenerateOptions& options, const Sampler& sampler = {});

/// Codebooks 2..8 for a length-T codebook-1 sequence: T x (codebooks - 1).
CodeMatrix nar_infer(const CodecLm& lm, std::span<const int> phonemes, const CodeMatrix& enrollment,
                     std::span<const int> codebook1);

/// Arg max with the lowest index winning ties.
int argmax(std::span<const float> v) noexcept;

}  // namespace mamba
