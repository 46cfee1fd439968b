#include "mamba/archs.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mamba/errors.hpp"

namespace mamba {
namespace {

void relu_inplace(std::span<float> v) noexcept {
  for (float& e : v) e = e > 0.0f ? e : 0.0f;
}

MambaConfig mamba_config(std::size_t d_model) {
  MambaConfig cfg;
  cfg.d_model = d_model;
  return cfg;
}

void check_channels(const FeatureSequence& x, std::size_t d, const char* who) {
  if (x.channels() != d) {
    throw ShapeError(std::string(who) + ": expected " + std::to_string(d) + " channels, got " +
                     std::to_string(x.channels()));
  }
}

// Width-3, stride-2, pad-1 convolution over time as im2col + projection.
FeatureSequence strided_conv(const FeatureSequence& x, const Linear& proj) {
  const std::size_t c = x.channels();
  const std::size_t out_len = (x.length() + 1) / 2;
  FeatureSequence cols(out_len, 3 * c);
  for (std::size_t t = 0; t < out_len; ++t) {
    for (std::size_t k = 0; k < 3; ++k) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(2 * t + k) - 1;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(x.length())) continue;
      const auto row = x.row(static_cast<std::size_t>(src));
      std::copy(row.begin(), row.end(), cols.row(t).begin() + static_cast<std::ptrdiff_t>(k * c));
    }
  }
  FeatureSequence y = proj(cols);
  relu_inplace(y.values());
  return y;
}

// Sum of the embeddings of every listed codebook at each time step.
FeatureSequence summed_codes(const std::vector<Embedding>& tables, const CodeMatrix& codes, std::size_t upto) {
  FeatureSequence out(codes.length, tables.front().table.cols());
  for (std::size_t t = 0; t < codes.length; ++t) {
    for (std::size_t j = 0; j < upto; ++j) tables[j].accumulate(codes(t, j), out.row(t));
  }
  return out;
}

}  // namespace

const char* to_string(Backbone b) noexcept { return b == Backbone::mamba ? "mamba" : "transformer"; }

// --- token geometry ---------------------------------------------------------

TokenResolution TokenResolution::from_ms(double ms) {
  if (!(ms > 0.0)) throw UsageError("token resolution must be positive");
  for (std::int64_t den = 1; den <= 1000; ++den) {
    const double scaled = ms * static_cast<double>(den);
    const double rounded = std::round(scaled);
    if (rounded >= 1.0 && std::abs(scaled - rounded) < 1e-6 * static_cast<double>(den)) {
      return TokenResolution{static_cast<std::int64_t>(rounded), den};
    }
  }
  throw UsageError("token resolution " + std::to_string(ms) + " ms is not a fraction with denominator <= 1000");
}

std::size_t tokens_for_duration(double duration_ms, TokenResolution resolution) {
  if (!(duration_ms > 0.0) || resolution.num_ms <= 0 || resolution.den <= 0) {
    throw UsageError("tokens_for_duration: duration and resolution must be positive");
  }
  const double tokens =
      duration_ms * static_cast<double>(resolution.den) / static_cast<double>(resolution.num_ms);
  return static_cast<std::size_t>(std::floor(tokens + 1e-9));
}

std::size_t tokens_for_duration(double duration_ms, double resolution_ms) {
  if (!(resolution_ms > 0.0)) throw UsageError("tokens_for_duration: resolution must be positive");
  return tokens_for_duration(duration_ms, TokenResolution::from_ms(resolution_ms));
}

// --- separation ---------------------------------------------------------------

TasNetModel TasNetModel::random(const TasNetConfig& cfg, Rng& rng) {
  if (cfg.sources < 1) throw ConfigError("TasNet: number of sources must be >= 1");
  if (cfg.stride == 0 || cfg.window < cfg.stride) throw ConfigError("TasNet: need 0 < stride <= window");
  if (cfg.d_model == 0) throw ConfigError("TasNet: d_model must be >= 1");
  TasNetModel m;
  m.config = cfg;
  m.encoder = Linear::random(cfg.window, cfg.d_model, rng, false);
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    if (cfg.backbone == Backbone::mamba) {
      m.mamba_layers.push_back(MambaEncoderLayer::random(mamba_config(cfg.d_model), cfg.feedforward, rng));
    } else {
      m.transformer_layers.push_back(TransformerEncoderLayer::random(cfg.d_model, cfg.heads, rng));
    }
  }
  m.out_norm = LayerNorm::identity(cfg.d_model);
  m.mask_head = Linear::random(cfg.d_model, cfg.sources * cfg.d_model, rng);
  m.decoder = Linear::random(cfg.d_model, cfg.window, rng, false);
  return m;
}

std::size_t TasNetModel::param_count() const noexcept {
  std::size_t n = encoder.param_count() + out_norm.param_count() + mask_head.param_count() + decoder.param_count();
  for (const auto& l : mamba_layers) n += l.param_count();
  for (const auto& l : transformer_layers) n += l.param_count();
  return n;
}

std::size_t TasNetModel::frames_for(std::size_t samples) const {
  if (samples < config.stride) {
    throw UsageError("TasNet: waveform of " + std::to_string(samples) + " samples is shorter than the stride");
  }
  return (samples + config.stride - 1) / config.stride;
}

FeatureSequence TasNetModel::encode(std::span<const float> wave) const {
  const std::size_t n = frames_for(wave.size());
  FeatureSequence frames(n, config.window);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t begin = i * config.stride;
    const std::size_t end = std::min(wave.size(), begin + config.window);
    std::copy(wave.begin() + static_cast<std::ptrdiff_t>(begin), wave.begin() + static_cast<std::ptrdiff_t>(end),
              frames.row(i).begin());
  }
  FeatureSequence enc = encoder(frames);
  relu_inplace(enc.values());
  return enc;
}

std::vector<float> TasNetModel::decode(const FeatureSequence& frames, std::size_t samples) const {
  check_channels(frames, config.d_model, "TasNet decode");
  const FeatureSequence basis = decoder(frames);
  const std::size_t full = frames.empty() ? 0 : (frames.length() - 1) * config.stride + config.window;
  Buffer<double> acc(std::max(full, samples), 0.0);
  for (std::size_t i = 0; i < frames.length(); ++i) {
    const auto row = basis.row(i);
    for (std::size_t k = 0; k < config.window; ++k) acc[i * config.stride + k] += row[k];
  }
  std::vector<float> out(samples);
  for (std::size_t s = 0; s < samples; ++s) out[s] = static_cast<float>(acc[s]);
  return out;
}

std::vector<float> TasNetModel::reconstruct(std::span<const float> wave) const {
  return decode(encode(wave), wave.size());
}

std::vector<FeatureSequence> TasNetModel::masks(const FeatureSequence& encoded) const {
  check_channels(encoded, config.d_model, "TasNet masknet");
  FeatureSequence h = encoded;
  if (!transformer_layers.empty()) add_sinusoidal_positions(h);
  for (const auto& l : mamba_layers) h = l(h);
  for (const auto& l : transformer_layers) h = l(h);
  FeatureSequence all = mask_head(out_norm(h));
  relu_inplace(all.values());
  std::vector<FeatureSequence> out;
  for (std::size_t s = 0; s < config.sources; ++s) out.push_back(slice_channels(all, s * config.d_model, config.d_model));
  return out;
}

std::vector<std::vector<float>> TasNetModel::separate(std::span<const float> wave) const {
  const FeatureSequence enc = encode(wave);
  std::vector<std::vector<float>> out;
  for (FeatureSequence& m : masks(enc)) {
    auto mv = m.values();
    const auto ev = enc.values();
    for (std::size_t i = 0; i < mv.size(); ++i) mv[i] *= ev[i];
    out.push_back(decode(m, wave.size()));
  }
  return out;
}

std::vector<std::vector<float>> tasnet_separate(const TasNetModel& model, std::span<const float> mix) {
  return model.separate(mix);
}

// --- recognition --------------------------------------------------------------

FeedForwardModule FeedForwardModule::random(std::size_t d_model, Rng& rng) {
  return FeedForwardModule{LayerNorm::identity(d_model), FeedForward::random(d_model, rng)};
}

ConvModule ConvModule::random(std::size_t d_model, Rng& rng, std::size_t width) {
  if (width == 0 || width % 2 == 0) throw ConfigError("conv module: width must be odd");
  ConvModule m;
  m.norm = LayerNorm::identity(d_model);
  m.pointwise_in = Linear::random(d_model, 2 * d_model, rng);
  m.depthwise = Matrix(width, d_model);
  const double sd = 1.0 / std::sqrt(static_cast<double>(width));
  for (float& v : m.depthwise.values()) v = static_cast<float>(rng.normal(0.0, sd));
  m.depthwise_bias.assign(d_model, 0.0f);
  m.conv_norm = LayerNorm::identity(d_model);
  m.pointwise_out = Linear::random(d_model, d_model, rng);
  return m;
}

std::size_t ConvModule::param_count() const noexcept {
  return norm.param_count() + pointwise_in.param_count() + depthwise.size() + depthwise_bias.size() +
         conv_norm.param_count() + pointwise_out.param_count();
}

FeatureSequence ConvModule::operator()(const FeatureSequence& x) const {
  const std::size_t d = x.channels();
  FeatureSequence glu(x.length(), d);
  {
    const FeatureSequence h = pointwise_in(norm(x));
    for (std::size_t t = 0; t < x.length(); ++t) {
      const auto r = h.row(t);
      auto o = glu.row(t);
      for (std::size_t c = 0; c < d; ++c) o[c] = r[c] / (1.0f + std::exp(-r[d + c]));
    }
  }
  FeatureSequence h = conv_norm(depthwise_conv1d(glu, depthwise, depthwise_bias, (depthwise.rows() - 1) / 2));
  silu_inplace(h.values());
  return pointwise_out(h);
}

std::size_t MixerModule::param_count() const noexcept {
  return norm.param_count() + (mamba ? mamba->param_count() : 0) + (attention ? attention->param_count() : 0);
}

FeatureSequence MixerModule::operator()(const FeatureSequence& x) const {
  if (mamba) return (*mamba)(norm(x));
  return attention->self_attention(norm(x));
}

MacaronBlock MacaronBlock::random_conmamba(std::size_t d_model, Rng& rng) {
  MacaronBlock b;
  b.ff1 = FeedForwardModule::random(d_model, rng);
  b.mixer.norm = LayerNorm::identity(d_model);
  b.mixer.mamba = BiMambaBlock::random(mamba_config(d_model), rng);
  b.conv = ConvModule::random(d_model, rng);
  b.ff2 = FeedForwardModule::random(d_model, rng);
  b.final_norm = LayerNorm::identity(d_model);
  return b;
}

MacaronBlock MacaronBlock::random_conformer(std::size_t d_model, std::size_t heads, Rng& rng) {
  MacaronBlock b;
  b.ff1 = FeedForwardModule::random(d_model, rng);
  b.mixer.norm = LayerNorm::identity(d_model);
  b.mixer.attention = MultiHeadAttention::random(d_model, heads, rng);
  b.conv = ConvModule::random(d_model, rng);
  b.ff2 = FeedForwardModule::random(d_model, rng);
  b.final_norm = LayerNorm::identity(d_model);
  return b;
}

std::size_t MacaronBlock::param_count() const noexcept {
  return ff1.param_count() + mixer.param_count() + conv.param_count() + ff2.param_count() +
         final_norm.param_count();
}

MacaronBlock::Trace MacaronBlock::trace(const FeatureSequence& x) const {
  Trace tr;
  tr.x1 = x;
  add_inplace(tr.x1, ff1(x), ff_scale);
  tr.x2 = tr.x1;
  add_inplace(tr.x2, mixer(tr.x1));
  tr.x3 = tr.x2;
  add_inplace(tr.x3, conv(tr.x2));
  FeatureSequence pre = tr.x3;
  add_inplace(pre, ff2(tr.x3), ff_scale);
  tr.y = final_norm(pre);
  return tr;
}

FeatureSequence MacaronBlock::operator()(const FeatureSequence& x) const {
  FeatureSequence h = x;
  add_inplace(h, ff1(h), ff_scale);
  add_inplace(h, mixer(h));
  add_inplace(h, conv(h));
  add_inplace(h, ff2(h), ff_scale);
  return final_norm(h);
}

FeatureSequence conmamba_block(const MacaronBlock& block, const FeatureSequence& x) { return block(x); }

ConvFrontend ConvFrontend::random(std::size_t mel_bins, std::size_t d_model, Rng& rng) {
  return ConvFrontend{Linear::random(3 * mel_bins, d_model, rng), Linear::random(3 * d_model, d_model, rng)};
}

FeatureSequence ConvFrontend::operator()(const FeatureSequence& mel) const {
  check_channels(mel, conv1.in_features() / 3, "conv frontend");
  return strided_conv(strided_conv(mel, conv1), conv2);
}

AsrModel AsrModel::random(const AsrConfig& cfg, Rng& rng) {
  if (cfg.d_model == 0 || cfg.mel_bins == 0) throw ConfigError("ASR: d_model and mel_bins must be >= 1");
  AsrModel m;
  m.config = cfg;
  m.frontend = ConvFrontend::random(cfg.mel_bins, cfg.d_model, rng);
  for (std::size_t i = 0; i < cfg.encoder_layers; ++i) {
    m.encoder.push_back(cfg.backbone == Backbone::mamba ? MacaronBlock::random_conmamba(cfg.d_model, rng)
                                                        : MacaronBlock::random_conformer(cfg.d_model, cfg.heads, rng));
  }
  if (cfg.decoder_layers > 0) {
    m.token_embedding = Embedding::random(cfg.vocab, cfg.d_model, rng);
    for (std::size_t i = 0; i < cfg.decoder_layers; ++i) {
      if (cfg.backbone == Backbone::mamba) {
        m.mamba_decoder.push_back(MambaDecoderLayer::random(mamba_config(cfg.d_model), true, true, rng));
      } else {
        m.transformer_decoder.push_back(TransformerDecoderLayer::random(cfg.d_model, cfg.heads, true, rng));
      }
    }
  }
  return m;
}

std::size_t AsrModel::param_count() const noexcept {
  std::size_t n = frontend.param_count() + token_embedding.param_count();
  for (const auto& b : encoder) n += b.param_count();
  for (const auto& l : mamba_decoder) n += l.param_count();
  for (const auto& l : transformer_decoder) n += l.param_count();
  return n;
}

FeatureSequence AsrModel::encode(const FeatureSequence& mel) const {
  FeatureSequence h = frontend(mel);
  if (config.backbone == Backbone::transformer) add_sinusoidal_positions(h);
  for (const auto& b : encoder) h = b(h);
  return h;
}

FeatureSequence AsrModel::decode(std::span<const int> tokens, const FeatureSequence& memory) const {
  if (config.decoder_layers == 0) throw UsageError("ASR: model has no decoder layers");
  FeatureSequence h = token_embedding.lookup(tokens);
  if (config.backbone == Backbone::transformer) add_sinusoidal_positions(h);
  for (const auto& l : mamba_decoder) h = l(h, &memory);
  for (const auto& l : transformer_decoder) h = l(h, &memory);
  return h;
}

// --- codec language model -------------------------------------------------------

std::vector<int> CodeMatrix::column(std::size_t j) const {
  std::vector<int> out(length);
  for (std::size_t t = 0; t < length; ++t) out[t] = (*this)(t, j);
  return out;
}

CodecLm CodecLm::random(const CodecConfig& cfg, Rng& rng) {
  if (cfg.d_model == 0 || cfg.codebooks < 2 || cfg.codebook_size == 0 || cfg.phoneme_vocab == 0) {
    throw ConfigError("codec LM: need d_model >= 1, >= 2 codebooks and non-empty vocabularies");
  }
  CodecLm m;
  m.config = cfg;
  m.phoneme_embedding = Embedding::random(cfg.phoneme_vocab, cfg.d_model, rng);
  for (std::size_t j = 0; j < cfg.codebooks; ++j) {
    m.code_embeddings.push_back(Embedding::random(cfg.code_vocab(), cfg.d_model, rng));
  }
  for (std::size_t i = 0; i < cfg.ar_layers; ++i) {
    if (cfg.ar_backbone == Backbone::mamba) {
      m.ar_mamba.push_back(MambaDecoderLayer::random(mamba_config(cfg.d_model), cfg.feedforward, false, rng));
    } else {
      m.ar_transformer.push_back(TransformerDecoderLayer::random(cfg.d_model, cfg.heads, false, rng));
    }
  }
  m.ar_norm = LayerNorm::identity(cfg.d_model);
  m.ar_head = Linear::random(cfg.d_model, cfg.codebook_size + 1, rng);
  m.stage_embedding = Embedding::random(cfg.codebooks - 1, cfg.d_model, rng);
  for (std::size_t i = 0; i < cfg.nar_layers; ++i) {
    if (cfg.nar_backbone == Backbone::mamba) {
      m.nar_mamba.push_back(MambaEncoderLayer::random(mamba_config(cfg.d_model), cfg.feedforward, rng));
    } else {
      m.nar_transformer.push_back(TransformerEncoderLayer::random(cfg.d_model, cfg.heads, rng));
    }
  }
  m.nar_norm = LayerNorm::identity(cfg.d_model);
  for (std::size_t j = 1; j < cfg.codebooks; ++j) {
    m.nar_heads.push_back(Linear::random(cfg.d_model, cfg.codebook_size, rng));
  }
  return m;
}

std::size_t CodecLm::param_count() const noexcept {
  std::size_t n = phoneme_embedding.param_count() + ar_norm.param_count() + ar_head.param_count() +
                  stage_embedding.param_count() + nar_norm.param_count();
  for (const auto& e : code_embeddings) n += e.param_count();
  for (const auto& l : ar_mamba) n += l.param_count();
  for (const auto& l : ar_transformer) n += l.param_count();
  for (const auto& l : nar_mamba) n += l.param_count();
  for (const auto& l : nar_transformer) n += l.param_count();
  for (const auto& h : nar_heads) n += h.param_count();
  return n;
}

FeatureSequence CodecLm::ar_inputs(std::span<const int> phonemes, std::span<const int> enrollment,
                                   std::span<const int> codes) const {
  const std::size_t total = phonemes.size() + 1 + enrollment.size() + codes.size();
  FeatureSequence x(total, config.d_model);
  std::size_t t = 0;
  for (int p : phonemes) phoneme_embedding.accumulate(p, x.row(t++));
  code_embeddings[0].accumulate(config.bos(), x.row(t++));
  for (int c : enrollment) code_embeddings[0].accumulate(c, x.row(t++));
  for (int c : codes) code_embeddings[0].accumulate(c, x.row(t++));
  if (config.ar_backbone == Backbone::transformer) add_sinusoidal_positions(x);
  return x;
}

FeatureSequence CodecLm::ar_hidden(const FeatureSequence& inputs) const {
  check_channels(inputs, config.d_model, "AR stack");
  FeatureSequence h = inputs;
  for (const auto& l : ar_mamba) h = l(h);
  for (const auto& l : ar_transformer) h = l(h);
  return h;
}

FeatureSequence CodecLm::ar_logits(std::span<const int> phonemes, std::span<const int> enrollment,
                                   std::span<const int> codes) const {
  return ar_head(ar_norm(ar_hidden(ar_inputs(phonemes, enrollment, codes))));
}

FeatureSequence CodecLm::nar_stage_logits(std::size_t stage, std::span<const int> phonemes,
                                          const CodeMatrix& enrollment, const CodeMatrix& target) const {
  if (stage < 2 || stage > config.codebooks) {
    throw UsageError("NAR stage must be in 2.." + std::to_string(config.codebooks));
  }
  if (enrollment.codebooks != config.codebooks) throw ShapeError("NAR: enrollment must carry every codebook");
  if (target.codebooks < stage - 1) throw ShapeError("NAR: target lacks the codebooks below the stage");

  const FeatureSequence ph = phoneme_embedding.lookup(phonemes);
  const FeatureSequence en = summed_codes(code_embeddings, enrollment, config.codebooks);
  const FeatureSequence tg = summed_codes(code_embeddings, target, stage - 1);
  const FeatureSequence* parts[] = {&ph, &en, &tg};
  FeatureSequence h = concat_rows(parts);
  const auto stage_row = stage_embedding.table.row(stage - 2);
  for (std::size_t t = 0; t < h.length(); ++t) {
    auto r = h.row(t);
    for (std::size_t c = 0; c < r.size(); ++c) r[c] += stage_row[c];
  }
  if (config.nar_backbone == Backbone::transformer) add_sinusoidal_positions(h);
  for (const auto& l : nar_mamba) h = l(h);
  for (const auto& l : nar_transformer) h = l(h);
  const FeatureSequence tail = slice_rows(h, h.length() - target.length, h.length());
  return nar_heads[stage - 2](nar_norm(tail));
}

// --- AR session ---------------------------------------------------------------

ArSession::ArSession(const CodecLm& lm)
    : lm_(&lm),
      x_(lm.d_model()),
      y_(lm.d_model()),
      normed_(lm.d_model()),
      logits_(lm.ar_head.out_features()) {
  for (const auto& l : lm.ar_mamba) mamba_states_.push_back(l.initial_state());
  for (const auto& l : lm.ar_transformer) transformer_states_.push_back(l.initial_state());
}

std::span<const float> ArSession::feed(int token, bool phoneme) {
  std::fill(x_.begin(), x_.end(), 0.0f);
  if (phoneme) {
    lm_->phoneme_embedding.accumulate(token, x_);
  } else {
    lm_->code_embeddings[0].accumulate(token, x_);
  }
  if (lm_->config.ar_backbone == Backbone::transformer) {
    sinusoidal_row(position_, normed_);
    for (std::size_t c = 0; c < x_.size(); ++c) x_[c] += normed_[c];
  }
  for (std::size_t i = 0; i < mamba_states_.size(); ++i) {
    lm_->ar_mamba[i].step(mamba_states_[i], x_, y_);
    std::swap(x_, y_);
  }
  for (std::size_t i = 0; i < transformer_states_.size(); ++i) {
    lm_->ar_transformer[i].step(transformer_states_[i], x_, y_);
    std::swap(x_, y_);
  }
  lm_->ar_norm.apply_row(x_, normed_);
  lm_->ar_head.apply_row(normed_, logits_);
  ++position_;
  return logits_;
}

int argmax(std::span<const float> v) noexcept {
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

namespace {

int sample(std::span<const float> logits, const Sampler& sampler, Rng& rng) {
  if (sampler.temperature <= 0.0) return argmax(logits);
  double top = -INFINITY;
  for (float v : logits) top = std::max(top, static_cast<double>(v));
  std::vector<double> w(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    w[i] = std::exp((static_cast<double>(logits[i]) - top) / sampler.temperature);
    z += w[i];
  }
  double u = rng.uniform() * z;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (u < w[i]) return static_cast<int>(i);
    u -= w[i];
  }
  return static_cast<int>(w.size() - 1);
}

}  // namespace

GenerateResult ar_generate(const CodecLm& lm, std::span<const int> phonemes, std::span<const int> enrollment,
                           const GenerateOptions& options, const Sampler& sampler) {
  if (phonemes.empty() || enrollment.empty()) throw UsageError("ar_generate: phonemes and enrollment must be non-empty");
  if (options.max_steps == 0) throw UsageError("ar_generate: max_steps must be > 0");

  ArSession session(lm);
  for (int p : phonemes) session.feed(p, true);
  session.feed(lm.config.bos());
  std::span<const float> logits;
  for (int c : enrollment) logits = session.feed(c);

  Rng rng(sampler.seed);
  const std::size_t code_only = lm.config.codebook_size;  // logits without EOS
  GenerateResult out;
  out.tokens.reserve(options.max_steps);
  out.step_seconds.reserve(options.max_steps);
  for (std::size_t s = 0; s < options.max_steps; ++s) {
    const auto t0 = std::chrono::steady_clock::now();
    const int token = sample(options.stop_on_eos ? logits : logits.first(code_only), sampler, rng);
    if (token == lm.config.eos()) {
      out.hit_eos = true;
      break;
    }
    out.tokens.push_back(token);
    logits = session.feed(token);
    out.step_seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    if (options.on_step) options.on_step(out.tokens.size());
  }
  return out;
}

CodeMatrix nar_infer(const CodecLm& lm, std::span<const int> phonemes, const CodeMatrix& enrollment,
                     std::span<const int> codebook1) {
  const std::size_t books = lm.config.codebooks;
  CodeMatrix target{codebook1.size(), books, std::vector<int>(codebook1.size() * books, 0)};
  for (std::size_t t = 0; t < codebook1.size(); ++t) target(t, 0) = codebook1[t];
  for (std::size_t stage = 2; stage <= books; ++stage) {
    const FeatureSequence logits = lm.nar_stage_logits(stage, phonemes, enrollment, target);
    for (std::size_t t = 0; t < target.length; ++t) target(t, stage - 1) = argmax(logits.row(t));
  }
  CodeMatrix out{target.length, books - 1, std::vector<int>(target.length * (books - 1))};
  for (std::size_t t = 0; t < target.length; ++t)
    for (std::size_t j = 1; j < books; ++j) out(t, j - 1) = target(t, j);
  return out;
}

}  // namespace mamba
