#include <doctest.h>

#include <algorithm>
#include <set>

#include "mamba/archs.hpp"
#include "mamba/errors.hpp"

using namespace mamba;

namespace {

void zero(Linear& l) {
  for (float& v : l.weight.values()) v = 0.0f;
  for (float& v : l.bias) v = 0.0f;
}

std::vector<float> noise(std::size_t n, Rng& rng) {
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.normal(0.0, 0.1));
  return v;
}

std::vector<int> ids(std::size_t n, std::size_t vocab, Rng& rng) {
  std::vector<int> v(n);
  for (int& t : v) t = static_cast<int>(rng.below(vocab));
  return v;
}

CodecLm small_lm(Backbone ar, Backbone nar, std::uint64_t seed) {
  CodecConfig cfg;
  cfg.d_model = 32;
  cfg.ar_layers = 2;
  cfg.nar_layers = 2;
  cfg.ar_backbone = ar;
  cfg.nar_backbone = nar;
  cfg.heads = 4;
  cfg.phoneme_vocab = 20;
  cfg.codebook_size = 50;
  Rng rng(seed);
  return CodecLm::random(cfg, rng);
}

FeatureSequence plus_scaled(const FeatureSequence& a, const FeatureSequence& b, float s) {
  FeatureSequence out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = a.values()[i] + s * b.values()[i];
  return out;
}

}  // namespace

TEST_CASE("tokens for ten seconds per token resolution") {
  CHECK(tokens_for_duration(10000.0, TokenResolution{1, 1}) == 10000);
  CHECK(tokens_for_duration(10000.0, TokenResolution{40, 1}) == 250);
  CHECK(tokens_for_duration(10000.0, TokenResolution{40, 3}) == 750);
  CHECK(tokens_for_duration(10000.0, 40.0 / 3.0) == 750);
  CHECK(tokens_for_duration(10000.0, 1.0) == 10000);
  CHECK(tokens_for_duration(39.0, 40.0) == 0);
  CHECK(tokens_for_duration(1000.0, 40.0 / 3.0) == 75);
  CHECK(TokenResolution::from_ms(40.0 / 3.0).num_ms == 40);
  CHECK(TokenResolution::from_ms(40.0 / 3.0).den == 3);
  CHECK_THROWS_AS(tokens_for_duration(1000.0, 0.0), UsageError);
  CHECK_THROWS_AS(tokens_for_duration(-1.0, 1.0), UsageError);
}

TEST_CASE("TasNet geometry") {
  Rng rng(1);
  TasNetConfig cfg;
  cfg.d_model = 16;
  cfg.layers = 2;
  const auto model = TasNetModel::random(cfg, rng);
  SUBCASE("one token per millisecond at 8 kHz") {
    CHECK(model.frames_for(80000) == 10000);
    CHECK(model.encode(noise(8000, rng)).length() == 1000);
  }
  SUBCASE("outputs keep the input length") {
    for (std::size_t n : {8u, 15u, 257u, 8000u}) {
      const auto out = model.separate(noise(n, rng));
      REQUIRE(out.size() == 2);
      CHECK(out[0].size() == n);
      CHECK(out[1].size() == n);
    }
  }
  SUBCASE("too short and bad configs") {
    CHECK_THROWS_AS(model.separate(noise(7, rng)), UsageError);
    TasNetConfig bad = cfg;
    bad.sources = 0;
    CHECK_THROWS_AS(TasNetModel::random(bad, rng), ConfigError);
    bad = cfg;
    bad.stride = 32;
    CHECK_THROWS_AS(TasNetModel::random(bad, rng), ConfigError);
  }
}

TEST_CASE("TasNet with unit masks returns the reconstruction per source") {
  Rng rng(2);
  TasNetConfig cfg;
  cfg.d_model = 16;
  cfg.layers = 1;
  cfg.sources = 3;
  auto model = TasNetModel::random(cfg, rng);
  for (float& v : model.mask_head.weight.values()) v = 0.0f;
  for (float& v : model.mask_head.bias) v = 1.0f;
  const auto wave = noise(200, rng);
  const auto out = model.separate(wave);
  const auto rec = model.reconstruct(wave);
  REQUIRE(out.size() == 3);
  for (const auto& s : out) CHECK(s == rec);
  SUBCASE("masks are the ReLU of the head") {
    for (float& v : model.mask_head.bias) v = -1.0f;
    for (const auto& s : model.separate(wave)) CHECK(std::all_of(s.begin(), s.end(), [](float v) { return v == 0.0f; }));
  }
}

TEST_CASE("TasNet full-scale shapes") {
  Rng rng(3);
  TasNetConfig cfg;
  cfg.d_model = 32;
  cfg.layers = 1;
  const auto model = TasNetModel::random(cfg, rng);
  for (std::size_t n : {8000u, 80000u, 160000u}) {
    const auto wave = noise(n, rng);
    CHECK(model.encode(wave).length() == n / 8);
    CHECK(model.separate(wave)[1].size() == n);
  }
}

TEST_CASE("macaron block algebra") {
  Rng rng(4);
  const auto x = random_sequence(15, 16, rng);
  for (bool mamba : {true, false}) {
    CAPTURE(mamba);
    auto block = mamba ? MacaronBlock::random_conmamba(16, rng) : MacaronBlock::random_conformer(16, 4, rng);
    SUBCASE("half-step feedforwards and residuals") {
      const auto tr = block.trace(x);
      CHECK(max_abs_diff(tr.x1, plus_scaled(x, block.ff1(x), 0.5f)) < 1e-6);
      CHECK(max_abs_diff(tr.x2, add(tr.x1, block.mixer(tr.x1))) < 1e-6);
      CHECK(max_abs_diff(tr.x3, add(tr.x2, block.conv(tr.x2))) < 1e-6);
      CHECK(max_abs_diff(tr.y, block.final_norm(plus_scaled(tr.x3, block.ff2(tr.x3), 0.5f))) < 1e-6);
      CHECK(tr.y == block(x));
    }
    SUBCASE("zero weights reduce to the final layer norm") {
      zero(block.ff1.ff.down);
      zero(block.ff2.ff.down);
      if (block.mixer.mamba) {
        for (float& v : block.mixer.mamba->out_proj.weight.values()) v = 0.0f;
      } else {
        zero(block.mixer.attention->o_proj);
      }
      zero(block.conv.pointwise_out);
      CHECK(max_abs_diff(block(x), layer_norm(x, block.final_norm.gain, block.final_norm.bias)) < 1e-6);
    }
  }
  SUBCASE("conmamba_block is the ConMamba macaron block") {
    const auto block = MacaronBlock::random_conmamba(16, rng);
    CHECK(block.mixer.mamba.has_value());
    CHECK_FALSE(block.mixer.attention.has_value());
    CHECK(conmamba_block(block, x) == block(x));
    CHECK(block.conv.depthwise.rows() == kConformerConvWidth);
  }
}

TEST_CASE("conv module sees a bounded neighbourhood") {
  Rng rng(5);
  const auto conv = ConvModule::random(8, rng, 5);
  const auto x = random_sequence(30, 8, rng);
  auto x2 = x;
  x2(15, 0) += 1.0f;
  const auto a = conv(x), b = conv(x2);
  for (std::size_t t = 0; t < 30; ++t) {
    const bool inside = t >= 13 && t <= 17;
    CAPTURE(t);
    CHECK((max_abs_diff(a.row(t), b.row(t)) > 0.0) == inside);
  }
}

TEST_CASE("ASR frontend downsamples four times") {
  Rng rng(6);
  AsrConfig cfg;
  cfg.d_model = 16;
  cfg.encoder_layers = 1;
  cfg.decoder_layers = 1;
  cfg.mel_bins = 10;
  cfg.heads = 4;
  for (Backbone b : {Backbone::mamba, Backbone::transformer}) {
    cfg.backbone = b;
    const auto model = AsrModel::random(cfg, rng);
    for (std::size_t frames : {1u, 4u, 5u, 250u, 1001u}) {
      CHECK(ConvFrontend::tokens_for_frames(frames) == (frames + 3) / 4);
      const auto enc = model.encode(random_sequence(frames, 10, rng));
      CHECK(enc.length() == (frames + 3) / 4);
      CHECK(enc.channels() == 16);
    }
    const auto memory = model.encode(random_sequence(40, 10, rng));
    const std::vector<int> tokens = {1, 2, 3};
    CHECK(model.decode(tokens, memory).length() == 3);
  }
  SUBCASE("1000 frames of 10 ms are 250 tokens of 40 ms") {
    CHECK(ConvFrontend::tokens_for_frames(1000) == tokens_for_duration(10000.0, 40.0));
  }
}

TEST_CASE("codec LM: teacher-forced and incremental logits agree") {
  for (Backbone b : {Backbone::mamba, Backbone::transformer}) {
    CAPTURE(to_string(b));
    const auto lm = small_lm(b, b, 7);
    Rng rng(8);
    const auto phon = ids(6, 20, rng), enroll = ids(8, 50, rng), codes = ids(12, 50, rng);
    const auto batch = lm.ar_logits(phon, enroll, codes);
    REQUIRE(batch.length() == 6 + 1 + 8 + 12);
    CHECK(batch.channels() == 51);
    ArSession s(lm);
    std::size_t row = 0;
    double err = 0.0;
    const auto cmp = [&](std::span<const float> l) { err = std::max(err, max_abs_diff(l, batch.row(row++))); };
    for (int p : phon) cmp(s.feed(p, true));
    cmp(s.feed(lm.config.bos()));
    for (int c : enroll) cmp(s.feed(c));
    for (int c : codes) cmp(s.feed(c));
    CHECK(err < 1e-4);
    CHECK(s.position() == batch.length());
  }
}

TEST_CASE("codec LM: AR stack is causal") {
  for (Backbone b : {Backbone::mamba, Backbone::transformer}) {
    const auto lm = small_lm(b, b, 9);
    Rng rng(10);
    const auto phon = ids(4, 20, rng), enroll = ids(5, 50, rng);
    auto codes = ids(10, 50, rng);
    const auto a = lm.ar_logits(phon, enroll, codes);
    codes[6] = (codes[6] + 7) % 50;
    const auto c = lm.ar_logits(phon, enroll, codes);
    const std::size_t cut = 4 + 1 + 5 + 6;
    CHECK(slice_rows(a, 0, cut) == slice_rows(c, 0, cut));
    CHECK(max_abs_diff(a.row(cut), c.row(cut)) > 0.0);
  }
}

TEST_CASE("codec LM: generation") {
  const auto lm = small_lm(Backbone::mamba, Backbone::mamba, 11);
  Rng rng(12);
  const auto phon = ids(5, 20, rng), enroll = ids(6, 50, rng);
  GenerateOptions opts;
  opts.max_steps = 40;
  SUBCASE("greedy is deterministic and follows the arg max") {
    const auto r1 = ar_generate(lm, phon, enroll, opts);
    const auto r2 = ar_generate(lm, phon, enroll, opts);
    CHECK(r1.tokens == r2.tokens);
    CHECK(r1.tokens.size() <= 40);
    CHECK(r1.step_seconds.size() == r1.tokens.size());
    if (!r1.tokens.empty()) {
      const auto logits = lm.ar_logits(phon, enroll, {});
      CHECK(r1.tokens[0] == argmax(logits.row(logits.length() - 1)));
    }
  }
  SUBCASE("seeded sampling is reproducible") {
    const auto r1 = ar_generate(lm, phon, enroll, opts, Sampler{1.0, 5});
    const auto r2 = ar_generate(lm, phon, enroll, opts, Sampler{1.0, 5});
    CHECK(r1.tokens == r2.tokens);
    for (int t : r1.tokens) {
      CHECK(t >= 0);
      CHECK(t < 50);
    }
  }
  SUBCASE("fixed-length decoding ignores EOS and reports every step") {
    opts.stop_on_eos = false;
    std::vector<std::size_t> seen;
    opts.on_step = [&](std::size_t n) { seen.push_back(n); };
    const auto r = ar_generate(lm, phon, enroll, opts, Sampler{1.0, 3});
    CHECK(r.tokens.size() == 40);
    CHECK_FALSE(r.hit_eos);
    CHECK(seen.size() == 40);
    CHECK(seen.back() == 40);
  }
  SUBCASE("usage errors") {
    CHECK_THROWS_AS(ar_generate(lm, {}, enroll, opts), UsageError);
    CHECK_THROWS_AS(ar_generate(lm, phon, {}, opts), UsageError);
    opts.max_steps = 0;
    CHECK_THROWS_AS(ar_generate(lm, phon, enroll, opts), UsageError);
  }
}

TEST_CASE("codec LM: NAR stages") {
  for (Backbone b : {Backbone::mamba, Backbone::transformer}) {
    const auto lm = small_lm(b, b, 13);
    Rng rng(14);
    const auto phon = ids(5, 20, rng);
    CodeMatrix enroll{6, 8, ids(6 * 8, 50, rng)};
    const auto cb1 = ids(9, 50, rng);
    const auto out = nar_infer(lm, phon, enroll, cb1);
    CHECK(out.length == 9);
    CHECK(out.codebooks == 7);
    CHECK(std::all_of(out.codes.begin(), out.codes.end(), [](int c) { return c >= 0 && c < 50; }));

    SUBCASE("stage logits depend on the codebook-1 tokens") {
      CodeMatrix target{9, 1, cb1};
      const auto a = lm.nar_stage_logits(2, phon, enroll, target);
      CHECK(a.length() == 9);
      CHECK(a.channels() == 50);
      target.codes[0] = (target.codes[0] + 1) % 50;
      CHECK(max_abs_diff(a, lm.nar_stage_logits(2, phon, enroll, target)) > 0.0);
    }
    SUBCASE("stage checks") {
      CodeMatrix target{9, 1, cb1};
      CHECK_THROWS_AS(lm.nar_stage_logits(1, phon, enroll, target), UsageError);
      CHECK_THROWS_AS(lm.nar_stage_logits(9, phon, enroll, target), UsageError);
      CHECK_THROWS_AS(lm.nar_stage_logits(3, phon, enroll, target), ShapeError);
    }
  }
}

TEST_CASE("argmax takes the lowest index on ties") {
  const std::vector<float> v = {0.5f, 2.0f, 2.0f, -1.0f};
  CHECK(argmax(v) == 1);
}
