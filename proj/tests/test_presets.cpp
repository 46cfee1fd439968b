#include <doctest.h>

#include "mamba/errors.hpp"
#include "mamba/presets.hpp"

using namespace mamba;

namespace {

struct Row {
  const char* name;
  std::size_t dim;
  std::size_t first;   // encoder or AR layers (as printed)
  std::size_t second;  // decoder or NAR layers
  double res_ms;
  std::size_t tokens_10s;
};

// Model configuration table: dimension, layers, token resolution and tokens for 10 s.
const Row kTable[] = {
    {"sepformer", 256, 16, 0, 1.0, 10000},        {"mamba-tasnet-m", 256, 32, 0, 1.0, 10000},
    {"mamba-tasnet-l", 512, 32, 0, 1.0, 10000},   {"conformer-s", 144, 12, 4, 40.0, 250},
    {"conmamba-s", 144, 12, 4, 40.0, 250},        {"conformer-l", 512, 12, 6, 40.0, 250},
    {"conmamba-l", 512, 12, 6, 40.0, 250},        {"conformer-ctc", 256, 18, 0, 40.0, 250},
    {"conmamba-ctc", 256, 18, 0, 40.0, 250},      {"vall-e", 1024, 12, 12, 40.0 / 3.0, 750},
    {"vall-m", 1024, 12, 12, 40.0 / 3.0, 750},    {"vall-me", 1024, 12, 12, 40.0 / 3.0, 750},
};

}  // namespace

TEST_CASE("catalog reproduces the configuration table") {
  CHECK(preset_catalog().size() == std::size(kTable));
  for (const auto& row : kTable) {
    CAPTURE(row.name);
    const auto p = load_preset(row.name);
    CHECK(p.dim == row.dim);
    CHECK(p.token_res_ms() == doctest::Approx(row.res_ms).epsilon(1e-12));
    CHECK(p.tokens_for_seconds(10.0) == row.tokens_10s);
    if (p.task == Task::tts) {
      CHECK(p.ar_layers == row.first);
      CHECK(p.nar_layers == row.second);
    } else {
      CHECK(p.encoder_layers == row.first);
      CHECK(p.decoder_layers == row.second);
    }
  }
}

TEST_CASE("specific presets") {
  const auto m = load_preset("mamba-tasnet-m");
  CHECK(m.dim == 256);
  CHECK(m.stack_depth() == 32);
  CHECK(m.token_res_ms() == 1.0);
  CHECK_FALSE(m.feedforward);
  CHECK(m.backbone == Backbone::mamba);

  const auto l = load_preset("conmamba-l");
  CHECK(l.dim == 512);
  CHECK(l.encoder_layers == 12);
  CHECK(l.decoder_layers == 6);
  CHECK(l.token_res_ms() == 40.0);

  const auto sep = load_preset("sepformer");
  CHECK(sep.dual_path_repeat == 2);
  CHECK(sep.stack_depth() == 32);
  CHECK(sep.backbone == Backbone::transformer);

  const auto vm = load_preset("vall-m");
  CHECK(vm.feedforward);
  CHECK(vm.backbone == Backbone::mamba);
  CHECK(vm.nar_backbone == Backbone::mamba);
  const auto vme = load_preset("vall-me");
  CHECK(vme.backbone == Backbone::transformer);
  CHECK(vme.nar_backbone == Backbone::mamba);
}

TEST_CASE("unknown preset names") {
  CHECK_THROWS_AS(load_preset("mamba-tasnet-xl"), UsageError);
  try {
    load_preset("nope");
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()).find("vall-m") != std::string::npos);
  }
}

TEST_CASE("JSON schema round trip") {
  for (const auto& p : preset_catalog()) {
    CAPTURE(p.name);
    const auto j = p.to_json();
    CHECK(j.at("name") == p.name);
    CHECK(j.contains("layers"));
    CHECK(j.contains("token_res_ms"));
    const auto q = ModelPreset::from_json(j);
    CHECK(q.to_json() == j);
    CHECK(q.tokens_for_seconds(10.0) == p.tokens_for_seconds(10.0));
  }
  SUBCASE("minimal document") {
    const auto j = nlohmann::json::parse(R"({"name": "tiny", "dim": 8, "layers": {"encoder": 2, "decoder": 1},
        "token_res_ms": 40, "task": "asr", "feedforward": true})");
    const auto p = ModelPreset::from_json(j);
    CHECK(p.encoder_layers == 2);
    CHECK(p.backbone == Backbone::mamba);
    CHECK(p.tokens_for_seconds(1.0) == 25);
  }
  SUBCASE("schema violations") {
    auto bad = load_preset("vall-m").to_json();
    bad["task"] = "music";
    CHECK_THROWS_AS(ModelPreset::from_json(bad), ConfigError);
    bad = load_preset("vall-m").to_json();
    bad.erase("dim");
    CHECK_THROWS_AS(ModelPreset::from_json(bad), ConfigError);
    bad = load_preset("conmamba-s").to_json();
    bad["layers"] = {{"ar", 1}};
    CHECK_THROWS_AS(ModelPreset::from_json(bad), ConfigError);
    bad = load_preset("conmamba-s").to_json();
    bad["token_res_ms"] = -3;
    CHECK_THROWS_AS(ModelPreset::from_json(bad), ConfigError);
  }
}

TEST_CASE("build_model") {
  BuildOptions opts;
  opts.depth = 1;
  SUBCASE("same seed, same first forward") {
    const auto p = load_preset("mamba-tasnet-m");
    const auto a = std::get<TasNetModel>(build_model(p, 5, opts));
    const auto b = std::get<TasNetModel>(build_model(p, 5, opts));
    const auto c = std::get<TasNetModel>(build_model(p, 6, opts));
    Rng rng(1);
    std::vector<float> wave(400);
    for (float& v : wave) v = static_cast<float>(rng.normal(0.0, 0.1));
    CHECK(a.separate(wave) == b.separate(wave));
    CHECK(a.separate(wave) != c.separate(wave));
  }
  SUBCASE("shapes follow the preset") {
    const auto asr = std::get<AsrModel>(build_model(load_preset("conformer-l"), 0, opts));
    CHECK(asr.config.d_model == 512);
    CHECK(asr.encoder.size() == 1);
    CHECK(asr.transformer_decoder.size() == 1);
    const auto ctc = std::get<AsrModel>(build_model(load_preset("conmamba-ctc"), 0, opts));
    CHECK(ctc.mamba_decoder.empty());
    BuildOptions ar_only = opts;
    ar_only.skip_nar = true;
    const auto lm = std::get<CodecLm>(build_model(load_preset("vall-me"), 0, ar_only));
    CHECK(lm.ar_transformer.size() == 1);
    CHECK(lm.nar_mamba.empty());
  }
}

TEST_CASE("parameter counts") {
  CHECK(Linear::zeros(3, 5).param_count() == 20);
  BuildOptions opts;
  opts.depth = 1;
  const auto p = load_preset("mamba-tasnet-m");
  CHECK(param_count(build_model(p, 1, opts)) == param_count(build_model(p, 2, opts)));

  SUBCASE("doubling width roughly quadruples a linear-dominated model") {
    TasNetConfig small;
    small.d_model = 128;
    small.layers = 2;
    TasNetConfig big = small;
    big.d_model = 256;
    Rng rng(3);
    const double ratio = double(TasNetModel::random(big, rng).param_count()) /
                         double(TasNetModel::random(small, rng).param_count());
    CHECK(ratio > 3.5);
    CHECK(ratio < 4.5);
  }
  SUBCASE("catalog counts are reported for every full preset") {
    const auto sep = build_model(load_preset("sepformer"), 0, opts);
    CHECK(param_count(sep) > 0);
  }
}
