#include "mamba/presets.hpp"

#include <string>

#include "mamba/errors.hpp"

namespace mamba {
namespace {

ModelPreset separation(std::string name, std::size_t dim, std::size_t layers, std::size_t repeat, Backbone b,
                       bool ff) {
  ModelPreset p;
  p.name = std::move(name);
  p.dim = dim;
  p.task = Task::separation;
  p.encoder_layers = layers;
  p.dual_path_repeat = repeat;
  p.token_res = {1, 1};
  p.feedforward = ff;
  p.backbone = b;
  return p;
}

ModelPreset asr(std::string name, std::size_t dim, std::size_t enc, std::size_t dec, Backbone b) {
  ModelPreset p;
  p.name = std::move(name);
  p.dim = dim;
  p.task = Task::asr;
  p.encoder_layers = enc;
  p.decoder_layers = dec;
  p.token_res = {40, 1};
  p.feedforward = true;
  p.backbone = b;
  return p;
}

ModelPreset tts(std::string name, Backbone ar, Backbone nar) {
  ModelPreset p;
  p.name = std::move(name);
  p.dim = 1024;
  p.task = Task::tts;
  p.ar_layers = 12;
  p.nar_layers = 12;
  p.token_res = {40, 3};
  p.feedforward = true;
  p.backbone = ar;
  p.nar_backbone = nar;
  return p;
}

Backbone parse_backbone(const std::string& s) {
  if (s == "mamba") return Backbone::mamba;
  if (s == "transformer") return Backbone::transformer;
  throw ConfigError("preset: unknown backbone '" + s + "'");
}

}  // namespace

const char* to_string(Task t) noexcept {
  switch (t) {
    case Task::separation: return "separation";
    case Task::asr: return "asr";
    case Task::tts: return "tts";
  }
  return "?";
}

std::size_t ModelPreset::tokens_for_seconds(double seconds) const {
  return tokens_for_duration(seconds * 1000.0, token_res);
}

nlohmann::json ModelPreset::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  j["dim"] = dim;
  if (task == Task::tts) {
    j["layers"] = {{"ar", ar_layers}, {"nar", nar_layers}};
  } else {
    j["layers"] = {{"encoder", encoder_layers}, {"decoder", decoder_layers}};
  }
  j["token_res_ms"] = token_res_ms();
  j["task"] = to_string(task);
  j["feedforward"] = feedforward;
  j["backbone"] = to_string(backbone);
  if (task == Task::tts) j["nar_backbone"] = to_string(nar_backbone);
  if (dual_path_repeat != 1) j["dual_path_repeat"] = dual_path_repeat;
  return j;
}

ModelPreset ModelPreset::from_json(const nlohmann::json& j) {
  try {
    ModelPreset p;
    p.name = j.at("name").get<std::string>();
    p.dim = j.at("dim").get<std::size_t>();
    const std::string task = j.at("task").get<std::string>();
    if (task == "separation") {
      p.task = Task::separation;
    } else if (task == "asr") {
      p.task = Task::asr;
    } else if (task == "tts") {
      p.task = Task::tts;
    } else {
      throw ConfigError("preset: unknown task '" + task + "'");
    }
    const auto& layers = j.at("layers");
    if (p.task == Task::tts) {
      p.ar_layers = layers.at("ar").get<std::size_t>();
      p.nar_layers = layers.at("nar").get<std::size_t>();
    } else {
      p.encoder_layers = layers.at("encoder").get<std::size_t>();
      p.decoder_layers = layers.value("decoder", std::size_t{0});
    }
    p.token_res = TokenResolution::from_ms(j.at("token_res_ms").get<double>());
    p.feedforward = j.at("feedforward").get<bool>();
    p.backbone = parse_backbone(j.value("backbone", std::string("mamba")));
    p.nar_backbone = parse_backbone(j.value("nar_backbone", std::string("mamba")));
    p.dual_path_repeat = j.value("dual_path_repeat", std::size_t{1});
    if (p.dim == 0) throw ConfigError("preset: dim must be >= 1");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("preset JSON: ") + e.what());
  } catch (const UsageError& e) {
    throw ConfigError(std::string("preset JSON: ") + e.what());
  }
}

const std::vector<ModelPreset>& preset_catalog() {
  static const std::vector<ModelPreset> catalog = {
      separation("sepformer", 256, 16, 2, Backbone::transformer, true),
      separation("mamba-tasnet-m", 256, 32, 1, Backbone::mamba, false),
      separation("mamba-tasnet-l", 512, 32, 1, Backbone::mamba, false),
      asr("conformer-s", 144, 12, 4, Backbone::transformer),
      asr("conmamba-s", 144, 12, 4, Backbone::mamba),
      asr("conformer-l", 512, 12, 6, Backbone::transformer),
      asr("conmamba-l", 512, 12, 6, Backbone::mamba),
      asr("conformer-ctc", 256, 18, 0, Backbone::transformer),
      asr("conmamba-ctc", 256, 18, 0, Backbone::mamba),
      tts("vall-e", Backbone::transformer, Backbone::transformer),
      tts("vall-m", Backbone::mamba, Backbone::mamba),
      tts("vall-me", Backbone::transformer, Backbone::mamba),
  };
  return catalog;
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& p : preset_catalog()) names.push_back(p.name);
  return names;
}

ModelPreset load_preset(const std::string& name) {
  for (const auto& p : preset_catalog()) {
    if (p.name == name) return p;
  }
  std::string known;
  for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
  throw UsageError("unknown preset '" + name + "' (known: " + known + ")");
}

Model build_model(const ModelPreset& preset, std::uint64_t seed, const BuildOptions& options) {
  Rng rng(seed);
  const auto depth = [&](std::size_t table) { return options.depth.value_or(table); };
  switch (preset.task) {
    case Task::separation: {
      TasNetConfig cfg;
      cfg.d_model = preset.dim;
      cfg.layers = depth(preset.stack_depth());
      cfg.backbone = preset.backbone;
      cfg.feedforward = preset.feedforward;
      return TasNetModel::random(cfg, rng);
    }
    case Task::asr: {
      AsrConfig cfg;
      cfg.d_model = preset.dim;
      cfg.encoder_layers = depth(preset.stack_depth());
      cfg.decoder_layers = preset.decoder_layers == 0 ? 0 : depth(preset.decoder_layers);
      cfg.backbone = preset.backbone;
      return AsrModel::random(cfg, rng);
    }
    case Task::tts: {
      CodecConfig cfg;
      cfg.d_model = preset.dim;
      cfg.ar_layers = depth(preset.ar_layers);
      cfg.nar_layers = options.skip_nar ? 0 : depth(preset.nar_layers);
      cfg.ar_backbone = preset.backbone;
      cfg.nar_backbone = preset.nar_backbone;
      cfg.feedforward = preset.feedforward;
      return CodecLm::random(cfg, rng);
    }
  }
  throw ConfigError("build_model: unknown task");
}

std::size_t param_count(const Model& model) {
  return std::visit([](const auto& m) { return m.param_count(); }, model);
}

}  // namespace mamba
