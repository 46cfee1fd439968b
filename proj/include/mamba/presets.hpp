#pragma once

// Model configurations as data, one entry per benchmarked model:
//
//   name            task        D     layers          token res
//   sepformer       separation  256   16 x 2          1 ms
//   mamba-tasnet-m  separation  256   32              1 ms
//   mamba-tasnet-l  separation  512   32              1 ms
//   conformer-s     asr         144   12 + 4          40 ms   (conmamba-s)
//   conformer-l     asr         512   12 + 6          40 ms   (conmamba-l)
//   conformer-ctc   asr         256   18              40 ms   (conmamba-ctc)
//   vall-e          tts         1024  12 + 12 (AR/NAR) 13 1/3 ms (vall-m, vall-me)

#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "mamba/archs.hpp"

namespace mamba {

enum class Task { separation, asr, tts };

const char* to_string(Task t) noexcept;

struct ModelPreset {
  std::string name;
  std::size_t dim = 0;
  Task task = Task::separation;
  /// Separation / ASR: encoder and decoder layers. TTS: AR and NAR layers.
  std::size_t encoder_layers = 0;
  std::size_t decoder_layers = 0;
  std::size_t ar_layers = 0;
  std::size_t nar_layers = 0;
  /// Multiplier on encoder_layers ("16 x 2"); 1 for plain stacks.
  std::size_t dual_path_repeat = 1;
  TokenResolution token_res;
  bool feedforward = false;
  /// Mixer of the encoder (separation, ASR) or of the AR stack (TTS).
  Backbone backbone = Backbone::mamba;
  /// TTS only.
  Backbone nar_backbone = Backbone::mamba;

  double token_res_ms() const noexcept { return token_res.ms(); }
  std::size_t tokens_for_seconds(double seconds) const;
  /// Layers of the main stack as built (encoder_layers * dual_path_repeat).
  std::size_t stack_depth() const noexcept { return encoder_layers * dual_path_repeat; }

  nlohmann::json to_json() const;
  /// Throws ConfigError on schema violations.
  static ModelPreset from_json(const nlohmann::json& j);
};

/// All catalog entries in a fixed order.
const std::vector<ModelPreset>& preset_catalog();
std::vector<std::string> preset_names();

/// Unknown name -> UsageError.
ModelPreset load_preset(const std::string& name);

using Model = std::variant<TasNetModel, AsrModel, CodecLm>;

struct BuildOptions {
  /// Replaces every stack depth (encoder, decoder, AR, NAR) when set.
  std::optional<std::size_t> depth;
  /// Skip the NAR stack of TTS models (AR-only benchmarks).
  bool skip_nar = false;
};

Model build_model(const ModelPreset& preset, std::uint64_t seed, const BuildOptions& options = {});

std::size_t param_count(const Model& model);

}  // namespace mamba
