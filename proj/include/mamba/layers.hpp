#pragma once

// Mamba blocks and layers.
//
//   UniMambaBlock:  in_proj -> (main, gate); main -> causal conv -> silu -> SSM;
//                   y * silu(gate) -> out_proj
//   BiMambaBlock:   same projections, two (conv, SSM) branches; the backward
//                   branch sees the reversed sequence. Branch outputs are
//                   averaged before the gate.
//   CrossMamba:     uni block over cat(memory, query), keep the query suffix.
//
// Encoder/decoder layers are pre-norm residual stacks of these blocks.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "mamba/rng.hpp"
#include "mamba/seqcore.hpp"
#include "mamba/ssm.hpp"
#include "mamba/tensor.hpp"

namespace mamba {

struct MambaConfig {
  std::size_t d_model = 0;
  std::size_t expand = 2;
  std::size_t d_state = ssm::kDefaultStateSize;
  std::size_t d_conv = kDefaultConvWidth;
  /// 0 = ceil(inner / 16)
  std::size_t delta_rank = 0;

  std::size_t inner() const noexcept { return expand * d_model; }
};

/// Which evaluation path runs the selective SSM inside a block.
enum class SsmPath { scan, recurrence };

/// causal conv -> silu -> selective SSM over the E inner channels.
struct SsmBranch {
  Matrix conv_kernel;  // d_conv x E
  std::vector<float> conv_bias;
  ssm::SelectiveSsmParams ssm;

  static SsmBranch random(const MambaConfig& cfg, Rng& rng);

  std::size_t param_count() const noexcept;
  FeatureSequence operator()(const FeatureSequence& main, SsmPath path = SsmPath::scan) const;
};

class UniMambaBlock {
 public:
  Linear in_proj;   // D -> 2E, no bias
  SsmBranch branch;
  Linear out_proj;  // E -> D, no bias

  static UniMambaBlock random(const MambaConfig& cfg, Rng& rng);

  std::size_t d_model() const noexcept { return in_proj.in_features(); }
  std::size_t inner() const noexcept { return out_proj.in_features(); }
  std::size_t param_count() const noexcept;

  FeatureSequence operator()(const FeatureSequence& x, SsmPath path = SsmPath::scan) const;

  /// Incremental state: the last d_conv conv inputs plus the SSM state.
  struct State {
    Matrix window;  // d_conv x E, row d_conv-1 = newest
    ssm::SsmState ssm;
  };
  State initial_state() const;
  /// One token. Matches operator() with SsmPath::recurrence bit for bit.
  void step(State& state, std::span<const float> x_t, std::span<float> y_t) const;
};

class BiMambaBlock {
 public:
  Linear in_proj;  // shared by both directions
  SsmBranch forward;
  SsmBranch backward;
  Linear out_proj;

  static BiMambaBlock random(const MambaConfig& cfg, Rng& rng);

  std::size_t d_model() const noexcept { return in_proj.in_features(); }
  std::size_t param_count() const noexcept;

  FeatureSequence operator()(const FeatureSequence& x, SsmPath path = SsmPath::scan) const;

  /// Copy with the forward and backward branch parameters exchanged.
  BiMambaBlock with_swapped_branches() const;
};

FeatureSequence uni_mamba(const UniMambaBlock& block, const FeatureSequence& x);
FeatureSequence bi_mamba(const BiMambaBlock& block, const FeatureSequence& x);

/// block(cat(k, q)) restricted to the last len(q) rows. k and q must share D.
FeatureSequence cross_mamba(const UniMambaBlock& block, const FeatureSequence& k, const FeatureSequence& q);
/// block(cat(xs...)) restricted to the last len(xs.back()) rows.
FeatureSequence cross_mamba_multi(const UniMambaBlock& block, std::span<const FeatureSequence> xs);

/// x + bi_mamba(norm(x)), then optionally x + ff(norm(x)).
class MambaEncoderLayer {
 public:
  LayerNorm norm;
  BiMambaBlock block;
  std::optional<LayerNorm> ff_norm;
  std::optional<FeedForward> ff;

  static MambaEncoderLayer random(const MambaConfig& cfg, bool feedforward, Rng& rng);

  std::size_t param_count() const noexcept;
  FeatureSequence operator()(const FeatureSequence& x, SsmPath path = SsmPath::scan) const;
};

/// x + uni_mamba(norm(x)); with memory and a cross block,
/// x + cross_mamba(memory, norm(x)); then optionally x + ff(norm(x)).
class MambaDecoderLayer {
 public:
  LayerNorm norm;
  UniMambaBlock block;
  std::optional<LayerNorm> cross_norm;
  std::optional<UniMambaBlock> cross;
  std::optional<LayerNorm> ff_norm;
  std::optional<FeedForward> ff;

  static MambaDecoderLayer random(const MambaConfig& cfg, bool feedforward, bool with_cross, Rng& rng);

  std::size_t d_model() const noexcept { return block.d_model(); }
  std::size_t param_count() const noexcept;
  FeatureSequence operator()(const FeatureSequence& x, const FeatureSequence* memory = nullptr,
                             SsmPath path = SsmPath::scan) const;

  struct State {
    UniMambaBlock::State self;
    std::optional<UniMambaBlock::State> cross;
  };
  /// Fresh state. With memory (and a cross block) the cross state has
  /// already absorbed every memory token.
  State initial_state(const FeatureSequence* memory = nullptr) const;
  void step(State& state, std::span<const float> x_t, std::span<float> y_t) const;
};

}  // namespace mamba
