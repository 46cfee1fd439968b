#include "mamba/layers.hpp"

#include <algorithm>

#include "mamba/errors.hpp"

namespace mamba {
namespace {

ssm::SsmInit ssm_init(const MambaConfig& cfg) {
  ssm::SsmInit init;
  init.state_size = cfg.d_state;
  init.delta_rank = cfg.delta_rank;
  return init;
}

void check_config(const MambaConfig& cfg) {
  if (cfg.d_model == 0 || cfg.expand == 0 || cfg.d_state == 0 || cfg.d_conv == 0) {
    throw ConfigError("MambaConfig: d_model, expand, d_state and d_conv must be >= 1");
  }
}

FeatureSequence run_ssm(const FeatureSequence& u, const ssm::SelectiveSsmParams& p, SsmPath path) {
  return path == SsmPath::scan ? ssm::ssm_scan(u, p) : ssm::ssm_recurrence(u, p);
}

void check_model_dim(const FeatureSequence& x, std::size_t d, const char* who) {
  if (x.channels() != d) {
    throw ShapeError(std::string(who) + ": input has " + std::to_string(x.channels()) + " channels, expected " +
                     std::to_string(d));
  }
}

void residual_row(std::span<float> acc, std::span<const float> delta) {
  for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += delta[c];
}

}  // namespace

SsmBranch SsmBranch::random(const MambaConfig& cfg, Rng& rng) {
  check_config(cfg);
  const std::size_t e = cfg.inner();
  SsmBranch b;
  b.conv_kernel = Matrix(cfg.d_conv, e);
  const double sd = 1.0 / std::sqrt(static_cast<double>(cfg.d_conv));
  for (float& v : b.conv_kernel.values()) v = static_cast<float>(rng.normal(0.0, sd));
  b.conv_bias.assign(e, 0.0f);
  b.ssm = ssm::SelectiveSsmParams::random(e, rng, ssm_init(cfg));
  return b;
}

std::size_t SsmBranch::param_count() const noexcept {
  return conv_kernel.size() + conv_bias.size() + ssm.param_count();
}

FeatureSequence SsmBranch::operator()(const FeatureSequence& main, SsmPath path) const {
  FeatureSequence u = causal_conv1d(main, conv_kernel, conv_bias);
  silu_inplace(u.values());
  return run_ssm(u, ssm, path);
}

// --- unidirectional -------------------------------------------------------

UniMambaBlock UniMambaBlock::random(const MambaConfig& cfg, Rng& rng) {
  check_config(cfg);
  UniMambaBlock b;
  b.in_proj = Linear::random(cfg.d_model, 2 * cfg.inner(), rng, false);
  b.branch = SsmBranch::random(cfg, rng);
  b.out_proj = Linear::random(cfg.inner(), cfg.d_model, rng, false);
  return b;
}

std::size_t UniMambaBlock::param_count() const noexcept {
  return in_proj.param_count() + branch.param_count() + out_proj.param_count();
}

FeatureSequence UniMambaBlock::operator()(const FeatureSequence& x, SsmPath path) const {
  check_model_dim(x, d_model(), "uni_mamba");
  const std::size_t e = inner();
  FeatureSequence gate;
  FeatureSequence y;
  {
    const FeatureSequence xz = in_proj(x);
    gate = slice_channels(xz, e, e);
    y = branch(slice_channels(xz, 0, e), path);
  }
  return out_proj(gated_mult(y, gate));
}

UniMambaBlock::State UniMambaBlock::initial_state() const {
  return State{Matrix(branch.conv_kernel.rows(), inner()),
               ssm::SsmState::zeros(inner(), branch.ssm.state_size())};
}

void UniMambaBlock::step(State& state, std::span<const float> x_t, std::span<float> y_t) const {
  if (x_t.size() != d_model() || y_t.size() != d_model()) throw ShapeError("uni_mamba step: token size");
  const std::size_t e = inner();
  Buffer<float> xz(2 * e);
  Buffer<float> u(e);
  Buffer<float> y(e);
  in_proj.apply_row(x_t, xz);

  Matrix& w = state.window;
  const std::size_t k = w.rows();
  std::copy(w.data() + e, w.data() + k * e, w.data());
  std::copy(xz.begin(), xz.begin() + static_cast<std::ptrdiff_t>(e), w.row(k - 1).begin());
  causal_conv_window(w, branch.conv_kernel, branch.conv_bias, u);
  silu_inplace(u);
  ssm::ssm_step_inplace(state.ssm, u, branch.ssm, y);
  for (std::size_t c = 0; c < e; ++c) y[c] = y[c] * silu(xz[e + c]);
  out_proj.apply_row(y, y_t);
}

// --- bidirectional --------------------------------------------------------

BiMambaBlock BiMambaBlock::random(const MambaConfig& cfg, Rng& rng) {
  check_config(cfg);
  BiMambaBlock b;
  b.in_proj = Linear::random(cfg.d_model, 2 * cfg.inner(), rng, false);
  b.forward = SsmBranch::random(cfg, rng);
  b.backward = SsmBranch::random(cfg, rng);
  b.out_proj = Linear::random(cfg.inner(), cfg.d_model, rng, false);
  return b;
}

std::size_t BiMambaBlock::param_count() const noexcept {
  return in_proj.param_count() + forward.param_count() + backward.param_count() + out_proj.param_count();
}

FeatureSequence BiMambaBlock::operator()(const FeatureSequence& x, SsmPath path) const {
  check_model_dim(x, d_model(), "bi_mamba");
  const std::size_t e = out_proj.in_features();
  FeatureSequence gate;
  FeatureSequence avg;
  {
    const FeatureSequence xz = in_proj(x);
    gate = slice_channels(xz, e, e);
    const FeatureSequence main = slice_channels(xz, 0, e);
    avg = forward(main, path);
    const FeatureSequence back = reversed(backward(reversed(main), path));
    auto a = avg.values();
    auto b = back.values();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = 0.5f * (a[i] + b[i]);
  }
  return out_proj(gated_mult(avg, gate));
}

BiMambaBlock BiMambaBlock::with_swapped_branches() const {
  BiMambaBlock b = *this;
  std::swap(b.forward, b.backward);
  return b;
}

FeatureSequence uni_mamba(const UniMambaBlock& block, const FeatureSequence& x) { return block(x); }
FeatureSequence bi_mamba(const BiMambaBlock& block, const FeatureSequence& x) { return block(x); }

FeatureSequence cross_mamba(const UniMambaBlock& block, const FeatureSequence& k, const FeatureSequence& q) {
  if (k.channels() != q.channels()) throw ShapeError("cross_mamba: memory and query channel counts differ");
  const FeatureSequence y = block(concat_rows(k, q));
  return slice_rows(y, k.length(), k.length() + q.length());
}

FeatureSequence cross_mamba_multi(const UniMambaBlock& block, std::span<const FeatureSequence> xs) {
  if (xs.empty()) throw UsageError("cross_mamba_multi: at least one input sequence is required");
  std::vector<const FeatureSequence*> parts;
  for (const auto& x : xs) parts.push_back(&x);
  const FeatureSequence y = block(concat_rows(parts));
  const std::size_t keep = xs.back().length();
  return slice_rows(y, y.length() - keep, y.length());
}

// --- layers ---------------------------------------------------------------

MambaEncoderLayer MambaEncoderLayer::random(const MambaConfig& cfg, bool feedforward, Rng& rng) {
  MambaEncoderLayer l;
  l.norm = LayerNorm::identity(cfg.d_model);
  l.block = BiMambaBlock::random(cfg, rng);
  if (feedforward) {
    l.ff_norm = LayerNorm::identity(cfg.d_model);
    l.ff = FeedForward::random(cfg.d_model, rng);
  }
  return l;
}

std::size_t MambaEncoderLayer::param_count() const noexcept {
  std::size_t n = norm.param_count() + block.param_count();
  if (ff) n += ff_norm->param_count() + ff->param_count();
  return n;
}

FeatureSequence MambaEncoderLayer::operator()(const FeatureSequence& x, SsmPath path) const {
  FeatureSequence h = x;
  add_inplace(h, block(norm(x), path));
  if (ff) add_inplace(h, (*ff)((*ff_norm)(h)));
  return h;
}

MambaDecoderLayer MambaDecoderLayer::random(const MambaConfig& cfg, bool feedforward, bool with_cross,
                                            Rng& rng) {
  MambaDecoderLayer l;
  l.norm = LayerNorm::identity(cfg.d_model);
  l.block = UniMambaBlock::random(cfg, rng);
  if (with_cross) {
    l.cross_norm = LayerNorm::identity(cfg.d_model);
    l.cross = UniMambaBlock::random(cfg, rng);
  }
  if (feedforward) {
    l.ff_norm = LayerNorm::identity(cfg.d_model);
    l.ff = FeedForward::random(cfg.d_model, rng);
  }
  return l;
}

std::size_t MambaDecoderLayer::param_count() const noexcept {
  std::size_t n = norm.param_count() + block.param_count();
  if (cross) n += cross_norm->param_count() + cross->param_count();
  if (ff) n += ff_norm->param_count() + ff->param_count();
  return n;
}

FeatureSequence MambaDecoderLayer::operator()(const FeatureSequence& x, const FeatureSequence* memory,
                                              SsmPath path) const {
  FeatureSequence h = x;
  add_inplace(h, block(norm(x), path));
  if (memory != nullptr && cross) {
    check_model_dim(*memory, d_model(), "decoder memory");
    const FeatureSequence q = (*cross_norm)(h);
    const FeatureSequence y = (*cross)(concat_rows(*memory, q), path);
    add_inplace(h, slice_rows(y, memory->length(), y.length()));
  }
  if (ff) add_inplace(h, (*ff)((*ff_norm)(h)));
  return h;
}

MambaDecoderLayer::State MambaDecoderLayer::initial_state(const FeatureSequence* memory) const {
  State s{block.initial_state(), std::nullopt};
  if (memory != nullptr && cross) {
    check_model_dim(*memory, d_model(), "decoder memory");
    s.cross = cross->initial_state();
    Buffer<float> sink(d_model());
    for (std::size_t t = 0; t < memory->length(); ++t) cross->step(*s.cross, memory->row(t), sink);
  }
  return s;
}

void MambaDecoderLayer::step(State& state, std::span<const float> x_t, std::span<float> y_t) const {
  const std::size_t d = d_model();
  if (x_t.size() != d || y_t.size() != d) throw ShapeError("decoder step: token size");
  Buffer<float> normed(d);
  Buffer<float> delta(d);
  std::copy(x_t.begin(), x_t.end(), y_t.begin());

  norm.apply_row(x_t, normed);
  block.step(state.self, normed, delta);
  residual_row(y_t, delta);
  if (state.cross) {
    cross_norm->apply_row(y_t, normed);
    cross->step(*state.cross, normed, delta);
    residual_row(y_t, delta);
  }
  if (ff) {
    ff_norm->apply_row(y_t, normed);
    ff->apply_row(normed, delta);
    residual_row(y_t, delta);
  }
}

}  // namespace mamba
