#include "mamba/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "mamba/archs.hpp"
#include "mamba/attention.hpp"
#include "mamba/errors.hpp"
#include "mamba/layers.hpp"
#include "mamba/ssm.hpp"

namespace mamba {
namespace {

SuiteResult compare(std::string name, double err, double tol) {
  return SuiteResult{std::move(name), err, tol, false, err <= tol};
}

SuiteResult witness(std::string name, double effect) {
  return SuiteResult{std::move(name), effect, 0.0, true, effect > 0.0};
}

// Copy of x with every row from `from` on replaced by fresh noise.
FeatureSequence perturb_suffix(const FeatureSequence& x, std::size_t from, Rng& rng) {
  FeatureSequence y = x;
  for (std::size_t t = from; t < y.length(); ++t) {
    for (float& v : y.row(t)) v = static_cast<float>(rng.normal());
  }
  return y;
}

// Largest difference between the first `prefix` rows of a and b.
double prefix_diff(const FeatureSequence& a, const FeatureSequence& b, std::size_t prefix) {
  return max_abs_diff(slice_rows(a, 0, prefix), slice_rows(b, 0, prefix));
}

// Prefix perturbation: returns the change of outputs [0, cut) when inputs
// [cut, L) are replaced. Zero for a causal map.
double suffix_leak(const std::function<FeatureSequence(const FeatureSequence&)>& f, const FeatureSequence& x,
                   std::size_t cut, Rng& rng) {
  return prefix_diff(f(x), f(perturb_suffix(x, cut, rng)), cut);
}

MambaConfig small_mamba(std::size_t d) {
  MambaConfig cfg;
  cfg.d_model = d;
  return cfg;
}

template <class Layer>
FeatureSequence step_all(const Layer& layer, typename Layer::State state, const FeatureSequence& x) {
  FeatureSequence y(x.length(), x.channels());
  for (std::size_t t = 0; t < x.length(); ++t) layer.step(state, x.row(t), y.row(t));
  return y;
}

// --- ssm ------------------------------------------------------------------------

void ssm_suites(std::vector<SuiteResult>& out) {
  double scan_err = 0.0, fold_err = 0.0, leak = 0.0;
  for (std::size_t d : {8u, 64u}) {
    for (std::size_t L : {1u, 2u, 3u, 7u, 64u, 1000u}) {
      for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        Rng rng(seed * 1000 + L * 10 + d);
        const auto p = ssm::SelectiveSsmParams::random(d, rng);
        const auto x = random_sequence(L, d, rng);
        const auto rec = ssm::ssm_recurrence(x, p);
        scan_err = std::max(scan_err, max_abs_diff(ssm::ssm_scan(x, p), rec));
        if (L <= 64) {
          auto state = ssm::SsmState::zeros(d, p.state_size());
          FeatureSequence folded(L, d);
          for (std::size_t t = 0; t < L; ++t) ssm::ssm_step_inplace(state, x.row(t), p, folded.row(t));
          fold_err = std::max(fold_err, max_abs_diff(folded, rec));
          if (L > 1) {
            leak = std::max(leak, suffix_leak([&](const auto& v) { return ssm::ssm_scan(v, p); }, x, L / 2, rng));
          }
        }
      }
    }
  }
  out.push_back(compare("ssm/scan_vs_recurrence", scan_err, 1e-5));
  out.push_back(compare("ssm/step_fold_vs_recurrence", fold_err, 0.0));
  out.push_back(compare("ssm/scan_causality", leak, 0.0));

  double conv_err = 0.0;
  for (std::size_t L : {1u, 16u, 256u}) {
    Rng rng(77 + L);
    const auto p = ssm::SelectiveSsmParams::random_time_invariant(8, rng);
    const auto x = random_sequence(L, 8, rng);
    conv_err = std::max(conv_err, max_abs_diff(ssm::ssm_kernel_conv(x, p), ssm::ssm_recurrence(x, p)));
  }
  out.push_back(compare("ssm/kernel_conv_vs_recurrence", conv_err, 1e-5));
}

// --- layers ---------------------------------------------------------------------

void layer_suites(std::vector<SuiteResult>& out) {
  Rng rng(2024);
  const std::size_t d = 16;
  const auto uni = UniMambaBlock::random(small_mamba(d), rng);
  const auto bi = BiMambaBlock::random(small_mamba(d), rng);
  const auto x = random_sequence(40, d, rng);

  out.push_back(compare("layers/uni_scan_vs_recurrence",
                        max_abs_diff(uni(x, SsmPath::scan), uni(x, SsmPath::recurrence)), 1e-5));
  out.push_back(compare("layers/uni_causality", suffix_leak([&](const auto& v) { return uni(v); }, x, 20, rng), 0.0));
  out.push_back(compare("layers/uni_step_vs_batch", max_abs_diff(step_all(uni, uni.initial_state(), x), uni(x)), 1e-5));
  out.push_back(witness("layers/bi_full_context", suffix_leak([&](const auto& v) { return bi(v); }, x, 20, rng)));

  // Output length equals query length; every memory row reaches the first query output.
  double bad_lengths = 0.0;
  for (std::size_t lk : {0u, 1u, 5u}) {
    for (std::size_t lq : {0u, 1u, 5u}) {
      const auto y = cross_mamba(uni, random_sequence(lk, d, rng), random_sequence(lq, d, rng));
      if (y.length() != lq || y.channels() != d) bad_lengths += 1.0;
    }
  }
  out.push_back(compare("layers/cross_mamba_lengths", bad_lengths, 0.0));
  const auto mem = random_sequence(12, d, rng);
  const auto q = random_sequence(4, d, rng);
  const auto base = cross_mamba(uni, mem, q);
  double weakest = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < mem.length(); ++t) {
    auto m2 = mem;
    for (float& v : m2.row(t)) v += 1.0f;
    weakest = std::min(weakest, max_abs_diff(base.row(0), cross_mamba(uni, m2, q).row(0)));
  }
  out.push_back(witness("layers/cross_mamba_memory_influence", weakest));

  const auto dec = MambaDecoderLayer::random(small_mamba(d), true, true, rng);
  out.push_back(compare("layers/decoder_step_vs_batch",
                        max_abs_diff(step_all(dec, dec.initial_state(&mem), x), dec(x, &mem)), 1e-5));
  out.push_back(compare("layers/decoder_causality",
                        suffix_leak([&](const auto& v) { return dec(v, &mem); }, x, 20, rng), 0.0));
  const auto enc = MambaEncoderLayer::random(small_mamba(d), true, rng);
  out.push_back(witness("layers/encoder_full_context", suffix_leak([&](const auto& v) { return enc(v); }, x, 20, rng)));
}

// --- attention ------------------------------------------------------------------

// Direct double-precision evaluation of softmax(QK^T / sqrt(dh)) V then o_proj.
FeatureSequence naive_attention(const MultiHeadAttention& m, const FeatureSequence& xq, const FeatureSequence& xkv,
                                bool causal) {
  const auto q = m.q_proj(xq), k = m.k_proj(xkv), v = m.v_proj(xkv);
  const std::size_t dm = m.d_model(), dh = m.head_dim();
  FeatureSequence ctx(xq.length(), dm);
  for (std::size_t h = 0; h < m.heads; ++h) {
    for (std::size_t i = 0; i < xq.length(); ++i) {
      const std::size_t n = causal ? std::min(i + 1, xkv.length()) : xkv.length();
      std::vector<double> s(n);
      double mx = -INFINITY;
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < dh; ++c) acc += double(q(i, h * dh + c)) * double(k(j, h * dh + c));
        s[j] = acc / std::sqrt(double(dh));
        mx = std::max(mx, s[j]);
      }
      double z = 0.0;
      for (double& e : s) z += (e = std::exp(e - mx));
      for (std::size_t c = 0; c < dh; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += s[j] / z * double(v(j, h * dh + c));
        ctx(i, h * dh + c) = static_cast<float>(acc);
      }
    }
  }
  return m.o_proj(ctx);
}

void attention_suites(std::vector<SuiteResult>& out) {
  Rng rng(4242);
  const std::size_t d = 16;
  const auto attn = MultiHeadAttention::random(d, 2, rng);
  const auto x = random_sequence(24, d, rng);
  const auto mem = random_sequence(9, d, rng);

  double oracle = max_abs_diff(attn.self_attention(x), naive_attention(attn, x, x, false));
  oracle = std::max(oracle, max_abs_diff(attn.self_attention(x, MaskMode::causal), naive_attention(attn, x, x, true)));
  oracle = std::max(oracle, max_abs_diff(attn.cross_attention(x, mem), naive_attention(attn, x, mem, false)));
  out.push_back(compare("attention/naive_oracle", oracle, 1e-5));

  const auto w = attn.weights(x, x, MaskMode::causal);
  double row_err = 0.0;
  for (std::size_t h = 0; h < w.heads; ++h) {
    for (std::size_t i = 0; i < w.lq; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < w.lk; ++j) sum += w(h, i, j);
      row_err = std::max(row_err, std::abs(sum - 1.0));
    }
  }
  out.push_back(compare("attention/row_sums", row_err, 1e-6));
  out.push_back(compare("attention/causal_mask",
                        suffix_leak([&](const auto& v) { return attn.self_attention(v, MaskMode::causal); }, x, 12, rng),
                        0.0));

  auto cache = attn.empty_cache();
  FeatureSequence stepped(x.length(), d);
  for (std::size_t t = 0; t < x.length(); ++t) attn.step(cache, x.row(t), stepped.row(t));
  out.push_back(compare("attention/step_vs_causal", max_abs_diff(stepped, attn.self_attention(x, MaskMode::causal)),
                        1e-5));

  const auto dec = TransformerDecoderLayer::random(d, 2, true, rng);
  out.push_back(compare("attention/decoder_step_vs_batch",
                        max_abs_diff(step_all(dec, dec.initial_state(&mem), x), dec(x, &mem)), 1e-5));
  out.push_back(compare("attention/decoder_causality",
                        suffix_leak([&](const auto& v) { return dec(v, &mem); }, x, 12, rng), 0.0));
  const auto enc = TransformerEncoderLayer::random(d, 2, rng);
  out.push_back(witness("attention/encoder_full_context", suffix_leak([&](const auto& v) { return enc(v); }, x, 12, rng)));
}

// --- archs ----------------------------------------------------------------------

CodecLm tiny_lm(Backbone b, Rng& rng) {
  CodecConfig cfg;
  cfg.d_model = 32;
  cfg.ar_layers = 2;
  cfg.nar_layers = 1;
  cfg.ar_backbone = b;
  cfg.nar_backbone = b;
  cfg.heads = 4;
  cfg.phoneme_vocab = 16;
  cfg.codebook_size = 64;
  return CodecLm::random(cfg, rng);
}

std::vector<int> ids(std::size_t n, std::size_t vocab, Rng& rng) {
  std::vector<int> v(n);
  for (int& t : v) t = static_cast<int>(rng.below(vocab));
  return v;
}

void arch_suites(std::vector<SuiteResult>& out) {
  for (Backbone b : {Backbone::mamba, Backbone::transformer}) {
    Rng rng(b == Backbone::mamba ? 11 : 12);
    const auto lm = tiny_lm(b, rng);
    const auto phon = ids(5, 16, rng), enroll = ids(6, 64, rng), codes = ids(10, 64, rng);
    const auto logits = lm.ar_logits(phon, enroll, codes);

    ArSession session(lm);
    FeatureSequence inc(logits.length(), logits.channels());
    std::size_t row = 0;
    const auto take = [&](std::span<const float> l) { std::copy(l.begin(), l.end(), inc.row(row++).begin()); };
    for (int p : phon) take(session.feed(p, true));
    take(session.feed(lm.config.bos()));
    for (int c : enroll) take(session.feed(c));
    for (int c : codes) take(session.feed(c));
    const std::string name = std::string("archs/ar_incremental_vs_batch_") + to_string(b);
    out.push_back(compare(name, max_abs_diff(inc, logits), 1e-4));

    auto codes2 = codes;
    for (std::size_t t = 5; t < codes2.size(); ++t) codes2[t] = (codes2[t] + 1) % 64;
    const std::size_t cut = phon.size() + 1 + enroll.size() + 5;
    out.push_back(compare(std::string("archs/ar_causality_") + to_string(b),
                          prefix_diff(logits, lm.ar_logits(phon, enroll, codes2), cut), 0.0));
  }

  {
    Rng rng(31);
    auto block = MacaronBlock::random_conmamba(16, rng);
    const auto zero = [](Linear& l) {
      std::fill(l.weight.values().begin(), l.weight.values().end(), 0.0f);
      std::fill(l.bias.begin(), l.bias.end(), 0.0f);
    };
    zero(block.ff1.ff.down);
    zero(block.ff2.ff.down);
    zero(block.mixer.mamba->out_proj);
    zero(block.conv.pointwise_out);
    const auto x = random_sequence(20, 16, rng);
    out.push_back(compare("archs/conmamba_zero_weight", max_abs_diff(block(x), block.final_norm(x)), 1e-6));
  }

  {
    Rng rng(41);
    TasNetConfig cfg;
    cfg.d_model = 16;
    cfg.layers = 2;
    const auto model = TasNetModel::random(cfg, rng);
    double bad = 0.0;
    for (std::size_t n : {16u, 100u, 1001u}) {
      std::vector<float> wave(n);
      for (float& v : wave) v = static_cast<float>(rng.normal(0.0, 0.1));
      const auto sources = model.separate(wave);
      if (sources.size() != cfg.sources) bad += 1.0;
      for (const auto& s : sources) bad += s.size() == n ? 0.0 : 1.0;
    }
    out.push_back(compare("archs/tasnet_output_lengths", bad, 0.0));
  }
}

}  // namespace

const std::vector<std::string>& verify_scopes() {
  static const std::vector<std::string> scopes = {"ssm", "layers", "attention", "archs", "all"};
  return scopes;
}

std::vector<SuiteResult> run_verify(const std::string& scope) {
  const auto& scopes = verify_scopes();
  if (std::find(scopes.begin(), scopes.end(), scope) == scopes.end()) {
    throw UsageError("unknown verify scope '" + scope + "' (expected ssm, layers, attention, archs or all)");
  }
  std::vector<SuiteResult> out;
  const bool all = scope == "all";
  if (all || scope == "ssm") ssm_suites(out);
  if (all || scope == "layers") layer_suites(out);
  if (all || scope == "attention") attention_suites(out);
  if (all || scope == "archs") arch_suites(out);
  return out;
}

}  // namespace mamba
