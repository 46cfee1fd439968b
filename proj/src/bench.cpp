#include "mamba/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "mamba/errors.hpp"
#include "mamba/memory.hpp"
#include "mamba/ssm.hpp"

namespace mamba::bench {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Timed {
  double seconds;
  std::int64_t peak;
};

template <class Fn>
Timed run_once(Fn&& fn) {
  memory::PeakScope scope;
  const auto t0 = Clock::now();
  fn();
  const double s = seconds_since(t0);
  return Timed{s, scope.peak_above_baseline()};
}

void finish_record(BenchRecord& r, std::vector<double> samples) {
  r.wall_s_median = quantile(samples, 0.5);
  r.wall_s_p10 = quantile(samples, 0.1);
  r.wall_s_p90 = quantile(samples, 0.9);
  r.wall_samples = std::move(samples);
}

std::vector<int> random_ids(std::size_t n, std::size_t vocab, Rng& rng) {
  std::vector<int> ids(n);
  for (int& v : ids) v = static_cast<int>(rng.below(vocab));
  return ids;
}

class WorkerScope {
 public:
  explicit WorkerScope(unsigned workers) : saved_(ssm::scan_workers()) { ssm::set_scan_workers(workers); }
  ~WorkerScope() { ssm::set_scan_workers(saved_); }

 private:
  unsigned saved_;
};

double least_squares_slope(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

std::vector<BenchRecord> measure_forward(const ModelPreset& preset, const Model& model, const BenchConfig& cfg) {
  std::vector<BenchRecord> out;
  Rng root(cfg.seed);
  for (double d : cfg.durations_s) {
    const std::size_t tokens = preset.tokens_for_seconds(d);
    Rng rng = root.fork();
    std::function<void()> run;

    std::vector<float> wave;
    FeatureSequence mel;
    std::vector<int> phonemes, enrollment, codes;
    if (const auto* tas = std::get_if<TasNetModel>(&model)) {
      wave.resize(tokens * tas->config.stride);
      for (float& v : wave) v = static_cast<float>(rng.normal(0.0, 0.1));
      run = [&, tas] { (void)tas->separate(wave); };
    } else if (const auto* am = std::get_if<AsrModel>(&model)) {
      mel = random_sequence(4 * tokens, am->config.mel_bins, rng);
      run = [&, am] { (void)am->encode(mel); };
    } else {
      const auto& lm = std::get<CodecLm>(model);
      phonemes = random_ids(cfg.text_len, lm.config.phoneme_vocab, rng);
      enrollment = random_ids(std::max<std::size_t>(1, preset.tokens_for_seconds(cfg.enroll_s)),
                              lm.config.codebook_size, rng);
      codes = random_ids(tokens, lm.config.codebook_size, rng);
      run = [&] { (void)lm.ar_logits(phonemes, enrollment, codes); };
    }

    BenchRecord r{preset.name, cfg.mode, cfg.seed, d, tokens, 0, 0, 0, 0, {}};
    std::vector<double> samples;
    for (std::size_t i = 0; i < cfg.warmup + cfg.repetitions; ++i) {
      const Timed t = run_once(run);
      if (i >= cfg.warmup) {
        samples.push_back(t.seconds);
        r.peak_bytes = std::max(r.peak_bytes, t.peak);
      }
    }
    finish_record(r, std::move(samples));
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<BenchRecord> measure_ar(const ModelPreset& preset, const CodecLm& lm, const BenchConfig& cfg) {
  std::vector<std::size_t> checkpoints;
  for (double d : cfg.durations_s) checkpoints.push_back(preset.tokens_for_seconds(d));

  Rng rng(cfg.seed);
  const auto phonemes = random_ids(cfg.text_len, lm.config.phoneme_vocab, rng);
  const auto enrollment = random_ids(std::max<std::size_t>(1, preset.tokens_for_seconds(cfg.enroll_s)),
                                     lm.config.codebook_size, rng);

  const std::size_t n = checkpoints.size();
  std::vector<std::vector<double>> times(n);
  std::vector<std::int64_t> peaks(n, 0);
  for (std::size_t rep = 0; rep < cfg.warmup + cfg.repetitions; ++rep) {
    std::vector<double> t(n, 0.0);
    std::vector<std::int64_t> p(n, 0);
    std::size_t next = 0;
    GenerateOptions opts;
    opts.max_steps = checkpoints.back();
    opts.stop_on_eos = false;

    memory::PeakScope scope;
    const auto t0 = Clock::now();
    opts.on_step = [&](std::size_t generated) {
      while (next < n && generated == checkpoints[next]) {
        t[next] = seconds_since(t0);
        p[next] = scope.peak_above_baseline();
        ++next;
      }
    };
    const auto result = ar_generate(lm, phonemes, enrollment, opts, Sampler{0.0, cfg.seed});
    if (result.tokens.size() != checkpoints.back()) throw UsageError("ar_decode: generation ended early");
    if (rep < cfg.warmup) continue;
    for (std::size_t k = 0; k < n; ++k) {
      times[k].push_back(t[k]);
      peaks[k] = std::max(peaks[k], p[k]);
    }
  }

  std::vector<BenchRecord> out;
  for (std::size_t k = 0; k < n; ++k) {
    BenchRecord r{preset.name, Mode::ar_decode, cfg.seed, cfg.durations_s[k], checkpoints[k], peaks[k], 0, 0, 0, {}};
    finish_record(r, std::move(times[k]));
    out.push_back(std::move(r));
  }
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// (task key, backbone) of a series name: catalog presets and "layer:<kind>".
std::optional<std::pair<std::string, Backbone>> series_kind(const std::string& name) {
  if (name.starts_with("layer:")) {
    return std::pair{std::string("layer"),
                     name == "layer:self_attention" ? Backbone::transformer : Backbone::mamba};
  }
  for (const auto& p : preset_catalog()) {
    if (p.name == name) return std::pair{std::string(to_string(p.task)), p.backbone};
  }
  return std::nullopt;
}

bool same_grid(std::span<const BenchRecord> a, std::span<const BenchRecord> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].duration_s != b[i].duration_s) return false;
  }
  return true;
}

}  // namespace

const char* to_string(Mode m) noexcept { return m == Mode::forward ? "forward" : "ar_decode"; }
const char* to_string(Metric m) noexcept { return m == Metric::wall_time ? "wall_time" : "peak_bytes"; }

const char* to_string(LayerKind k) noexcept {
  switch (k) {
    case LayerKind::self_attention: return "self_attention";
    case LayerKind::uni_mamba: return "uni_mamba";
    case LayerKind::bi_mamba: return "bi_mamba";
  }
  return "?";
}

const char* to_string(Direction d) noexcept {
  return d == Direction::a_drops_below_b ? "a_drops_below_b" : "b_drops_below_a";
}

Mode parse_mode(const std::string& s) {
  if (s == "forward") return Mode::forward;
  if (s == "ar_decode") return Mode::ar_decode;
  throw UsageError("unknown mode '" + s + "' (expected forward or ar_decode)");
}

void BenchConfig::validate() const {
  if (repetitions < 3) throw UsageError("bench: repetitions must be >= 3");
  if (durations_s.empty()) throw UsageError("bench: empty duration grid");
  for (std::size_t i = 0; i < durations_s.size(); ++i) {
    if (!(durations_s[i] > 0.0)) throw UsageError("bench: durations must be positive");
    if (i > 0 && !(durations_s[i] > durations_s[i - 1])) {
      throw UsageError("bench: durations must be strictly increasing");
    }
  }
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

std::vector<BenchRecord> measure(const BenchConfig& config) {
  config.validate();
  const ModelPreset preset = load_preset(config.preset);
  if (config.mode == Mode::ar_decode && preset.task != Task::tts) {
    throw UsageError("bench: ar_decode mode needs a TTS preset, '" + preset.name + "' is " + to_string(preset.task));
  }
  for (double d : config.durations_s) {
    if (preset.tokens_for_seconds(d) == 0) {
      throw UsageError("bench: " + fmt(d) + " s is shorter than one " + preset.name + " token");
    }
  }
  BuildOptions build;
  build.depth = config.depth;
  build.skip_nar = true;
  const Model model = build_model(preset, config.seed, build);
  WorkerScope workers(config.workers);
  if (config.mode == Mode::ar_decode) return measure_ar(preset, std::get<CodecLm>(model), config);
  return measure_forward(preset, model, config);
}

std::size_t attention_score_bytes(std::size_t heads, std::size_t length) noexcept {
  return heads * length * length * sizeof(float);
}

std::vector<BenchRecord> measure_layer(const LayerBenchConfig& config) {
  if (config.repetitions < 3) throw UsageError("layer bench: repetitions must be >= 3");
  Rng rng(config.seed);
  MambaConfig mc;
  mc.d_model = config.d_model;
  std::function<void(const FeatureSequence&)> run;
  std::optional<MultiHeadAttention> attn;
  std::optional<UniMambaBlock> uni;
  std::optional<BiMambaBlock> bi;
  switch (config.kind) {
    case LayerKind::self_attention:
      attn = MultiHeadAttention::random(config.d_model, config.heads, rng);
      run = [&](const FeatureSequence& x) { (void)attn->self_attention(x); };
      break;
    case LayerKind::uni_mamba:
      uni = UniMambaBlock::random(mc, rng);
      run = [&](const FeatureSequence& x) { (void)(*uni)(x); };
      break;
    case LayerKind::bi_mamba:
      bi = BiMambaBlock::random(mc, rng);
      run = [&](const FeatureSequence& x) { (void)(*bi)(x); };
      break;
  }

  std::vector<BenchRecord> out;
  for (std::size_t length : config.lengths) {
    if (length == 0) throw UsageError("layer bench: zero-length input");
    const FeatureSequence x = random_sequence(length, config.d_model, rng);
    BenchRecord r{std::string("layer:") + to_string(config.kind), Mode::forward, config.seed,
                  static_cast<double>(length) / 1000.0, length, 0, 0, 0, 0, {}};
    std::vector<double> samples;
    for (std::size_t i = 0; i < config.warmup + config.repetitions; ++i) {
      const Timed t = run_once([&] { run(x); });
      if (i >= config.warmup) {
        samples.push_back(t.seconds);
        r.peak_bytes = std::max(r.peak_bytes, t.peak);
      }
    }
    finish_record(r, std::move(samples));
    out.push_back(std::move(r));
  }
  return out;
}

// --- analysis -------------------------------------------------------------------

ExponentFit fit_exponent(std::span<const BenchRecord> records, Metric metric, std::uint64_t seed,
                         std::size_t resamples) {
  if (records.size() < 4) throw UsageError("fit_exponent: need at least 4 records");
  std::vector<const BenchRecord*> sorted;
  for (const auto& r : records) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->tokens < b->tokens; });
  if (sorted.front()->tokens == 0 || sorted.back()->tokens < 8 * sorted.front()->tokens) {
    throw UsageError("fit_exponent: token counts must span at least 8x");
  }
  for (const auto* r : sorted) {
    if (!(r->metric(metric) > 0.0)) throw UsageError("fit_exponent: metric must be positive");
  }

  const std::size_t first = (sorted.size() - 1) / 2;
  std::vector<double> x, y;
  for (std::size_t i = first; i < sorted.size(); ++i) {
    x.push_back(std::log(static_cast<double>(sorted[i]->tokens)));
    y.push_back(std::log(sorted[i]->metric(metric)));
  }
  ExponentFit fit;
  fit.points = x.size();
  fit.slope = least_squares_slope(x, y);

  Rng rng(seed);
  std::vector<double> slopes;
  slopes.reserve(resamples);
  std::vector<double> yb(y.size()), pick;
  for (std::size_t b = 0; b < resamples; ++b) {
    for (std::size_t i = 0; i < y.size(); ++i) {
      const auto* r = sorted[first + i];
      if (metric != Metric::wall_time || r->wall_samples.empty()) {
        yb[i] = y[i];
        continue;
      }
      pick.clear();
      for (std::size_t k = 0; k < r->wall_samples.size(); ++k) {
        pick.push_back(r->wall_samples[rng.below(r->wall_samples.size())]);
      }
      yb[i] = std::log(quantile(pick, 0.5));
    }
    slopes.push_back(least_squares_slope(x, yb));
  }
  fit.lo = quantile(slopes, 0.025);
  fit.hi = quantile(slopes, 0.975);
  return fit;
}

std::optional<Crossover> detect_crossover(std::span<const BenchRecord> a, std::span<const BenchRecord> b,
                                          Metric metric) {
  if (!same_grid(a, b)) throw UsageError("detect_crossover: the two series use different duration grids");
  std::optional<std::size_t> last;  // index of the last non-zero difference
  double last_diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double va = a[i].metric(metric), vb = b[i].metric(metric);
    if (!(va > 0.0) || !(vb > 0.0)) throw UsageError("detect_crossover: metrics must be positive");
    const double diff = std::log(va) - std::log(vb);
    if (diff == 0.0) continue;
    if (last && (diff > 0.0) != (last_diff > 0.0)) {
      const std::size_t j = *last;
      const double w = last_diff / (last_diff - diff);
      const auto lerp_log = [w](double u, double v) { return std::exp(std::log(u) + (std::log(v) - std::log(u)) * w); };
      Crossover c;
      c.duration_s = lerp_log(a[j].duration_s, a[i].duration_s);
      c.tokens = lerp_log(static_cast<double>(a[j].tokens), static_cast<double>(a[i].tokens));
      c.direction = diff < 0.0 ? Direction::a_drops_below_b : Direction::b_drops_below_a;
      return c;
    }
    last = i;
    last_diff = diff;
  }
  return std::nullopt;
}

CrossoverReport analyze(std::span<const BenchRecord> records) {
  // Series keyed by (preset, mode) in first-seen order.
  std::vector<std::pair<std::string, Mode>> keys;
  std::map<std::pair<std::string, Mode>, std::vector<BenchRecord>> series;
  for (const auto& r : records) {
    const auto key = std::pair{r.preset, r.mode};
    if (!series.contains(key)) keys.push_back(key);
    series[key].push_back(r);
  }

  CrossoverReport report;
  for (const auto& key : keys) {
    for (Metric m : {Metric::peak_bytes, Metric::wall_time}) {
      SeriesFit f{key.first, key.second, m, std::nullopt};
      try {
        f.fit = fit_exponent(series[key], m);
      } catch (const UsageError&) {
      }
      report.fits.push_back(std::move(f));
    }
  }
  for (const auto& ka : keys) {
    const auto kind_a = series_kind(ka.first);
    if (!kind_a || kind_a->second != Backbone::mamba) continue;
    for (const auto& kb : keys) {
      const auto kind_b = series_kind(kb.first);
      if (!kind_b || kind_b->second != Backbone::transformer || kind_b->first != kind_a->first ||
          kb.second != ka.second || !same_grid(series[ka], series[kb])) {
        continue;
      }
      for (Metric m : {Metric::peak_bytes, Metric::wall_time}) {
        report.pairs.push_back(PairCrossover{ka.first, kb.first, ka.second, m,
                                             detect_crossover(series[ka], series[kb], m)});
      }
    }
  }
  return report;
}

std::string CrossoverReport::text() const {
  std::ostringstream os;
  os << "exponents: log-log slope over the upper half of the grid, 95% bootstrap interval\n";
  for (const auto& f : fits) {
    os << "  " << f.preset << ' ' << to_string(f.mode) << ' ' << to_string(f.metric) << ": ";
    if (f.fit) {
      os << "slope " << fixed(f.fit->slope, 3) << " [" << fixed(f.fit->lo, 3) << ", " << fixed(f.fit->hi, 3)
         << "] over " << f.fit->points << " points\n";
    } else {
      os << "grid too small to fit\n";
    }
  }
  os << "crossovers: a = mamba, b = transformer\n";
  if (pairs.empty()) os << "  no comparable pairs measured\n";
  for (const auto& p : pairs) {
    os << "  " << p.preset_a << " vs " << p.preset_b << ' ' << to_string(p.mode) << ' ' << to_string(p.metric)
       << ": ";
    if (p.crossover) {
      os << fixed(p.crossover->duration_s, 3) << " s (" << fixed(p.crossover->tokens, 0) << " tokens), "
         << to_string(p.crossover->direction) << '\n';
    } else {
      os << "none in range\n";
    }
  }
  return os.str();
}

// --- files ----------------------------------------------------------------------

std::string to_csv(std::span<const BenchRecord> records) {
  std::string s = std::string(kCsvHeader) + '\n';
  for (const auto& r : records) {
    s += r.preset + ',' + to_string(r.mode) + ',' + fmt(r.duration_s) + ',' + std::to_string(r.tokens) + ',' +
         std::to_string(r.peak_bytes) + ',' + fmt(r.wall_s_median) + ',' + fmt(r.wall_s_p10) + ',' +
         fmt(r.wall_s_p90) + '\n';
  }
  return s;
}

std::vector<BenchRecord> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw IoError("bench CSV: missing or unexpected header");
  std::vector<BenchRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 8) throw IoError("bench CSV line " + std::to_string(lineno) + ": expected 8 fields");
    try {
      BenchRecord r;
      r.preset = f[0];
      r.mode = parse_mode(f[1]);
      r.duration_s = std::stod(f[2]);
      r.tokens = std::stoull(f[3]);
      r.peak_bytes = std::stoll(f[4]);
      r.wall_s_median = std::stod(f[5]);
      r.wall_s_p10 = std::stod(f[6]);
      r.wall_s_p90 = std::stod(f[7]);
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw IoError("bench CSV line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::string to_svg(std::span<const BenchRecord> records) {
  constexpr double kPanelW = 440, kPanelH = 320, kLeft = 70, kTop = 40, kGap = 90;
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

  std::vector<std::pair<std::string, Mode>> keys;
  for (const auto& r : records) {
    const auto key = std::pair{r.preset, r.mode};
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
  }

  const double width = kLeft + 2 * kPanelW + kGap + 40;
  const double height = kTop + kPanelH + 60 + 18.0 * static_cast<double>(keys.size());
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  const Metric metrics[] = {Metric::peak_bytes, Metric::wall_time};
  const char* titles[] = {"peak bytes vs duration", "wall time (s, median) vs duration"};
  for (int panel = 0; panel < 2; ++panel) {
    const Metric m = metrics[panel];
    const double x0 = kLeft + panel * (kPanelW + kGap);
    double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
    for (const auto& r : records) {
      if (!(r.metric(m) > 0.0) || !(r.duration_s > 0.0)) continue;
      xmin = std::min(xmin, std::log10(r.duration_s));
      xmax = std::max(xmax, std::log10(r.duration_s));
      ymin = std::min(ymin, std::log10(r.metric(m)));
      ymax = std::max(ymax, std::log10(r.metric(m)));
    }
    if (!(xmin <= xmax)) xmin = 0, xmax = 1;
    if (!(ymin <= ymax)) ymin = 0, ymax = 1;
    xmin = std::floor(xmin), xmax = std::max(std::ceil(xmax), xmin + 1);
    ymin = std::floor(ymin), ymax = std::max(std::ceil(ymax), ymin + 1);
    const auto px = [&](double v) { return x0 + (std::log10(v) - xmin) / (xmax - xmin) * kPanelW; };
    const auto py = [&](double v) { return kTop + kPanelH - (std::log10(v) - ymin) / (ymax - ymin) * kPanelH; };

    os << "<text x=\"" << x0 << "\" y=\"" << kTop - 12 << "\" font-size=\"13\">" << titles[panel] << "</text>\n";
    os << "<rect x=\"" << x0 << "\" y=\"" << kTop << "\" width=\"" << kPanelW << "\" height=\"" << kPanelH
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (double e = xmin; e <= xmax + 1e-9; e += 1.0) {
      const double x = x0 + (e - xmin) / (xmax - xmin) * kPanelW;
      os << "<line x1=\"" << x << "\" y1=\"" << kTop << "\" x2=\"" << x << "\" y2=\"" << kTop + kPanelH
         << "\" stroke=\"#ddd\"/><text x=\"" << x << "\" y=\"" << kTop + kPanelH + 14
         << "\" text-anchor=\"middle\">1e" << static_cast<int>(e) << "</text>\n";
    }
    for (double e = ymin; e <= ymax + 1e-9; e += 1.0) {
      const double y = kTop + kPanelH - (e - ymin) / (ymax - ymin) * kPanelH;
      os << "<line x1=\"" << x0 << "\" y1=\"" << y << "\" x2=\"" << x0 + kPanelW << "\" y2=\"" << y
         << "\" stroke=\"#ddd\"/><text x=\"" << x0 - 4 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">1e"
         << static_cast<int>(e) << "</text>\n";
    }
    os << "<text x=\"" << x0 + kPanelW / 2 << "\" y=\"" << kTop + kPanelH + 30
       << "\" text-anchor=\"middle\">duration (s)</text>\n";

    for (std::size_t k = 0; k < keys.size(); ++k) {
      const char* color = kColors[k % std::size(kColors)];
      std::string points;
      for (const auto& r : records) {
        if (r.preset != keys[k].first || r.mode != keys[k].second || !(r.metric(m) > 0.0)) continue;
        points += fixed(px(r.duration_s), 1) + ',' + fixed(py(r.metric(m)), 1) + ' ';
        os << "<circle cx=\"" << fixed(px(r.duration_s), 1) << "\" cy=\"" << fixed(py(r.metric(m)), 1)
           << "\" r=\"3\" fill=\"" << color << "\"/>\n";
      }
      os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"" << points
         << "\"/>\n";
    }
  }
  for (std::size_t k = 0; k < keys.size(); ++k) {
    const double y = kTop + kPanelH + 50 + 18.0 * static_cast<double>(k);
    os << "<rect x=\"" << kLeft << "\" y=\"" << y - 9 << "\" width=\"12\" height=\"10\" fill=\""
       << kColors[k % std::size(kColors)] << "\"/><text x=\"" << kLeft + 18 << "\" y=\"" << y << "\">"
       << keys[k].first << " (" << to_string(keys[k].second) << ")</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void emit_report(std::span<const BenchRecord> records, const CrossoverReport& report,
                 const std::filesystem::path& out_dir) {
  if (records.empty()) throw UsageError("emit_report: no records to write");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());
  const auto write = [](const std::filesystem::path& path, const std::string& content) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path.string());
    f << content;
    if (!f) throw IoError("short write to " + path.string());
  };
  write(out_dir / "bench.csv", to_csv(records));
  write(out_dir / "bench.svg", to_svg(records));
  write(out_dir / "report.txt", report.text());
}

// --- step latency -----------------------------------------------------------------

LatencyTrend latency_trend(std::span<const double> step_seconds, std::size_t window) {
  LatencyTrend t;
  const std::size_t n = step_seconds.size();
  if (n < 2) return t;
  if (window == 0 || n < 2 * window) window = std::max<std::size_t>(1, n / 4);
  std::vector<double> x, y;
  for (std::size_t start = 0; start + window <= n; start += window) {
    std::vector<double> w(step_seconds.begin() + static_cast<std::ptrdiff_t>(start),
                          step_seconds.begin() + static_cast<std::ptrdiff_t>(start + window));
    x.push_back(static_cast<double>(start) + 0.5 * static_cast<double>(window - 1));
    y.push_back(quantile(std::move(w), 0.5));
  }
  t.median_s = quantile(std::vector<double>(step_seconds.begin(), step_seconds.end()), 0.5);
  if (x.size() >= 2) t.slope_s_per_step = least_squares_slope(x, y);
  if (t.median_s > 0.0) t.relative_growth = t.slope_s_per_step * static_cast<double>(n) / t.median_s;
  return t;
}

std::uint64_t available_memory_bytes() {
  std::ifstream f("/proc/meminfo");
  std::string key;
  std::uint64_t value = 0;
  std::string unit;
  while (f >> key >> value >> unit) {
    if (key == "MemAvailable:") return value * 1024;
  }
  return 0;
}

}  // namespace mamba::bench
