#include "mamba/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "mamba/bench.hpp"
#include "mamba/errors.hpp"
#include "mamba/presets.hpp"
#include "mamba/ssm.hpp"
#include "mamba/verify.hpp"

namespace mamba {
namespace {

namespace fs = std::filesystem;

struct Options {
  std::string scope;
  std::vector<std::string> presets;
  std::vector<double> durations;
  std::string mode = "forward";
  std::uint64_t seed = 0;
  std::string out_dir;
  unsigned workers = 1;
  std::size_t reps = 3;
  std::size_t warmup = 1;
  std::optional<std::size_t> depth;
  std::size_t text_len = 32;
  double enroll_len = 3.0;
  std::size_t max_steps = 200;
  double temperature = 1.0;
  std::string input;
};

fs::path resolve_out_dir(const Options& o) {
  if (!o.out_dir.empty()) return o.out_dir;
  if (const char* env = std::getenv(kOutDirEnv); env != nullptr && *env != '\0') return env;
  throw UsageError(std::string("no output directory: pass --out-dir or set ") + kOutDirEnv);
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

class FaultScope {
 public:
  FaultScope() {
    const char* f = std::getenv(kFaultEnv);
    active_ = f != nullptr && std::string(f) == "scan-order";
    if (active_) ssm::testing::set_scan_order_fault(true);
  }
  ~FaultScope() {
    if (active_) ssm::testing::set_scan_order_fault(false);
  }

 private:
  bool active_ = false;
};

int cmd_verify(const Options& o, std::ostream& out) {
  FaultScope fault;
  const auto results = run_verify(o.scope);
  std::size_t failed = 0;
  for (const auto& r : results) {
    out << (r.passed ? "ok    " : "FAIL  ") << r.name << "  "
        << (r.witness ? "effect=" : "max_abs=") << sci(r.value) << "  "
        << (r.witness ? "needs > " : "tol=") << sci(r.tolerance) << '\n';
    if (!r.passed) ++failed;
  }
  out << results.size() - failed << '/' << results.size() << " suites passed\n";
  return failed == 0 ? kExitOk : kExitFailure;
}

int cmd_bench(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.presets.empty()) throw UsageError("bench: --presets needs at least one preset");
  const fs::path dir = resolve_out_dir(o);
  std::vector<bench::BenchRecord> records;
  for (const auto& name : o.presets) {
    bench::BenchConfig cfg;
    cfg.preset = name;
    cfg.durations_s = o.durations;
    cfg.repetitions = o.reps;
    cfg.warmup = o.warmup;
    cfg.mode = bench::parse_mode(o.mode);
    cfg.seed = o.seed;
    cfg.depth = o.depth;
    cfg.workers = o.workers;
    cfg.text_len = o.text_len;
    cfg.enroll_s = o.enroll_len;
    cfg.validate();
    const auto preset = load_preset(name);
    out << "measuring " << name << " (" << to_string(preset.task) << ", " << o.mode << ")\n" << std::flush;
    auto rs = bench::measure(cfg);
    records.insert(records.end(), rs.begin(), rs.end());
  }

  std::size_t violations = 0;
  for (const auto& r : records) {
    if (r.peak_bytes <= 0 || r.tokens != load_preset(r.preset).tokens_for_seconds(r.duration_s)) {
      err << "bench: invalid record for " << r.preset << " at " << r.duration_s << " s\n";
      ++violations;
    }
  }
  const auto report = bench::analyze(records);
  bench::emit_report(records, report, dir);
  out << report.text();
  out << "wrote " << (dir / "bench.csv").string() << ", " << (dir / "bench.svg").string() << ", "
      << (dir / "report.txt").string() << '\n';
  return violations == 0 ? kExitOk : kExitFailure;
}

int cmd_generate(const Options& o, std::ostream& out) {
  if (o.presets.size() != 1) throw UsageError("generate: pass exactly one preset");
  const auto preset = load_preset(o.presets.front());
  if (preset.task != Task::tts) {
    throw UsageError("generate: '" + preset.name + "' is a " + to_string(preset.task) + " preset, not tts");
  }
  if (o.max_steps == 0) throw UsageError("generate: --max-steps must be >= 1");
  const fs::path dir = resolve_out_dir(o);

  BuildOptions build;
  build.depth = o.depth;
  build.skip_nar = true;
  const auto model = build_model(preset, o.seed, build);
  const auto& lm = std::get<CodecLm>(model);

  Rng rng(o.seed);
  std::vector<int> phonemes(std::max<std::size_t>(1, o.text_len));
  for (int& v : phonemes) v = static_cast<int>(rng.below(lm.config.phoneme_vocab));
  std::vector<int> enrollment(std::max<std::size_t>(1, preset.tokens_for_seconds(o.enroll_len)));
  for (int& v : enrollment) v = static_cast<int>(rng.below(lm.config.codebook_size));

  GenerateOptions opts;
  opts.max_steps = o.max_steps;
  ssm::set_scan_workers(o.workers);
  const auto result = ar_generate(lm, phonemes, enrollment, opts, Sampler{o.temperature, o.seed});

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  const auto write = [](const fs::path& path, const std::string& content) {
    std::ofstream f(path);
    if (!f || !(f << content)) throw IoError("cannot write " + path.string());
  };
  std::string tokens, latency = "step,seconds\n";
  for (int t : result.tokens) tokens += std::to_string(t) + '\n';
  for (std::size_t i = 0; i < result.step_seconds.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%zu,%.9g\n", i, result.step_seconds[i]);
    latency += buf;
  }
  write(dir / "tokens.txt", tokens);
  write(dir / "latency.csv", latency);

  const auto trend = bench::latency_trend(result.step_seconds);
  out << "generated " << result.tokens.size() << " tokens" << (result.hit_eos ? " (stopped at EOS)" : "") << '\n';
  out << "step latency: median " << sci(trend.median_s) << " s, slope " << sci(trend.slope_s_per_step)
      << " s/step, relative growth " << sci(trend.relative_growth) << '\n';
  out << "wrote " << (dir / "tokens.txt").string() << ", " << (dir / "latency.csv").string() << '\n';
  return kExitOk;
}

int cmd_report(const Options& o, std::ostream& out) {
  const fs::path dir = resolve_out_dir(o);
  const fs::path input = o.input.empty() ? dir / "bench.csv" : fs::path(o.input);
  std::ifstream f(input);
  if (!f) throw IoError("cannot read " + input.string());
  std::stringstream ss;
  ss << f.rdbuf();
  const auto records = bench::parse_csv(ss.str());
  const auto report = bench::analyze(records);
  bench::emit_report(records, report, dir);
  out << report.text();
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Selective state space models vs attention: verification and efficiency benchmarks", "mambabench"};
  app.require_subcommand(1);
  Options o;

  auto* verify = app.add_subcommand("verify", "Run the self-check suites");
  verify->add_option("scope", o.scope, "ssm, layers, attention, archs or all")->required();

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", o.seed, "Seed for weights and synthetic inputs")->capture_default_str();
    sub->add_option("--out-dir", o.out_dir, std::string("Output directory (default: $") + kOutDirEnv + ")");
    sub->add_option("--workers", o.workers, "Scan worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--depth", o.depth, "Override every stack depth of the preset");
  };

  auto* bench_cmd = app.add_subcommand("bench", "Measure peak memory and wall time over a duration grid");
  bench_cmd->add_option("--presets", o.presets, "Comma-separated preset names")->delimiter(',')->required();
  bench_cmd->add_option("--durations", o.durations, "Comma-separated durations in seconds")
      ->delimiter(',')
      ->required();
  bench_cmd->add_option("--mode", o.mode, "forward or ar_decode")->capture_default_str();
  bench_cmd->add_option("--reps", o.reps, "Timed repetitions (>= 3)")->capture_default_str();
  bench_cmd->add_option("--warmup", o.warmup, "Discarded warmup runs")->capture_default_str();
  bench_cmd->add_option("--text-len", o.text_len, "ar_decode: phoneme prompt length")->capture_default_str();
  bench_cmd->add_option("--enroll-len", o.enroll_len, "ar_decode: enrollment seconds")->capture_default_str();
  add_common(bench_cmd);

  auto* gen = app.add_subcommand("generate", "Sample codebook-1 tokens from a TTS preset");
  gen->add_option("--presets,--preset", o.presets, "TTS preset name")->delimiter(',')->required();
  gen->add_option("--text-len", o.text_len, "Phoneme prompt length")->capture_default_str();
  gen->add_option("--enroll-len", o.enroll_len, "Enrollment length in seconds")->capture_default_str();
  gen->add_option("--max-steps", o.max_steps, "Maximum generated tokens")->capture_default_str();
  gen->add_option("--temperature", o.temperature, "Sampling temperature (0 = greedy)")->capture_default_str();
  add_common(gen);

  auto* report = app.add_subcommand("report", "Re-analyse a bench CSV and rewrite the report files");
  report->add_option("--input", o.input, "bench.csv to read (default: <out-dir>/bench.csv)");
  report->add_option("--out-dir", o.out_dir, std::string("Output directory (default: $") + kOutDirEnv + ")");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (verify->parsed()) return cmd_verify(o, out);
    if (bench_cmd->parsed()) return cmd_bench(o, out, err);
    if (gen->parsed()) return cmd_generate(o, out);
    return cmd_report(o, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace mamba
