#pragma once

// Memory / wall-time benchmark harness: measurement over a duration grid,
// log-log exponent fits, crossover detection and CSV/SVG reports.
//
// Peak memory is the high-water mark of library-owned (tracked) bytes above
// what was live when the measured call started, so model weights and inputs
// are excluded and the figure is deterministic.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mamba/presets.hpp"

namespace mamba::bench {

enum class Mode { forward, ar_decode };
enum class Metric { wall_time, peak_bytes };

const char* to_string(Mode m) noexcept;
const char* to_string(Metric m) noexcept;
/// "forward" / "ar_decode"; anything else -> UsageError.
Mode parse_mode(const std::string& s);

struct BenchConfig {
  std::string preset;
  std::vector<double> durations_s;
  std::size_t repetitions = 3;
  std::size_t warmup = 1;
  Mode mode = Mode::forward;
  std::uint64_t seed = 0;
  /// Stack depth override for every model stack (see BuildOptions).
  std::optional<std::size_t> depth;
  unsigned workers = 1;
  /// ar_decode prompt: phoneme count and enrollment length in seconds.
  std::size_t text_len = 32;
  double enroll_s = 3.0;

  /// repetitions >= 3, durations > 0 and strictly increasing; else UsageError.
  void validate() const;
};

struct BenchRecord {
  std::string preset;
  Mode mode = Mode::forward;
  std::uint64_t seed = 0;
  double duration_s = 0.0;
  std::size_t tokens = 0;
  std::int64_t peak_bytes = 0;
  double wall_s_median = 0.0;
  double wall_s_p10 = 0.0;
  double wall_s_p90 = 0.0;
  /// Per-repetition wall times (not written to CSV).
  std::vector<double> wall_samples;

  double metric(Metric m) const noexcept {
    return m == Metric::wall_time ? wall_s_median : static_cast<double>(peak_bytes);
  }
};

/// Quantile with linear interpolation between order statistics.
double quantile(std::vector<double> values, double q);

/// Runs the configured preset over the duration grid. Forward mode times one
/// full forward pass (separation: separate(); ASR: encoder; TTS:
/// teacher-forced AR pass). ar_decode (TTS only) generates up to the longest
/// duration once per repetition and records cumulative time and peak bytes
/// when each grid duration's token count is reached.
std::vector<BenchRecord> measure(const BenchConfig& config);

/// Single-layer benchmark over token counts (duration_s = tokens / 1000).
enum class LayerKind { self_attention, uni_mamba, bi_mamba };
const char* to_string(LayerKind k) noexcept;

struct LayerBenchConfig {
  LayerKind kind = LayerKind::uni_mamba;
  std::size_t d_model = 64;
  std::size_t heads = 1;
  std::vector<std::size_t> lengths;
  std::size_t repetitions = 3;
  std::size_t warmup = 1;
  std::uint64_t seed = 0;
};

/// Bytes the attention score matrix needs at `length` tokens.
std::size_t attention_score_bytes(std::size_t heads, std::size_t length) noexcept;

std::vector<BenchRecord> measure_layer(const LayerBenchConfig& config);

// --- analysis -------------------------------------------------------------------

struct ExponentFit {
  double slope = 0.0;
  double lo = 0.0;  // 95% bootstrap interval
  double hi = 0.0;
  std::size_t points = 0;  // records used (upper half of the grid)
};

/// Least-squares slope of log(metric) on log(tokens) over records from index
/// (n-1)/2 upward (sorted by tokens). Needs >= 4 records spanning >= 8x in
/// tokens and positive metrics; else UsageError. The interval resamples the
/// repetitions of each record (records without samples stay fixed).
ExponentFit fit_exponent(std::span<const BenchRecord> records, Metric metric, std::uint64_t seed = 0,
                         std::size_t resamples = 1000);

enum class Direction { a_drops_below_b, b_drops_below_a };
const char* to_string(Direction d) noexcept;

struct Crossover {
  double duration_s = 0.0;
  double tokens = 0.0;
  Direction direction = Direction::a_drops_below_b;
};

/// First strict sign change of log(a) - log(b), located by linear
/// interpolation in log-log space. Grids must match; else UsageError.
std::optional<Crossover> detect_crossover(std::span<const BenchRecord> a, std::span<const BenchRecord> b,
                                          Metric metric);

struct SeriesFit {
  std::string preset;
  Mode mode = Mode::forward;
  Metric metric = Metric::wall_time;
  std::optional<ExponentFit> fit;  // none when the grid is too small
};

struct PairCrossover {
  std::string preset_a;
  std::string preset_b;
  Mode mode = Mode::forward;
  Metric metric = Metric::wall_time;
  std::optional<Crossover> crossover;
};

struct CrossoverReport {
  std::vector<SeriesFit> fits;
  std::vector<PairCrossover> pairs;

  std::string text() const;
};

/// Fits every (preset, mode) series and compares each Mamba-backed catalog
/// preset (a) with each transformer-backed preset (b) of the same task and
/// mode measured on the same grid.
CrossoverReport analyze(std::span<const BenchRecord> records);

/// Writes bench.csv, bench.svg and report.txt into `out_dir`.
/// Empty records -> UsageError; unwritable paths -> IoError.
void emit_report(std::span<const BenchRecord> records, const CrossoverReport& report,
                 const std::filesystem::path& out_dir);

inline constexpr const char* kCsvHeader =
    "preset,mode,duration_s,tokens,peak_bytes,wall_s_median,wall_s_p10,wall_s_p90";

std::string to_csv(std::span<const BenchRecord> records);
std::vector<BenchRecord> parse_csv(const std::string& text);
std::string to_svg(std::span<const BenchRecord> records);

// --- step latency -----------------------------------------------------------------

struct LatencyTrend {
  double slope_s_per_step = 0.0;  // fit over window medians
  double median_s = 0.0;
  /// slope * steps / median: relative growth across the run.
  double relative_growth = 0.0;
};

/// Trend of per-step latencies, robust to outliers (median per window of
/// `window` steps, least squares over window centres).
LatencyTrend latency_trend(std::span<const double> step_seconds, std::size_t window = 100);

/// MemAvailable from /proc/meminfo, or 0 if unknown.
std::uint64_t available_memory_bytes();

}  // namespace mamba::bench
