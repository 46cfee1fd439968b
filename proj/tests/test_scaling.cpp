#include <doctest.h>

#include <chrono>

#include "mamba/attention.hpp"
#include "mamba/bench.hpp"
#include "mamba/ssm.hpp"

using namespace mamba;
using namespace mamba::bench;

namespace {

using Clock = std::chrono::steady_clock;

template <class F>
double best_of(int n, F f) {
  double best = 1e300;
  for (int i = 0; i < n; ++i) {
    const auto t0 = Clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(Clock::now() - t0).count());
  }
  return best;
}

}  // namespace

TEST_CASE("doubling the length roughly doubles Mamba layer time") {
  for (LayerKind k : {LayerKind::uni_mamba, LayerKind::bi_mamba}) {
    LayerBenchConfig c;
    c.kind = k;
    c.lengths = {4096, 8192};
    c.repetitions = 5;
    const auto rs = measure_layer(c);
    const double ratio = rs[1].wall_s_median / rs[0].wall_s_median;
    CAPTURE(to_string(k));
    CHECK(ratio > 1.6);
    CHECK(ratio < 2.6);
  }
}

TEST_CASE("SSM step cost does not depend on position") {
  Rng rng(1);
  const auto p = ssm::SelectiveSsmParams::random(64, rng);
  const auto x = random_sequence(1, 64, rng);
  auto state = ssm::SsmState::zeros(64, p.state_size());
  std::vector<float> y(64);
  const auto block = [&] {
    for (int i = 0; i < 500; ++i) ssm::ssm_step_inplace(state, x.row(0), p, y);
  };
  const double early = best_of(3, block);
  for (int i = 0; i < 20; ++i) block();
  const double late = best_of(3, block);
  CHECK(late / early > 0.6);
  CHECK(late / early < 1.6);
}

TEST_CASE("attention step cost grows with the cache") {
  Rng rng(2);
  const auto m = MultiHeadAttention::random(64, 1, rng);
  const auto x = random_sequence(1, 64, rng);
  auto cache = m.empty_cache();
  std::vector<float> y(64);
  const auto block = [&] {
    for (int i = 0; i < 200; ++i) m.step(cache, x.row(0), y);
  };
  const double early = best_of(1, block);
  for (int i = 0; i < 40; ++i) block();
  const double late = best_of(1, block);
  CHECK(late / early > 3.0);
}

TEST_CASE("separation memory grows linearly for Mamba") {
  BenchConfig c;
  c.preset = "mamba-tasnet-m";
  c.durations_s = {0.25, 0.5, 1.0, 2.0};
  c.depth = 1;
  c.warmup = 0;
  const auto rs = measure(c);
  const auto fit = fit_exponent(rs, Metric::peak_bytes);
  CHECK(fit.slope > 0.9);
  CHECK(fit.slope < 1.1);
}
