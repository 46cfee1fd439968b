#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "mamba/errors.hpp"
#include "mamba/fixture.hpp"
#include "mamba/memory.hpp"
#include "mamba/ssm.hpp"
#include "oracles.hpp"

using namespace mamba;
using namespace mamba::ssm;

namespace {

void zero(Matrix& m) {
  for (float& v : m.values()) v = 0.0f;
}

// Constant-parameter model: all projection weights zero, so Delta, B and C
// come from the biases only.
SelectiveSsmParams lti(std::size_t channels, std::size_t state, Rng& rng) {
  SsmInit init;
  init.state_size = state;
  auto p = SelectiveSsmParams::random(channels, rng, init);
  zero(p.b_proj.weight);
  zero(p.c_proj.weight);
  zero(p.delta_down.weight);
  for (float& v : p.b_proj.bias) v = static_cast<float>(rng.normal());
  for (float& v : p.c_proj.bias) v = static_cast<float>(rng.normal());
  for (float& v : p.a_log.values()) v = static_cast<float>(rng.uniform(-2.0, 1.0));
  return p;
}

// D = 1, N = 1 with Abar = 0.5 (A = -1, Delta = ln 2), Bbar ~ 1.
SelectiveSsmParams scalar(float c, float d, float b = 1.0f) {
  Rng rng(0);
  SsmInit init;
  init.state_size = 1;
  auto p = SelectiveSsmParams::random(1, rng, init);
  zero(p.b_proj.weight);
  zero(p.c_proj.weight);
  zero(p.delta_down.weight);
  zero(p.delta_up.weight);
  p.a_log(0, 0) = 0.0f;
  p.delta_up.bias[0] = 0.0f;  // softplus(0) = ln 2
  p.b_proj.bias[0] = b;
  p.c_proj.bias[0] = c;
  p.d_skip[0] = d;
  return p;
}

}  // namespace

TEST_CASE("selectivize") {
  Rng rng(1);
  const auto x = random_sequence(5, 8, rng);
  auto p = SelectiveSsmParams::random(8, rng);

  SUBCASE("shape contract") {
    const auto d = selectivize(x, p);
    CHECK(d.a_bar.size() == 5 * 8 * 16);
    CHECK(d.b_bar.size() == 5 * 8 * 16);
    CHECK(d.c.size() == 5 * 16);
    for (float a : d.a_bar) {
      CHECK(a > 0.0f);
      CHECK(a < 1.0f);
    }
    const auto proj = project(x, p);
    for (float v : proj.delta.values()) CHECK(v > 0.0f);
  }
  SUBCASE("zero step size gives identity dynamics") {
    zero(p.delta_up.weight);
    for (float& v : p.delta_up.bias) v = -100.0f;
    const auto d = selectivize(x, p);
    for (float a : d.a_bar) CHECK(a == doctest::Approx(1.0).epsilon(1e-7));
    for (float b : d.b_bar) CHECK(std::abs(b) < 1e-30);
  }
  SUBCASE("A = -1 and Delta = ln 2 give Abar = 0.5 exactly") {
    zero(p.delta_up.weight);
    for (float& v : p.delta_up.bias) v = 0.0f;
    zero(p.a_log);
    const auto d = selectivize(x, p);
    for (float a : d.a_bar) CHECK(a == 0.5f);
  }
  CHECK_THROWS_AS(selectivize(random_sequence(2, 4, rng), p), ShapeError);
}

TEST_CASE("recurrence") {
  SUBCASE("memoryless case") {
    Rng rng(2);
    auto p = SelectiveSsmParams::random(4, rng);
    for (float& v : p.a_log.values()) v = 30.0f;  // A = -1e13, Abar = 0
    const auto x = random_sequence(6, 4, rng);
    const auto proj = project(x, p);
    const auto y = ssm_recurrence(x, p);
    for (std::size_t t = 0; t < 6; ++t)
      for (std::size_t e = 0; e < 4; ++e) {
        double want = p.d_skip[e] * x(t, e);
        for (std::size_t n = 0; n < 16; ++n)
          want += static_cast<double>(proj.c(t, n)) * proj.delta(t, e) * proj.b(t, n) * x(t, e);
        CHECK(std::abs(y(t, e) - want) < 1e-5);
      }
  }
  SUBCASE("hand recurrence with D = N = 1") {
    const auto p = scalar(2.0f, 0.5f, 1.5f);
    const double delta = std::log(2.0);
    const double a = 0.5, b = delta * 1.5, c = 2.0, d = 0.5;
    const auto y = ssm_recurrence(FeatureSequence::from_rows({{1}, {0}, {0}}), p);
    CHECK(y(0, 0) == doctest::Approx(c * b + d).epsilon(1e-6));
    CHECK(y(1, 0) == doctest::Approx(c * a * b).epsilon(1e-6));
    CHECK(y(2, 0) == doctest::Approx(c * a * a * b).epsilon(1e-6));
  }
  SUBCASE("agrees with a double-precision oracle") {
    Rng rng(3);
    const auto p = SelectiveSsmParams::random(8, rng);
    const auto x = random_sequence(200, 8, rng);
    CHECK(oracle::max_abs(ssm_recurrence(x, p).values(), oracle::ssm(x, p)) < 1e-4);
  }
}

TEST_CASE("scan matches the recurrence") {
  for (std::size_t d : {8u, 64u}) {
    for (std::size_t l : {1u, 2u, 3u, 7u, 64u, 1000u, 4096u}) {
      for (std::uint64_t seed : {0u, 1u, 2u}) {
        Rng rng(seed * 7919 + l * 31 + d);
        const auto p = SelectiveSsmParams::random(d, rng);
        const auto x = random_sequence(l, d, rng);
        const double err = max_abs_diff(ssm_scan(x, p), ssm_recurrence(x, p));
        CAPTURE(l);
        CAPTURE(d);
        CHECK(err < 1e-5);
      }
    }
  }
}

TEST_CASE("scan on a single token is the recurrence step, bit for bit") {
  Rng rng(4);
  const auto p = SelectiveSsmParams::random(16, rng);
  const auto x = random_sequence(1, 16, rng);
  CHECK(ssm_scan(x, p) == ssm_recurrence(x, p));
}

TEST_CASE("scan result is independent of worker count") {
  Rng rng(5);
  const auto p = SelectiveSsmParams::random(40, rng);
  const auto x = random_sequence(333, 40, rng);
  set_scan_workers(1);
  memory::PeakScope one;
  const auto y1 = ssm_scan(x, p);
  const auto alloc1 = one.allocations();
  const auto peak1 = one.peak_above_baseline();
  for (unsigned w : {2u, 3u, 8u}) {
    set_scan_workers(w);
    memory::PeakScope many;
    CHECK(ssm_scan(x, p) == y1);
    CHECK(many.allocations() == alloc1);
    CHECK(many.peak_above_baseline() == peak1);
  }
  set_scan_workers(1);
}

TEST_CASE("scan element composition is associative") {
  Rng rng(6);
  auto random_element = [&] {
    auto e = ScanElement::identity(4, 16);
    for (double& v : e.a) v = rng.uniform(0.0, 1.0);
    for (double& v : e.b) v = rng.normal();
    return e;
  };
  for (int trial = 0; trial < 50; ++trial) {
    const auto e1 = random_element(), e2 = random_element(), e3 = random_element();
    const auto left = compose(compose(e1, e2), e3);
    const auto right = compose(e1, compose(e2, e3));
    for (std::size_t i = 0; i < left.a.size(); ++i) {
      CHECK(std::abs(left.a[i] - right.a[i]) < 1e-6);
      CHECK(std::abs(left.b[i] - right.b[i]) < 1e-6);
    }
  }
  const auto e = random_element();
  const auto id = ScanElement::identity(4, 16);
  CHECK(compose(e, id).b == e.b);
  CHECK(compose(id, e).a == e.a);
}

TEST_CASE("kernel convolution form") {
  SUBCASE("scalar kernel taps") {
    const auto p = scalar(2.0f, 0.0f, 1.5f);
    const auto k = ssm_kernel(time_invariant_form(p), 3);
    const double b = std::log(2.0) * 1.5, c = 2.0;
    CHECK(k(0, 0) == doctest::Approx(c * b).epsilon(1e-6));
    CHECK(k(1, 0) == doctest::Approx(c * 0.5 * b).epsilon(1e-6));
    CHECK(k(2, 0) == doctest::Approx(c * 0.25 * b).epsilon(1e-6));
    const auto x = FeatureSequence::from_rows({{0.3f}, {-1.0f}, {2.0f}});
    CHECK(max_abs_diff(ssm_kernel_conv(x, p), ssm_recurrence(x, p)) < 1e-6);
  }
  SUBCASE("a = 0 is memoryless") {
    auto p = scalar(2.0f, 0.0f);
    p.a_log(0, 0) = 30.0f;
    const auto k = ssm_kernel(time_invariant_form(p), 3);
    CHECK(k(0, 0) != 0.0f);
    CHECK(k(1, 0) == 0.0f);
    CHECK(k(2, 0) == 0.0f);
  }
  SUBCASE("random LTI models agree with the recurrence") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Rng rng(seed);
      const auto p1 = lti(1, 1, rng);
      const auto x1 = random_sequence(32, 1, rng);
      CHECK(max_abs_diff(ssm_kernel_conv(x1, p1), ssm_recurrence(x1, p1)) < 1e-5);
      const auto p = lti(8, 16, rng);
      const auto x = random_sequence(256, 8, rng);
      CHECK(max_abs_diff(ssm_kernel_conv(x, p), ssm_recurrence(x, p)) < 1e-5);
      CHECK(max_abs_diff(ssm_kernel_conv(x, p), ssm_scan(x, p)) < 1e-5);
    }
  }
  SUBCASE("selective parameters are rejected") {
    Rng rng(7);
    const auto p = SelectiveSsmParams::random(4, rng);
    CHECK_FALSE(p.is_time_invariant());
    CHECK_THROWS_AS(ssm_kernel_conv(random_sequence(3, 4, rng), p), UsageError);
  }
}

TEST_CASE("step") {
  Rng rng(8);
  const auto p = SelectiveSsmParams::random(12, rng);
  SUBCASE("folding steps reproduces the recurrence exactly") {
    const auto x = random_sequence(300, 12, rng);
    const auto y = ssm_recurrence(x, p);
    auto state = SsmState::zeros(12, 16);
    for (std::size_t t = 0; t < 300; ++t) {
      auto r = ssm_step(std::move(state), x.row(t), p);
      CHECK(std::equal(r.y.begin(), r.y.end(), y.row(t).begin()));
      CHECK(r.state.position == static_cast<std::int64_t>(t));
      state = std::move(r.state);
    }
  }
  SUBCASE("zero input from zero state") {
    const std::vector<float> x(12, 0.0f);
    const auto r = ssm_step(SsmState::zeros(12, 16), x, p);
    for (float v : r.y) CHECK(v == 0.0f);
    for (double h : r.state.h) CHECK(h == 0.0);
  }
  SUBCASE("state does not grow with the step count") {
    auto state = SsmState::zeros(12, 16);
    const auto bytes = state.h.capacity();
    std::vector<float> y(12);
    const auto x = random_sequence(50, 12, rng);
    for (std::size_t t = 0; t < 50; ++t) ssm_step_inplace(state, x.row(t), p, y);
    CHECK(state.h.capacity() == bytes);
  }
}

TEST_CASE("causality of every evaluation path") {
  Rng rng(9);
  const auto p = SelectiveSsmParams::random(8, rng);
  const auto x = random_sequence(64, 8, rng);
  using Fn = FeatureSequence (*)(const FeatureSequence&, const SelectiveSsmParams&);
  for (Fn f : {Fn{ssm_recurrence}, Fn{ssm_scan}}) {
    const auto y = f(x, p);
    for (std::size_t t0 : {0u, 5u, 31u, 63u}) {
      auto xp = x;
      xp(t0, 3) += 0.5f;
      const auto yp = f(xp, p);
      CHECK(std::equal(y.data(), y.data() + t0 * 8, yp.data()));
      CHECK(yp(t0, 3) != y(t0, 3));
    }
  }
}

TEST_CASE("long sequences stay bounded") {
  Rng rng(10);
  const auto p = SelectiveSsmParams::random(4, rng);
  const auto x = random_sequence(100000, 4, rng);
  const auto y = ssm_scan(x, p);
  CHECK(all_finite(y.values()));
  float peak = 0.0f;
  for (float v : y.values()) peak = std::max(peak, std::abs(v));
  CHECK(peak < 1e3f);
}

TEST_CASE("golden vectors") {
  const std::filesystem::path dir = MAMBA_FIXTURE_DIR;
  int checked = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (!name.starts_with("x_") || entry.path().extension() != ".json") continue;
    const auto xf = read_fixture(entry.path());
    const auto yf = read_fixture(dir / ("y_" + name.substr(2)));
    const auto x = xf.as_sequence();
    Rng rng(xf.seed);
    const auto p = SelectiveSsmParams::random(x.channels(), rng);
    CAPTURE(name);
    CHECK(max_abs_diff(ssm_scan(x, p), yf.as_sequence()) < 1e-5);
    CHECK(max_abs_diff(ssm_recurrence(x, p), yf.as_sequence()) < 1e-5);
    ++checked;
  }
  CHECK(checked >= 3);
}
