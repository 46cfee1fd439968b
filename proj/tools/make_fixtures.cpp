// Regenerates the golden scan-vs-recurrence vectors under fixtures/ssm.
// y is produced by the double-precision test oracle, not by the library.
//
//   make_fixtures <out-dir>

#include <iostream>
#include <string>

#include "mamba/fixture.hpp"
#include "mamba/ssm.hpp"
#include "../tests/oracles.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_fixtures <out-dir>\n";
    return 2;
  }
  const std::filesystem::path dir = argv[1];
  std::filesystem::create_directories(dir);

  struct Case {
    std::size_t length, channels;
    std::uint64_t seed;
  };
  for (const Case c : {Case{1, 8, 101}, Case{7, 8, 102}, Case{64, 64, 103}, Case{1000, 8, 104}, Case{4096, 16, 105}}) {
    mamba::Rng rng(c.seed);
    const auto p = mamba::ssm::SelectiveSsmParams::random(c.channels, rng);
    const auto x = mamba::random_sequence(c.length, c.channels, rng);
    const auto y = oracle::ssm(x, p);
    mamba::FeatureSequence yf(c.length, c.channels);
    for (std::size_t i = 0; i < y.size(); ++i) yf.values()[i] = static_cast<float>(y[i]);

    const std::string stem = "L" + std::to_string(c.length) + "_D" + std::to_string(c.channels) + "_s" +
                             std::to_string(c.seed);
    mamba::write_fixture(dir / ("x_" + stem + ".json"), x, c.seed);
    mamba::write_fixture(dir / ("y_" + stem + ".json"), yf, c.seed);
    std::cout << stem << '\n';
  }
  return 0;
}
