#pragma once

// Test-vector fixtures: a JSON header next to a raw little-endian f32 payload.
//
//   name.json  {"shape": [L, D], "dtype": "f32", "byte_order": "little",
//               "seed": 7, "payload": "name.f32"}
//   name.f32   L*D float32 values, row-major, little-endian

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mamba/tensor.hpp"

namespace mamba {

struct Fixture {
  std::vector<std::size_t> shape;
  std::uint64_t seed = 0;
  std::vector<float> values;

  std::size_t element_count() const;
  /// Rank-2 fixtures only.
  FeatureSequence as_sequence() const;
};

/// Writes `header_path` and its payload sibling (same stem, ".f32").
void write_fixture(const std::filesystem::path& header_path, std::span<const std::size_t> shape,
                   std::uint64_t seed, std::span<const float> values);
void write_fixture(const std::filesystem::path& header_path, const FeatureSequence& x, std::uint64_t seed);

Fixture read_fixture(const std::filesystem::path& header_path);

}  // namespace mamba
