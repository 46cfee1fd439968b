#include "mamba/fixture.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>

#include <json.hpp>

#include "mamba/errors.hpp"

namespace mamba {

std::size_t Fixture::element_count() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

FeatureSequence Fixture::as_sequence() const {
  if (shape.size() != 2) throw ShapeError("fixture is not rank 2");
  FeatureSequence x(shape[0], shape[1]);
  std::copy(values.begin(), values.end(), x.data());
  return x;
}

void write_fixture(const std::filesystem::path& header_path, std::span<const std::size_t> shape,
                   std::uint64_t seed, std::span<const float> values) {
  const std::size_t expected =
      std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  if (expected != values.size()) throw ShapeError("write_fixture: shape does not match value count");

  auto payload = header_path;
  payload.replace_extension(".f32");

  nlohmann::json header;
  header["shape"] = std::vector<std::size_t>(shape.begin(), shape.end());
  header["dtype"] = "f32";
  header["byte_order"] = "little";
  header["seed"] = seed;
  header["payload"] = payload.filename().string();

  std::ofstream hs(header_path);
  if (!hs) throw IoError("cannot write " + header_path.string());
  hs << header.dump(2) << '\n';

  std::ofstream ps(payload, std::ios::binary);
  if (!ps) throw IoError("cannot write " + payload.string());
  for (float v : values) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    const unsigned char bytes[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                                    static_cast<unsigned char>(bits >> 16),
                                    static_cast<unsigned char>(bits >> 24)};
    ps.write(reinterpret_cast<const char*>(bytes), 4);
  }
  if (!ps) throw IoError("short write to " + payload.string());
}

void write_fixture(const std::filesystem::path& header_path, const FeatureSequence& x, std::uint64_t seed) {
  const std::size_t shape[] = {x.length(), x.channels()};
  write_fixture(header_path, shape, seed, x.values());
}

Fixture read_fixture(const std::filesystem::path& header_path) {
  std::ifstream hs(header_path);
  if (!hs) throw IoError("cannot open fixture " + header_path.string());
  const auto header = nlohmann::json::parse(hs);
  if (header.at("dtype") != "f32") throw IoError("fixture dtype must be f32");
  if (header.at("byte_order") != "little") throw IoError("fixture byte order must be little");

  Fixture f;
  f.shape = header.at("shape").get<std::vector<std::size_t>>();
  f.seed = header.at("seed").get<std::uint64_t>();
  const auto payload = header_path.parent_path() / header.at("payload").get<std::string>();

  std::ifstream ps(payload, std::ios::binary);
  if (!ps) throw IoError("cannot open fixture payload " + payload.string());
  f.values.resize(f.element_count());
  for (float& v : f.values) {
    unsigned char bytes[4];
    if (!ps.read(reinterpret_cast<char*>(bytes), 4)) throw IoError("truncated payload " + payload.string());
    const std::uint32_t bits = std::uint32_t{bytes[0]} | std::uint32_t{bytes[1]} << 8 |
                               std::uint32_t{bytes[2]} << 16 | std::uint32_t{bytes[3]} << 24;
    v = std::bit_cast<float>(bits);
  }
  return f;
}

}  // namespace mamba
