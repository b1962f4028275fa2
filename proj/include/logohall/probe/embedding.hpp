#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "logohall/common/error.hpp"

namespace logohall {

static_assert(std::endian::native == std::endian::little, "LEMB I/O assumes a little-endian host");
static_assert(sizeof(float) == 4);

// N x d projector output for one image, row-major float32.
struct EmbeddingMatrix {
  std::string logo_id;
  std::uint32_t rows = 0;  // N, visual tokens
  std::uint32_t cols = 0;  // d, embedding width
  std::vector<float> values;
  std::string source_model;
  std::string layer_tag;

  float at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  float& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;
};

inline void validate_embedding(const EmbeddingMatrix& z) {
  if (z.rows < 1 || z.cols < 1) throw InvariantError("embedding '" + z.logo_id + "': N and d must be >= 1");
  if (z.values.size() != static_cast<std::size_t>(z.rows) * z.cols)
    throw InvariantError("embedding '" + z.logo_id + "': value count does not match N*d");
  for (float v : z.values)
    if (!std::isfinite(v)) throw InvariantError("embedding '" + z.logo_id + "': non-finite entry");
}

inline constexpr std::uint16_t kLembVersion = 1;
inline constexpr std::uint8_t kLembFloat32 = 1;

namespace detail {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(v) >> (8 * i)));
}

template <typename T>
T get_le(std::span<const std::uint8_t> in, std::size_t& pos, const std::string& what) {
  if (pos + sizeof(T) > in.size()) throw ConfigError(what + ": truncated LEMB file");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(in[pos + i]) << (8 * i);
  pos += sizeof(T);
  return static_cast<T>(v);
}

}  // namespace detail

// magic "LEMB", u16 version, u8 dtype, u32 N, u32 d, N*d float32 row-major,
// u32 metadata length, UTF-8 JSON metadata. Everything little-endian.
inline std::vector<std::uint8_t> encode_lemb(const EmbeddingMatrix& z) {
  validate_embedding(z);
  std::vector<std::uint8_t> out{'L', 'E', 'M', 'B'};
  detail::put_le<std::uint16_t>(out, kLembVersion);
  detail::put_le<std::uint8_t>(out, kLembFloat32);
  detail::put_le<std::uint32_t>(out, z.rows);
  detail::put_le<std::uint32_t>(out, z.cols);
  const std::size_t at = out.size();
  out.resize(at + z.values.size() * 4);
  std::memcpy(out.data() + at, z.values.data(), z.values.size() * 4);
  const std::string meta =
      nlohmann::json{{"layer_tag", z.layer_tag}, {"logo_id", z.logo_id}, {"source_model", z.source_model}}.dump();
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
  out.insert(out.end(), meta.begin(), meta.end());
  return out;
}

inline EmbeddingMatrix decode_lemb(std::span<const std::uint8_t> in, const std::string& what = "<memory>") {
  if (in.size() < 4 || std::memcmp(in.data(), "LEMB", 4) != 0) throw ConfigError(what + ": not a LEMB file");
  std::size_t pos = 4;
  const auto version = detail::get_le<std::uint16_t>(in, pos, what);
  if (version != kLembVersion) throw ConfigError(what + ": unsupported LEMB version " + std::to_string(version));
  const auto dtype = detail::get_le<std::uint8_t>(in, pos, what);
  if (dtype != kLembFloat32) throw ConfigError(what + ": unsupported LEMB dtype " + std::to_string(dtype));
  EmbeddingMatrix z;
  z.rows = detail::get_le<std::uint32_t>(in, pos, what);
  z.cols = detail::get_le<std::uint32_t>(in, pos, what);
  const std::size_t count = static_cast<std::size_t>(z.rows) * z.cols;
  if (count == 0) throw ConfigError(what + ": N and d must be >= 1");
  if (pos + count * 4 > in.size()) throw ConfigError(what + ": truncated LEMB payload");
  z.values.resize(count);
  std::memcpy(z.values.data(), in.data() + pos, count * 4);
  pos += count * 4;
  const auto meta_len = detail::get_le<std::uint32_t>(in, pos, what);
  if (pos + meta_len != in.size()) throw ConfigError(what + ": LEMB metadata length mismatch");
  try {
    const auto meta = nlohmann::json::parse(in.begin() + static_cast<std::ptrdiff_t>(pos), in.end());
    z.logo_id = meta.value("logo_id", "");
    z.source_model = meta.value("source_model", "");
    z.layer_tag = meta.value("layer_tag", "");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(what + ": bad LEMB metadata: " + e.what());
  }
  try {
    validate_embedding(z);
  } catch (const InvariantError& e) {
    throw InvariantError(what + ": " + e.what());
  }
  return z;
}

inline void save_lemb(const std::filesystem::path& path, const EmbeddingMatrix& z) {
  const auto bytes = encode_lemb(z);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  std::filesystem::rename(tmp, path);
}

inline EmbeddingMatrix load_lemb(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read embedding file: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_lemb(bytes, path.string());
}

// Mean over tokens; accumulates in double.
inline std::vector<double> pool(const EmbeddingMatrix& z) {
  validate_embedding(z);
  std::vector<double> out(z.cols, 0.0);
  for (std::size_t i = 0; i < z.rows; ++i)
    for (std::size_t j = 0; j < z.cols; ++j) out[j] += z.at(i, j);
  for (auto& v : out) v /= z.rows;
  return out;
}

}  // namespace logohall
