#pragma once

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "logohall/common/error.hpp"

namespace logohall {

// Incremental SHA-256. Field boundaries are length-prefixed so that
// ("ab","c") and ("a","bc") digest differently.
class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (ctx_ == nullptr || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1)
      throw InvariantError("sha256: digest init failed");
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update_raw(const void* data, std::size_t size) {
    if (size > 0 && EVP_DigestUpdate(ctx_, data, size) != 1)
      throw InvariantError("sha256: digest update failed");
    return *this;
  }

  Sha256& field(std::span<const std::uint8_t> bytes) {
    add_length(bytes.size());
    return update_raw(bytes.data(), bytes.size());
  }

  Sha256& field(std::string_view text) {
    add_length(text.size());
    return update_raw(text.data(), text.size());
  }

  Sha256& field(std::uint64_t value) {
    std::array<std::uint8_t, 8> le{};
    for (int i = 0; i < 8; ++i) le[i] = static_cast<std::uint8_t>(value >> (8 * i));
    return update_raw(le.data(), le.size());
  }

  std::array<std::uint8_t, 32> finish() {
    std::array<std::uint8_t, 32> out{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_, out.data(), &len) != 1 || len != 32)
      throw InvariantError("sha256: digest final failed");
    return out;
  }

  std::string hex() {
    static constexpr char kHex[] = "0123456789abcdef";
    const auto bytes = finish();
    std::string s;
    s.reserve(64);
    for (auto b : bytes) {
      s.push_back(kHex[b >> 4]);
      s.push_back(kHex[b & 0xf]);
    }
    return s;
  }

 private:
  void add_length(std::size_t n) { field(static_cast<std::uint64_t>(n)); }

  EVP_MD_CTX* ctx_;
};

inline std::string sha256_hex(std::string_view text) { return Sha256{}.field(text).hex(); }

inline std::uint64_t first_u64_le(const std::array<std::uint8_t, 32>& d) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | d[i];
  return v;
}

inline std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

}  // namespace logohall
