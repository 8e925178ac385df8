#include "ldn/random.h"

#include <openssl/sha.h>

#include <cmath>
#include <numbers>
#include <string>

#include "ldn/digest.h"

namespace ldn {

double Rng::normal() {
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
  const std::string text = std::to_string(seed) + ":" + std::string(tag);
  unsigned char md[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(text.data()), text.size(), md);
  std::uint64_t out = 0;
  for (int i = 7; i >= 0; --i) out = (out << 8) | md[i];
  return out;
}

std::string sha256_hex(std::span<const unsigned char> bytes) {
  unsigned char md[SHA256_DIGEST_LENGTH];
  SHA256(bytes.data(), bytes.size(), md);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * SHA256_DIGEST_LENGTH);
  for (unsigned char b : md) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 15]);
  }
  return out;
}

std::string sha256_hex(std::string_view text) {
  return sha256_hex(std::span(reinterpret_cast<const unsigned char*>(text.data()),
                              text.size()));
}

}  // namespace ldn
