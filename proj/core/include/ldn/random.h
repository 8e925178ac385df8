#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ldn {

// Seeded generator with a documented draw sequence so that runs can be
// replayed outside this library:
//   uniform()  = (mt19937_64() >> 11) * 2^-53            in [0, 1)
//   normal()   = sqrt(-2 ln(1 - u1)) * cos(2 pi u2)      two uniforms
//   index(n)   = floor(uniform() * n)
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  int index(int n) { return static_cast<int>(uniform() * n); }

  // Fisher-Yates from the back: for i = n-1..1, swap(i, index(i + 1)).
  template <typename Vec>
  void shuffle(Vec& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      std::swap(v[i], v[index(i + 1)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// First eight bytes (little endian) of SHA-256("<seed>:<tag>").
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

}  // namespace ldn
