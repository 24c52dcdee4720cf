#pragma once

// Platform-stable randomness. std::*_distribution output is implementation
// defined, so uniforms and normals are derived from raw 64-bit words here.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>
#include <span>

namespace gdec {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t v) {
  return splitmix64(seed ^ (splitmix64(v) + 0x632be59bd9b4e019ULL + (seed << 6) + (seed >> 2)));
}

inline std::uint64_t hash_words(std::initializer_list<std::uint64_t> words) {
  std::uint64_t h = 0x84222325cbf29ce4ULL;
  for (auto w : words) h = hash_combine(h, w);
  return h;
}

// Uniform in [0, 1) with 53 random bits.
inline double unit_from_bits(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Standard normal derived deterministically from a hash key (Box-Muller).
inline double normal_from_key(std::uint64_t key) {
  const double u1 = 1.0 - unit_from_bits(splitmix64(key));  // (0, 1]
  const double u2 = unit_from_bits(splitmix64(key ^ 0xd1b54a32d192ed03ULL));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Seeded stream generator; mt19937_64's output sequence is fixed by the standard.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}
  double uniform() { return unit_from_bits(engine_()); }
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace gdec
