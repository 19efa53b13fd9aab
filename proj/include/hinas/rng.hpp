#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace hinas {

/// Seeded random stream. Sub-streams are derived with fork() so that the
/// consumption pattern of one component cannot shift another's sequence.
class Rng {
public:
  explicit Rng(uint64_t seed) : engine_(seed), seed_(seed) {}

  uint64_t seed() const { return seed_; }
  std::mt19937_64& engine() { return engine_; }

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  /// Inclusive on both ends.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    return std::uniform_int_distribution<int64_t>(lo, hi)(engine_);
  }
  bool coin() { return uniform_int(0, 1) == 1; }

  Rng fork(std::string_view tag) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (char ch : tag) {
      h ^= uint64_t(uint8_t(ch));
      h *= 0x100000001b3ull;
    }
    return Rng(splitmix(seed_ ^ h));
  }
  Rng fork(uint64_t salt) { return Rng(splitmix(seed_ ^ (salt * 0x9e3779b97f4a7c15ull))); }

private:
  static uint64_t splitmix(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  std::mt19937_64 engine_;
  uint64_t seed_;
};

}  // namespace hinas
