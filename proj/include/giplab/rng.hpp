#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace giplab {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic generator identified by a 64-bit seed. Substreams are derived
// by hashing (seed, stream ids), so independent consumers never share state.
class SeededRng {
 public:
  using result_type = std::mt19937_64::result_type;

  explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

  std::uint64_t seed() const noexcept { return seed_; }

  SeededRng substream(std::initializer_list<std::uint64_t> ids) const {
    std::uint64_t h = splitmix64(seed_ ^ 0x5851f42d4c957f2dULL);
    for (auto id : ids) h = splitmix64(h ^ splitmix64(id + 0x632be59bd9b4e019ULL));
    return SeededRng(h);
  }

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) {
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    return uniform() < p;
  }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
  }

  std::uint64_t binomial(std::uint64_t trials, double p) {
    if (p <= 0.0 || trials == 0) return 0;
    if (p >= 1.0) return trials;
    return std::binomial_distribution<std::uint64_t>(trials, p)(engine_);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace giplab
