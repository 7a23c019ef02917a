#pragma once

#include <cstdint>

namespace pllm {

// splitmix64 counter RNG. std::normal_distribution and friends are
// implementation-defined, so everything that must be reproducible bit-for-bit
// goes through this generator instead.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 bits of randomness.
  double next_unit();

  // Uniform in [0, bound). bound must be > 0.
  std::uint64_t next_below(std::uint64_t bound);

  // Uniform integer in [lo, hi] inclusive.
  std::int64_t next_int(std::int64_t lo, std::int64_t hi);

  bool next_bool() { return (next_u64() >> 63) != 0; }

  // Box-Muller; caches the second variate.
  double next_gaussian(double mean, double sigma);

  // Derives an independent stream key from parts (order-sensitive).
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b);
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return mix(mix(a, b), c);
  }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace pllm
