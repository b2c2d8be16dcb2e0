#pragma once

#include <cstdint>

#include "abed/tensor.hpp"

namespace abed {

/// SplitMix64. Hand-rolled so seeded campaigns and generated test data are
/// byte-stable across compilers and standard libraries.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Unbiased draw from [0, bound) via rejection.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = next();
      if (r >= threshold) return r % bound;
    }
  }

  std::int8_t next_i8() { return static_cast<std::int8_t>(next() & 0xFF); }

  double next_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

/// Fixed splitting rule for deriving per-trial (or per-stream) seeds from a
/// root seed; identical results regardless of evaluation order.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) {
  SplitMix64 g(root ^ (0xA02E9D4BD1C96D4FULL + index * 0x9E3779B97F4A7C15ULL));
  return g.next();
}

inline void fill_random_i8(Tensor4D& t, SplitMix64& rng) {
  for (auto& v : t.view<std::int8_t>()) v = rng.next_i8();
}

/// Adversarial fill: every element is one of the two int8 extremes.
inline void fill_random_extreme(Tensor4D& t, SplitMix64& rng) {
  for (auto& v : t.view<std::int8_t>()) v = (rng.next() & 1) ? std::int8_t{127} : std::int8_t{-128};
}

inline void fill_random_f32(Tensor4D& t, SplitMix64& rng, float lo, float hi) {
  for (auto& v : t.view<float>()) v = lo + static_cast<float>(rng.next_unit()) * (hi - lo);
}

/// Random but integer-valued floats (exact in f32 arithmetic for small sums).
inline void fill_random_f32_integers(Tensor4D& t, SplitMix64& rng) {
  for (auto& v : t.view<float>()) v = static_cast<float>(rng.next_i8());
}

}  // namespace abed
