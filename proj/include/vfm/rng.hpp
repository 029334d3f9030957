#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace vfm {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives an independent seed for a named sub-stream.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix64(seed ^ mix64(stream * 0x632be59bd9b4e019ULL + 0x1d8e4e27c47d124fULL));
}

/// Counter-based generator: draw i of stream (seed, stream) is a pure function
/// of (seed, stream, i). Distribution transforms are implemented here rather
/// than with <random> so that output is identical across standard libraries.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(derive_seed(seed, stream)) {}

  std::uint64_t bits_at(std::uint64_t index) const { return mix64(key_ ^ mix64(index)); }

  // Uniform on (0, 1); never returns 0 or 1.
  double uniform_at(std::uint64_t index) const {
    return (static_cast<double>(bits_at(index) >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal from the pair (2i, 2i+1) via Box-Muller.
  double normal_at(std::uint64_t index) const;

  std::uint64_t next_bits() { return bits_at(counter_++); }
  double uniform() { return uniform_at(counter_++); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() { return normal_at(counter_++); }
  double normal(double mean, double sd) { return mean + sd * normal(); }
  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

void shuffle(std::span<std::size_t> values, CounterRng& rng);

}  // namespace vfm
