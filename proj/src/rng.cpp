#include "vfm/rng.hpp"

#include <cmath>
#include <numbers>
#include <utility>

namespace vfm {

double CounterRng::normal_at(std::uint64_t index) const {
  // Separate key so normal and uniform draws on one stream never share bits.
  const std::uint64_t key = mix64(key_ ^ 0x5851f42d4c957f2dULL);
  auto unit = [key](std::uint64_t i) {
    return (static_cast<double>(mix64(key ^ mix64(i)) >> 11) + 0.5) * 0x1.0p-53;
  };
  const double u1 = unit(2 * index);
  const double u2 = unit(2 * index + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t CounterRng::below(std::uint64_t n) {
  // Lemire's multiply-shift with rejection.
  unsigned __int128 m = static_cast<unsigned __int128>(next_bits()) * n;
  auto low = static_cast<std::uint64_t>(m);
  if (low < n) {
    const std::uint64_t threshold = (0 - n) % n;
    while (low < threshold) {
      m = static_cast<unsigned __int128>(next_bits()) * n;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

void shuffle(std::span<std::size_t> values, CounterRng& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(values[i - 1], values[j]);
  }
}

}  // namespace vfm
