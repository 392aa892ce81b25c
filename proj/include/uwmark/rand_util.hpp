#pragma once

// Small helpers shared by every random source in the library (std engines and
// the keyed ChaCha stream). All of them consume raw 64-bit draws so results
// are bit-identical across platforms; std::uniform_*_distribution is never
// used because its output is implementation-defined.

#include <cmath>
#include <cstdint>
#include <vector>

namespace uwm {

/// Uniform double in [0,1) from the high 53 bits of a 64-bit draw.
template <typename Rng>
double unit_real(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform double strictly inside (0,1); the half-step offset keeps both
/// endpoints unreachable so log/log-log transforms stay finite.
template <typename Rng>
double open_unit_real(Rng& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

/// Unbiased integer in [0, n) by rejection.
template <typename Rng>
std::uint64_t below(Rng& rng, std::uint64_t n) {
  const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
  for (;;) {
    std::uint64_t r = rng();
    if (r >= threshold) return r % n;
  }
}

/// Standard Gumbel(0,1) variate.
template <typename Rng>
double gumbel_real(Rng& rng) {
  return -std::log(-std::log(open_unit_real(rng)));
}

/// Fisher-Yates shuffle of {0, ..., n-1}; element at position i of the result
/// is the token placed at shuffled slot i.
template <typename Rng>
std::vector<std::uint32_t> shuffled_indices(Rng& rng, std::uint32_t n) {
  std::vector<std::uint32_t> a(n);
  for (std::uint32_t i = 0; i < n; ++i) a[i] = i;
  for (std::uint32_t i = n; i > 1; --i) {
    auto j = static_cast<std::uint32_t>(below(rng, i));
    std::swap(a[i - 1], a[j]);
  }
  return a;
}

/// splitmix64 step; used to derive independent sub-seeds from a master seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Deterministic sub-seed for (stream, index) under a master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
  std::uint64_t s = master;
  (void)splitmix64(s);
  s ^= 0xD6E8FEB86659FD93ull * (stream + 1);
  (void)splitmix64(s);
  s ^= 0xCA5A826395121157ull * (index + 1);
  return splitmix64(s);
}

}  // namespace uwm
