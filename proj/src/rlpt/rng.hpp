// Copyright 2026 the rlpt authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace rlpt {

// Counter-based RNG: a splitmix64 stream keyed by a hash of the caller's
// key tuple. Stateless across call sites, so any sample of any pixel is
// recomputable in isolation and parallel evaluation order cannot change
// results.
struct KeyedRng {
  std::uint64_t state;
  std::uint64_t inc = 0;

  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  }

  static std::uint64_t combine(std::uint64_t h, std::uint64_t v) {
    return mix(h ^ (v + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2)));
  }

  explicit KeyedRng(std::initializer_list<std::uint64_t> keys) {
    std::uint64_t h = 0x8c14f73ab3c44bd5ull;
    for (std::uint64_t k : keys) h = combine(h, k);
    state = h;
  }

  std::uint64_t next_u64() {
    state += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0,1).
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }
  float next_float() { return float(next_u64() >> 40) * 0x1.0p-24f; }

  // Uniform integer in [0, n).
  std::uint32_t next_below(std::uint32_t n) {
    return std::uint32_t((next_u64() >> 32) * std::uint64_t(n) >> 32);
  }

  // Standard normal via Box-Muller.
  double next_normal() {
    double u1 = next_double(), u2 = next_double();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }
};

// Salts separating independent stream domains derived from one user seed.
namespace rng_domain {
inline constexpr std::uint64_t kTraceBank = 0x7261636542616e6bull;
inline constexpr std::uint64_t kReference = 0x5265666572656e63ull;
inline constexpr std::uint64_t kPolicy = 0x506f6c6963794163ull;
inline constexpr std::uint64_t kPermute = 0x5065726d75746520ull;
inline constexpr std::uint64_t kInit = 0x496e697457656967ull;
inline constexpr std::uint64_t kAugment = 0x4175676d656e7420ull;
}  // namespace rng_domain

}  // namespace rlpt
