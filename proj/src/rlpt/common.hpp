// Copyright 2026 the rlpt authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace rlpt {

// Error taxonomy. The CLI maps these to process exit codes, so every
// throw site should pick the right class.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad shapes, axis mismatches, malformed graphs.
struct ShapeError : Error {
  using Error::Error;
};

// Invalid configuration or contradictory run options (exit code 2).
struct ConfigError : Error {
  using Error::Error;
};

// Missing/corrupt datasets, checkpoint hash mismatches (exit code 3).
struct DataError : Error {
  using Error::Error;
};

// NaN/Inf in a training objective (exit code 4).
struct DivergenceError : Error {
  using Error::Error;
};

// Sets the worker count for tensor ops, tracing, and dataset generation.
// Results are bit-identical for any thread count.
void set_threads(int n);
int thread_count();

// 64-bit FNV-1a, used for dataset content hashes and checkpoint config
// hashes. Stable across platforms.
struct Fnv1a {
  std::uint64_t h = 1469598103934665603ull;
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  }
  void update_str(const std::string& s) { update(s.data(), s.size()); }
  std::uint64_t digest() const { return h; }
};

std::string hex64(std::uint64_t v);

}  // namespace rlpt
