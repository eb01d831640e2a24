// Copyright 2026 the rlpt authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "rlpt/common.hpp"
#include "rlpt/scenegen/tracer.hpp"

namespace rlpt::budget {

// Network heatmap, one value per pixel in [-1,1] (bounded upstream by tanh).
struct Heatmap {
  int h = 0, w = 0;
  std::vector<float> values;

  Heatmap() = default;
  Heatmap(int h_, int w_) : h(h_), w(w_), values(std::size_t(h_) * w_, 0.f) {}
  float& at(int i, int j) { return values[std::size_t(i) * w + j]; }
  float at(int i, int j) const { return values[std::size_t(i) * w + j]; }
};

// Integer per-pixel sample counts under a global budget.
struct SampleCountMap {
  int h = 0, w = 0;
  int cap = 8;
  std::int64_t budget_total = 0;
  std::vector<std::uint16_t> counts;
  std::int64_t clamp_shortfall = 0;  // samples lost to the per-pixel cap

  std::uint16_t& at(int i, int j) { return counts[std::size_t(i) * w + j]; }
  std::uint16_t at(int i, int j) const { return counts[std::size_t(i) * w + j]; }
  std::int64_t total() const {
    std::int64_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }
};

// counts = round(budget * (x - min x) / sum(x - min x)), clamped to [0,cap].
// A constant heatmap falls back to uniform round(budget / pixels). Shortfall
// from clamping is reported, not redistributed.
SampleCountMap allocate(const Heatmap& x, std::int64_t budget_total, int cap);

// Numerical gradient of the s-sample pixel estimate with respect to the
// sample count: (ref - current) / s. Undefined at s = 0.
scenegen::Vec3 grad_approx(const scenegen::Vec3& i_ref, const scenegen::Vec3& i_s, int s);

// Per-pixel sample lists drawn by count; entry k of a pixel equals
// trace_sample with sample_index k, so results are independent of which
// other samples were evaluated.
std::vector<std::vector<scenegen::Vec3>> sample_with_counts(const scenegen::Scene& scene,
                                                            int frame,
                                                            const SampleCountMap& counts,
                                                            std::uint64_t seed, int h,
                                                            int w);

}  // namespace rlpt::budget
