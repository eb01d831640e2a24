// Copyright 2026 the rlpt authors
// SPDX-License-Identifier: Apache-2.0

#include "rlpt/budget/budget.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>

namespace rlpt::budget {

SampleCountMap allocate(const Heatmap& x, std::int64_t budget_total, int cap) {
  if (budget_total < 0) throw ConfigError("allocate: negative sample budget");
  if (cap < 1) throw ConfigError("allocate: cap must be >= 1");
  const std::int64_t pixels = std::int64_t(x.h) * x.w;
  if (pixels == 0) throw ShapeError("allocate: empty heatmap");

  SampleCountMap out;
  out.h = x.h;
  out.w = x.w;
  out.cap = cap;
  out.budget_total = budget_total;
  out.counts.resize(std::size_t(pixels));

  double mn = x.values[0];
  for (float v : x.values) mn = std::min(mn, double(v));
  double sum = 0;
  for (float v : x.values) sum += double(v) - mn;

  if (sum == 0.0) {
    // constant heatmap: the ratio form is 0/0, fall back to uniform
    const std::int64_t uniform =
        std::llround(double(budget_total) / double(pixels));
    const std::uint16_t y = std::uint16_t(std::min<std::int64_t>(uniform, cap));
    std::fill(out.counts.begin(), out.counts.end(), y);
    out.clamp_shortfall = (uniform - y) * pixels;
    return out;
  }

  std::int64_t shortfall = 0;
  for (std::int64_t p = 0; p < pixels; ++p) {
    const double raw = double(budget_total) * ((double(x.values[std::size_t(p)]) - mn) / sum);
    const std::int64_t rounded = std::llround(raw);  // half away from zero
    const std::int64_t clamped = std::clamp<std::int64_t>(rounded, 0, cap);
    shortfall += rounded - clamped;
    out.counts[std::size_t(p)] = std::uint16_t(clamped);
  }
  out.clamp_shortfall = shortfall;
  return out;
}

scenegen::Vec3 grad_approx(const scenegen::Vec3& i_ref, const scenegen::Vec3& i_s, int s) {
  if (s == 0)
    throw ConfigError("grad_approx: gradient undefined at zero spp");
  if (s < 0) throw ConfigError("grad_approx: sample count must be >= 1");
  return (i_ref - i_s) / double(s);
}

std::vector<std::vector<scenegen::Vec3>> sample_with_counts(const scenegen::Scene& scene,
                                                            int frame,
                                                            const SampleCountMap& counts,
                                                            std::uint64_t seed, int h,
                                                            int w) {
  if (counts.h != h || counts.w != w)
    throw ShapeError("sample_with_counts: count map resolution mismatch");
  std::vector<std::vector<scenegen::Vec3>> result(std::size_t(h) * w);
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const int n = counts.at(i, j);
      auto& list = result[std::size_t(i) * w + j];
      list.reserve(std::size_t(n));
      for (int k = 0; k < n; ++k)
        list.push_back(trace_sample(scene, frame, i, j, k, seed, h, w));
    }
  }
  return result;
}

}  // namespace rlpt::budget
