// Copyright 2026 the rlpt authors
// SPDX-License-Identifier: Apache-2.0

#include "rlpt/reservoir/reservoir.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>

#include "rlpt/rng.hpp"

namespace rlpt::reservoir {

SampleBuffer::SampleBuffer(int h_, int w_)
    : h(h_),
      w(w_),
      rgb(tg::TensorF::full({1, kSampleChannels, h_, w_}, kSentinel)),
      valid(std::size_t(h_) * w_, 0) {}

SampleBuffer pack_samples(const std::vector<std::vector<scenegen::Vec3>>& lists, int h,
                          int w) {
  if (lists.size() != std::size_t(h) * w)
    throw ShapeError("pack_samples: list count does not match resolution");
  SampleBuffer buf(h, w);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const auto& list = lists[std::size_t(i) * w + j];
      if (list.size() > kMaxSamples)
        throw ShapeError("pack_samples: more than 8 samples at one pixel");
      buf.valid[std::size_t(i) * w + j] = std::uint8_t(list.size());
      for (std::size_t k = 0; k < list.size(); ++k) {
        buf.rgb.at(0, int(3 * k) + 0, i, j) = float(list[k].x);
        buf.rgb.at(0, int(3 * k) + 1, i, j) = float(list[k].y);
        buf.rgb.at(0, int(3 * k) + 2, i, j) = float(list[k].z);
      }
    }
  return buf;
}

SampleBuffer average_samples(const SampleBuffer& buf) {
  SampleBuffer out(buf.h, buf.w);
  for (int i = 0; i < buf.h; ++i)
    for (int j = 0; j < buf.w; ++j) {
      const int n = buf.valid_at(i, j);
      if (n == 0) continue;
      double r = 0, g = 0, b = 0;
      for (int k = 0; k < n; ++k) {
        r += buf.rgb.at(0, 3 * k + 0, i, j);
        g += buf.rgb.at(0, 3 * k + 1, i, j);
        b += buf.rgb.at(0, 3 * k + 2, i, j);
      }
      out.valid[std::size_t(i) * buf.w + j] = 1;
      out.rgb.at(0, 0, i, j) = float(r / n);
      out.rgb.at(0, 1, i, j) = float(g / n);
      out.rgb.at(0, 2, i, j) = float(b / n);
    }
  return out;
}

tg::TensorF warp(const tg::TensorF& state, const tg::TensorF& motion, bool bilinear) {
  if (motion.dims.c != 2 || motion.dims.n != state.dims.n ||
      motion.dims.h != state.dims.h || motion.dims.w != state.dims.w)
    throw ShapeError("warp: motion field must be (N,2,H,W) matching the state");
  const int bN = state.dims.n, C = state.dims.c, H = state.dims.h, W = state.dims.w;
  tg::TensorF out(state.dims);
#pragma omp parallel for schedule(static)
  for (int b = 0; b < bN; ++b) {
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        const float mx = motion.at(b, 0, i, j);
        const float my = motion.at(b, 1, i, j);
        const double sy = double(i) + double(my);
        const double sx = double(j) + double(mx);
        if (!bilinear) {
          const long ry = std::lround(sy), rx = std::lround(sx);
          if (ry < 0 || ry >= H || rx < 0 || rx >= W) continue;  // fill stays 0
          for (int c = 0; c < C; ++c)
            out.at(b, c, i, j) = std::clamp(state.at(b, c, int(ry), int(rx)), -1.f, 1.f);
          continue;
        }
        const int y0 = int(std::floor(sy)), x0 = int(std::floor(sx));
        const float fy = float(sy - y0), fx = float(sx - x0);
        const float wgt[4] = {(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx};
        const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
        const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
        for (int c = 0; c < C; ++c) {
          float acc = 0;
          for (int t = 0; t < 4; ++t) {
            if (ys[t] < 0 || ys[t] >= H || xs[t] < 0 || xs[t] >= W) continue;
            if (wgt[t] == 0.f) continue;
            acc += wgt[t] * state.at(b, c, ys[t], xs[t]);
          }
          out.at(b, c, i, j) = std::clamp(acc, -1.f, 1.f);
        }
      }
  }
  return out;
}

SampleBuffer permute_valid(const SampleBuffer& buf, std::uint64_t seed) {
  SampleBuffer out = buf;
  for (int i = 0; i < buf.h; ++i)
    for (int j = 0; j < buf.w; ++j) {
      const int n = buf.valid_at(i, j);
      if (n < 2) continue;
      KeyedRng rng{seed, rng_domain::kPermute, std::uint64_t(i), std::uint64_t(j)};
      int perm[kMaxSamples];
      for (int k = 0; k < n; ++k) perm[k] = k;
      for (int k = n - 1; k > 0; --k)
        std::swap(perm[k], perm[int(rng.next_below(std::uint32_t(k + 1)))]);
      for (int k = 0; k < n; ++k)
        for (int c = 0; c < 3; ++c)
          out.rgb.at(0, 3 * k + c, i, j) = buf.rgb.at(0, 3 * perm[k] + c, i, j);
    }
  return out;
}

std::vector<float> sample_buffer_planes(const SampleBuffer& buf) { return buf.rgb.data; }

SampleBuffer sample_buffer_from_planes(const std::vector<float>& planes,
                                       const std::vector<std::uint8_t>& valid, int h,
                                       int w) {
  if (planes.size() != std::size_t(kSampleChannels) * h * w ||
      valid.size() != std::size_t(h) * w)
    throw ShapeError("sample_buffer_from_planes: payload size mismatch");
  SampleBuffer buf(h, w);
  buf.rgb.data = planes;
  buf.valid = valid;
  return buf;
}

}  // namespace rlpt::reservoir
