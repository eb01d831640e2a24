// Copyright 2026 the rlpt authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "rlpt/scenegen/scene.hpp"
#include "rlpt/tensorgrad/tensor.hpp"

namespace rlpt::reservoir {

inline constexpr int kMaxSamples = 8;
inline constexpr float kSentinel = -1.0f;
inline constexpr int kSampleChannels = 3 * kMaxSamples;  // 24
inline constexpr int kLatentChannels = 32;

// Per-pixel sample slots: 8 RGB values, channel-major (s0.r s0.g s0.b s1.r
// ...). Slots [0, valid) hold nonnegative radiance, slots [valid, 8) hold
// the -1 sentinel in all three components.
struct SampleBuffer {
  int h = 0, w = 0;
  tg::TensorF rgb;                  // (1, 24, h, w)
  std::vector<std::uint8_t> valid;  // h*w entries, 0..8

  SampleBuffer() = default;
  SampleBuffer(int h_, int w_);

  std::uint8_t valid_at(int i, int j) const { return valid[std::size_t(i) * w + j]; }
};

// Packs per-pixel sample lists into the sentinel-filled layout, preserving
// sample order. Lists longer than 8 are an error.
SampleBuffer pack_samples(const std::vector<std::vector<scenegen::Vec3>>& lists, int h,
                          int w);

// Collapses each pixel's valid samples to their mean in slot 0 (the
// averaged-input ablation). valid becomes min(n,1).
SampleBuffer average_samples(const SampleBuffer& buf);

// Backward warping through motion vectors: output(i,j) samples
// state(i + m_y, j + m_x). Out-of-frame taps contribute the disocclusion
// fill (0); results re-clamped to [-1,1]. Both tensors are (B,C,H,W) /
// (B,2,H,W) with matching batch and resolution.
tg::TensorF warp(const tg::TensorF& state, const tg::TensorF& motion,
                 bool bilinear = true);

// Per-pixel random permutation of the valid slots; sentinels stay put.
SampleBuffer permute_valid(const SampleBuffer& buf, std::uint64_t seed);

// Serialization for the on-disk dataset: planar little-endian f32 channels
// plus a u8 valid-count plane.
std::vector<float> sample_buffer_planes(const SampleBuffer& buf);
SampleBuffer sample_buffer_from_planes(const std::vector<float>& planes,
                                       const std::vector<std::uint8_t>& valid, int h, int w);

}  // namespace rlpt::reservoir
