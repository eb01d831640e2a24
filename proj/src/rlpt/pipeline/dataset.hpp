// Copyright 2026 the rlpt authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rlpt/reservoir/reservoir.hpp"
#include "rlpt/scenegen/tracer.hpp"

namespace rlpt::pipeline {

inline constexpr int kClipLength = 20;
inline constexpr int kBankSpp = 8;

// Seed domains for a dataset's two independent sample streams: the
// pre-traced bank that training consumes, and the high-spp reference.
std::uint64_t bank_seed(std::uint64_t dataset_seed);
std::uint64_t reference_seed(std::uint64_t dataset_seed);

struct FrameRecord {
  io::Image reference;        // 3ch, spp_reference samples per pixel
  scenegen::AuxBuffers aux;   // normals/albedo/depth + motion
  std::vector<float> bank;    // (24,h,w) planar: 8 pre-traced 1-spp draws
};

struct DatasetMeta {
  int format_version = 1;
  std::string scene;
  int h = 0, w = 0;
  int frames = 0;
  int clip_len = kClipLength;
  std::uint64_t seed = 0;
  int spp_reference = 0;
  int bank_spp = kBankSpp;
  std::string content_hash;
};

// One scene's frame sequence, split into independent 20-frame clips.
struct ClipDataset {
  DatasetMeta meta;
  scenegen::Scene scene;
  std::vector<FrameRecord> frames;

  int clip_count() const { return meta.frames / meta.clip_len; }
  const FrameRecord& frame(int clip, int t) const {
    return frames[std::size_t(clip) * meta.clip_len + t];
  }
};

// Traces the dataset in memory. Reference images use the reference seed
// domain; the bank uses the bank domain, entry k = trace_sample(..., k).
ClipDataset generate_dataset(const scenegen::Scene& scene, int clips, int h, int w,
                             int spp_reference, std::uint64_t seed);

// Writes manifest.json, scene.json and per-frame raw planes into `dir`
// (temp-dir staging + atomic rename). Returns the content hash.
std::string save_dataset(const ClipDataset& ds, const std::string& dir);

ClipDataset load_dataset(const std::string& dir);

// Hash over all frame payload bytes in frame order.
std::string dataset_content_hash(const ClipDataset& ds);

}  // namespace rlpt::pipeline
