// Copyright 2026 the rlpt authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "rlpt/io/image_io.hpp"
#include "rlpt/scenegen/scene.hpp"

namespace rlpt::scenegen {

// Per-frame deterministic feature buffers from primary visibility.
struct AuxBuffers {
  io::Image normal;  // 3ch unit vectors; zero for environment pixels
  io::Image albedo;  // 3ch in [0,1]
  io::Image depth;   // 1ch in [0,1]; 1.0 for environment pixels
  io::Image motion;  // 2ch (dx, dy): current pixel + motion = previous-frame position
};

// One unbiased radiance estimate for a pixel. Unidirectional path tracing
// with cosine-weighted diffuse bounces, mirror specular bounces, Russian
// roulette after depth 3, max depth 8. The RNG is counter-based and keyed
// on (seed, frame, i, j, sample_index): any sample recomputes in isolation.
Vec3 trace_sample(const Scene& scene, int frame, int i, int j, int sample_index,
                  std::uint64_t seed, int h, int w);

AuxBuffers render_aux(const Scene& scene, int frame, int h, int w);

// Per-pixel mean of spp trace_sample calls (sample_index 0..spp-1).
io::Image render_reference(const Scene& scene, int frame, int spp, std::uint64_t seed,
                           int h, int w);

}  // namespace rlpt::scenegen
