// Copyright 2026 the rlpt authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "rlpt/io/image_io.hpp"
#include "rlpt/tensorgrad/graph.hpp"

namespace rlpt::quality {

// mixed = 0.16 * l1 + 0.84 * (1 - msssim)
struct LossValue {
  double mixed = 0;
  double l1 = 0;
  double msssim = 0;
};

// Node handles for the in-graph loss so training can backpropagate it.
struct LossNodes {
  int mixed = -1;
  int l1 = -1;
  int msssim = -1;
};

// Multi-scale SSIM on the tape: 11x11 Gaussian window (sigma 1.5),
// C1 = 0.01^2, C2 = 0.03^2, average-pool downsampling between scales.
// Three scales below 256 px (renormalized standard weights), five at or
// above. Inputs are clamped to [0,1] in-graph. min(H,W) must be >= 32.
template <typename T>
int msssim_node(tg::Graph<T>& g, int img, int ref);

template <typename T>
LossNodes mixed_loss_node(tg::Graph<T>& g, int img, int ref);

// Convenience scalar evaluation (no gradients needed by callers).
double msssim(const io::Image& img, const io::Image& ref);
LossValue mixed_loss(const io::Image& img, const io::Image& ref);

// 10*log10(peak^2 / MSE); +infinity when MSE is zero.
double psnr(const io::Image& img, const io::Image& ref, double peak = 1.0);

// 10^(1 - loss), strictly decreasing in the loss.
double reward(double loss);

// Appendix-style per-pixel MSE comparison of two renders against a
// reference.
struct ErrorAnalysis {
  io::Image binary;   // sign(MSE_A - MSE_B): -1, 0, +1
  io::Image extreme;  // sign where |difference| > threshold, else 0
  std::vector<std::int64_t> histogram;  // 256 bins over [-0.1, 0.1], edges clip
  std::vector<double> bin_centers;
};

ErrorAnalysis error_analysis(const io::Image& img_a, const io::Image& img_b,
                             const io::Image& ref, double threshold);

}  // namespace rlpt::quality
