// Copyright 2026 the rlpt authors
// SPDX-License-Identifier: Apache-2.0

#include "rlpt/quality/quality.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rlpt::quality {

namespace {

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;
constexpr double kMsssimWeights5[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

// Depthwise Gaussian window as a block-diagonal dense kernel. The window
// shrinks (stays odd) when a coarse scale is smaller than 11 px.
template <typename T>
tg::Tensor<T> gaussian_kernel(int channels, int win, double sigma) {
  std::vector<double> g(static_cast<std::size_t>(win), 0.0);
  const double mid = (win - 1) * 0.5;
  double sum = 0;
  for (int i = 0; i < win; ++i) {
    g[std::size_t(i)] = std::exp(-(i - mid) * (i - mid) / (2 * sigma * sigma));
    sum += g[std::size_t(i)];
  }
  for (double& v : g) v /= sum;
  tg::Tensor<T> k({channels, channels, win, win});
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < win; ++y)
      for (int x = 0; x < win; ++x)
        k.at(c, c, y, x) = T(g[std::size_t(y)] * g[std::size_t(x)]);
  return k;
}

template <typename T>
tg::Tensor<T> avgpool_kernel(int channels) {
  tg::Tensor<T> k({channels, channels, 2, 2});
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x) k.at(c, c, y, x) = T(0.25);
  return k;
}

}  // namespace

template <typename T>
int msssim_node(tg::Graph<T>& g, int img, int ref) {
  tg::Dims4 d = g.value(img).dims;
  if (!(d == g.value(ref).dims))
    throw ShapeError("msssim: image shapes differ: " + d.str() + " vs " +
                     g.value(ref).dims.str());
  const int min_dim = std::min(d.h, d.w);
  const int scales = min_dim >= 256 ? 5 : 3;
  if (min_dim < 32)
    throw ShapeError("msssim: minimum image dimension for 3 scales is 32, got " +
                     std::to_string(min_dim));
  double wsum = 0;
  for (int s = 0; s < scales; ++s) wsum += kMsssimWeights5[s];

  int x = g.clamp(img, T(0), T(1));
  int y = g.clamp(ref, T(0), T(1));
  int log_acc = -1;
  for (int s = 0; s < scales; ++s) {
    const tg::Dims4 ds = g.value(x).dims;
    int win = std::min({11, ds.h, ds.w});
    if (win % 2 == 0) --win;  // window must stay odd and fit
    const int wk = g.input(gaussian_kernel<T>(ds.c, win, 1.5));
    const int mu_x = g.conv2d(x, wk, -1, 1, 0);
    const int mu_y = g.conv2d(y, wk, -1, 1, 0);
    const int sxx = g.sub(g.conv2d(g.mul(x, x), wk, -1, 1, 0), g.mul(mu_x, mu_x));
    const int syy = g.sub(g.conv2d(g.mul(y, y), wk, -1, 1, 0), g.mul(mu_y, mu_y));
    const int sxy = g.sub(g.conv2d(g.mul(x, y), wk, -1, 1, 0), g.mul(mu_x, mu_y));
    const int cs_map = g.div(g.affine(sxy, T(2), T(kC2)),
                             g.affine(g.add(sxx, syy), T(1), T(kC2)));
    const int cs = g.clamp(g.mean_all(cs_map), T(1e-6), T(1));
    const double weight = kMsssimWeights5[s] / wsum;
    int term = g.affine(g.log(cs), T(weight), T(0));
    if (s == scales - 1) {
      const int l_map = g.div(g.affine(g.mul(mu_x, mu_y), T(2), T(kC1)),
                              g.affine(g.add(g.mul(mu_x, mu_x), g.mul(mu_y, mu_y)),
                                       T(1), T(kC1)));
      const int lum = g.clamp(g.mean_all(l_map), T(1e-6), T(1));
      term = g.add(term, g.affine(g.log(lum), T(weight), T(0)));
    }
    log_acc = log_acc < 0 ? term : g.add(log_acc, term);
    if (s + 1 < scales) {
      const int pk = g.input(avgpool_kernel<T>(ds.c));
      x = g.conv2d(x, pk, -1, 2, 0);
      y = g.conv2d(y, pk, -1, 2, 0);
    }
  }
  return g.exp(log_acc);
}

template <typename T>
LossNodes mixed_loss_node(tg::Graph<T>& g, int img, int ref) {
  LossNodes n;
  const int xc = g.clamp(img, T(0), T(1));
  const int yc = g.clamp(ref, T(0), T(1));
  n.l1 = g.mean_all(g.abs(g.sub(xc, yc)));
  n.msssim = msssim_node(g, img, ref);
  // 0.16 * l1 + 0.84 * (1 - msssim)
  n.mixed = g.add(g.affine(n.l1, T(0.16), T(0)), g.affine(n.msssim, T(-0.84), T(0.84)));
  return n;
}

template int msssim_node<float>(tg::Graph<float>&, int, int);
template int msssim_node<double>(tg::Graph<double>&, int, int);
template LossNodes mixed_loss_node<float>(tg::Graph<float>&, int, int);
template LossNodes mixed_loss_node<double>(tg::Graph<double>&, int, int);

namespace {

tg::TensorD image_tensor(const io::Image& img) {
  tg::TensorD t({1, img.c, img.h, img.w});
  for (std::size_t i = 0; i < img.data.size(); ++i) t.data[i] = double(img.data[i]);
  return t;
}

}  // namespace

double msssim(const io::Image& img, const io::Image& ref) {
  tg::GraphD g;
  const int a = g.input(image_tensor(img));
  const int b = g.input(image_tensor(ref));
  return g.value(msssim_node(g, a, b)).data[0];
}

LossValue mixed_loss(const io::Image& img, const io::Image& ref) {
  tg::GraphD g;
  const int a = g.input(image_tensor(img));
  const int b = g.input(image_tensor(ref));
  const LossNodes n = mixed_loss_node(g, a, b);
  return {g.value(n.mixed).data[0], g.value(n.l1).data[0], g.value(n.msssim).data[0]};
}

double psnr(const io::Image& img, const io::Image& ref, double peak) {
  if (img.h != ref.h || img.w != ref.w || img.c != ref.c)
    throw ShapeError("psnr: image shapes differ");
  double mse = 0;
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const double d = double(std::clamp(img.data[i], 0.f, 1.f)) -
                     double(std::clamp(ref.data[i], 0.f, 1.f));
    mse += d * d;
  }
  mse /= double(img.data.size());
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double reward(double loss) { return std::pow(10.0, 1.0 - loss); }

ErrorAnalysis error_analysis(const io::Image& img_a, const io::Image& img_b,
                             const io::Image& ref, double threshold) {
  if (img_a.h != ref.h || img_a.w != ref.w || img_b.h != ref.h || img_b.w != ref.w ||
      img_a.c != ref.c || img_b.c != ref.c)
    throw ShapeError("error_analysis: image shapes differ");
  if (threshold <= 0) throw ConfigError("error_analysis: threshold must be > 0");
  const int bins = 256;
  const double lo = -0.1, hi = 0.1;
  ErrorAnalysis out;
  out.binary = io::Image(ref.h, ref.w, 1);
  out.extreme = io::Image(ref.h, ref.w, 1);
  out.histogram.assign(bins, 0);
  out.bin_centers.resize(bins);
  const double width = (hi - lo) / bins;
  for (int b = 0; b < bins; ++b) out.bin_centers[std::size_t(b)] = lo + (b + 0.5) * width;
  for (int y = 0; y < ref.h; ++y)
    for (int x = 0; x < ref.w; ++x) {
      double mse_a = 0, mse_b = 0;
      for (int c = 0; c < ref.c; ++c) {
        const double da = double(img_a.at(c, y, x)) - double(ref.at(c, y, x));
        const double db = double(img_b.at(c, y, x)) - double(ref.at(c, y, x));
        mse_a += da * da;
        mse_b += db * db;
      }
      mse_a /= ref.c;
      mse_b /= ref.c;
      const double d = mse_a - mse_b;
      out.binary.at(0, y, x) = d > 0 ? 1.f : (d < 0 ? -1.f : 0.f);
      out.extreme.at(0, y, x) = std::abs(d) > threshold ? (d > 0 ? 1.f : -1.f) : 0.f;
      int bin = int(std::floor((d - lo) / width));
      bin = std::clamp(bin, 0, bins - 1);  // out-of-range mass lands in edge bins
      ++out.histogram[std::size_t(bin)];
    }
  return out;
}

}  // namespace rlpt::quality
