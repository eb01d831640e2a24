// Copyright 2026 the rlpt authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "rlpt/io/image_io.hpp"
#include "rlpt/rng.hpp"
#include "rlpt/tensorgrad/graph.hpp"

namespace rlpt::test {

inline tg::TensorD random_tensor(tg::Dims4 d, std::uint64_t seed, double lo = -1,
                                 double hi = 1) {
  tg::TensorD t(d);
  KeyedRng rng{seed};
  for (auto& v : t.data) v = lo + (hi - lo) * rng.next_double();
  return t;
}

inline tg::TensorF random_tensor_f(tg::Dims4 d, std::uint64_t seed, float lo = -1,
                                   float hi = 1) {
  return random_tensor(d, seed, lo, hi).cast<float>();
}

// Central-difference gradient check of a scalar graph loss against the
// analytic gradients for the named store parameters. Large tensors are
// subsampled (deterministically) to keep runtime bounded.
template <typename BuildFn>
double fd_max_rel_error(tg::ParamStore<double>& store,
                        const std::vector<std::string>& names, BuildFn build,
                        double eps = 1e-5, int max_elements_per_tensor = 0) {
  std::map<std::string, tg::TensorD> analytic;
  {
    tg::GraphD g(&store);
    const int loss = build(g);
    store.zero_grads();
    g.backward(loss);
    for (const auto& n : names) analytic[n] = store.get(n).grad;
  }
  auto eval = [&]() {
    tg::GraphD g(&store);
    return g.value(build(g)).data[0];
  };
  double max_rel = 0;
  for (const auto& n : names) {
    auto& val = store.get(n).value;
    std::vector<std::int64_t> idx;
    if (max_elements_per_tensor > 0 && val.numel() > max_elements_per_tensor) {
      KeyedRng rng{0xFDu, std::hash<std::string>{}(n)};
      for (int k = 0; k < max_elements_per_tensor; ++k)
        idx.push_back(std::int64_t(rng.next_below(std::uint32_t(val.numel()))));
    } else {
      for (std::int64_t i = 0; i < val.numel(); ++i) idx.push_back(i);
    }
    for (const std::int64_t i : idx) {
      const double orig = val.data[std::size_t(i)];
      val.data[std::size_t(i)] = orig + eps;
      const double fp = eval();
      val.data[std::size_t(i)] = orig - eps;
      const double fm = eval();
      val.data[std::size_t(i)] = orig;
      const double fd = (fp - fm) / (2 * eps);
      const double a = analytic[n].data[std::size_t(i)];
      const double rel = std::abs(a - fd) / std::max({1e-3, std::abs(a), std::abs(fd)});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

// Plain scalar MS-SSIM, independent of the tape implementation. Gaussian
// 11x11 window (shrunk odd when a scale is small), 2x2 average-pool
// downsampling, 3 scales with renormalized standard weights.
inline double reference_msssim(const io::Image& a, const io::Image& b) {
  const double w5[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  const int scales = std::min(a.h, a.w) >= 256 ? 5 : 3;
  double wsum = 0;
  for (int s = 0; s < scales; ++s) wsum += w5[s];

  auto clamp_img = [](io::Image img) {
    for (auto& v : img.data) v = std::clamp(v, 0.f, 1.f);
    return img;
  };
  io::Image x = clamp_img(a), y = clamp_img(b);

  double log_acc = 0;
  for (int s = 0; s < scales; ++s) {
    int win = std::min({11, x.h, x.w});
    if (win % 2 == 0) --win;
    std::vector<double> g(std::size_t(win), 0.0);
    const double mid = (win - 1) * 0.5;
    double gs = 0;
    for (int i = 0; i < win; ++i) {
      g[std::size_t(i)] = std::exp(-(i - mid) * (i - mid) / (2 * 1.5 * 1.5));
      gs += g[std::size_t(i)];
    }
    for (auto& v : g) v /= gs;

    const int oh = x.h - win + 1, ow = x.w - win + 1;
    double cs_sum = 0, l_sum = 0;
    std::int64_t count = 0;
    for (int c = 0; c < x.c; ++c)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
          for (int ky = 0; ky < win; ++ky)
            for (int kx = 0; kx < win; ++kx) {
              const double wgt = g[std::size_t(ky)] * g[std::size_t(kx)];
              const double vx = x.at(c, oy + ky, ox + kx);
              const double vy = y.at(c, oy + ky, ox + kx);
              mx += wgt * vx;
              my += wgt * vy;
              mxx += wgt * vx * vx;
              myy += wgt * vy * vy;
              mxy += wgt * vx * vy;
            }
          const double sxx = mxx - mx * mx, syy = myy - my * my, sxy = mxy - mx * my;
          cs_sum += (2 * sxy + 9e-4) / (sxx + syy + 9e-4);
          l_sum += (2 * mx * my + 1e-4) / (mx * mx + my * my + 1e-4);
          ++count;
        }
    const double cs = std::clamp(cs_sum / double(count), 1e-6, 1.0);
    const double l = std::clamp(l_sum / double(count), 1e-6, 1.0);
    const double weight = w5[s] / wsum;
    log_acc += weight * std::log(cs);
    if (s == scales - 1) log_acc += weight * std::log(l);
    if (s + 1 < scales) {
      io::Image nx(x.h / 2, x.w / 2, x.c), ny(x.h / 2, x.w / 2, x.c);
      for (int c = 0; c < x.c; ++c)
        for (int i = 0; i < nx.h; ++i)
          for (int j = 0; j < nx.w; ++j) {
            nx.at(c, i, j) = 0.25f * (x.at(c, 2 * i, 2 * j) + x.at(c, 2 * i, 2 * j + 1) +
                                      x.at(c, 2 * i + 1, 2 * j) + x.at(c, 2 * i + 1, 2 * j + 1));
            ny.at(c, i, j) = 0.25f * (y.at(c, 2 * i, 2 * j) + y.at(c, 2 * i, 2 * j + 1) +
                                      y.at(c, 2 * i + 1, 2 * j) + y.at(c, 2 * i + 1, 2 * j + 1));
          }
      x = std::move(nx);
      y = std::move(ny);
    }
  }
  return std::exp(log_acc);
}

inline io::Image random_image(int h, int w, int c, std::uint64_t seed, float lo = 0,
                              float hi = 1) {
  io::Image img(h, w, c);
  KeyedRng rng{seed, 0x1239u};
  for (auto& v : img.data) v = lo + (hi - lo) * rng.next_float();
  return img;
}

}  // namespace rlpt::test
