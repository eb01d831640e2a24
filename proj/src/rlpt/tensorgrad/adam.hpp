// Copyright 2026 the rlpt authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>

#include "rlpt/tensorgrad/params.hpp"

namespace rlpt::tg {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update over every parameter in the store.
// `t` is the 1-based step count after this update.
template <typename T>
void adam_step(ParamStore<T>& store, double lr, std::int64_t t,
               const AdamConfig& cfg = {}) {
  if (lr <= 0) throw ConfigError("adam_step: learning rate must be > 0");
  if (t < 1) throw ConfigError("adam_step: step index must be >= 1");
  const T b1 = T(cfg.beta1), b2 = T(cfg.beta2);
  const T bc1 = T(1.0 - std::pow(cfg.beta1, double(t)));
  const T bc2 = T(1.0 - std::pow(cfg.beta2, double(t)));
  for (const std::string& name : store.order) {
    auto& e = store.get(name);
    const std::int64_t m = e.value.numel();
    for (std::int64_t i = 0; i < m; ++i) {
      const T g = e.grad.data[i];
      e.m.data[i] = b1 * e.m.data[i] + (T(1) - b1) * g;
      e.v.data[i] = b2 * e.v.data[i] + (T(1) - b2) * g * g;
      const T mhat = e.m.data[i] / bc1;
      const T vhat = e.v.data[i] / bc2;
      e.value.data[i] -= T(lr) * mhat / (std::sqrt(vhat) + T(cfg.eps));
    }
  }
}

}  // namespace rlpt::tg
