// Copyright 2026 the rlpt authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rlpt/common.hpp"

namespace rlpt::tg {

struct Dims4 {
  int n = 0, c = 0, h = 0, w = 0;

  bool operator==(const Dims4&) const = default;
  std::int64_t numel() const {
    return std::int64_t(n) * c * h * w;
  }
  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

// Dense NCHW tensor. float for training, double for gradient checking.
template <typename T>
struct Tensor {
  Dims4 dims;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Dims4 d) : dims(d), data(static_cast<std::size_t>(d.numel()), T(0)) {}

  static Tensor zeros(Dims4 d) { return Tensor(d); }
  static Tensor full(Dims4 d, T v) {
    Tensor t(d);
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor scalar(T v) { return full({1, 1, 1, 1}, v); }

  std::int64_t numel() const { return dims.numel(); }
  bool is_scalar() const { return dims == Dims4{1, 1, 1, 1}; }

  std::int64_t index(int n, int c, int h, int w) const {
    return ((std::int64_t(n) * dims.c + c) * dims.h + h) * dims.w + w;
  }
  T& at(int n, int c, int h, int w) { return data[index(n, c, h, w)]; }
  const T& at(int n, int c, int h, int w) const { return data[index(n, c, h, w)]; }

  bool all_finite() const {
    for (const T& v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.dims = dims;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace rlpt::tg
