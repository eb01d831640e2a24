// Copyright 2026 the rlpt authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <omp.h>

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include "rlpt/tensorgrad/params.hpp"
#include "rlpt/tensorgrad/tensor.hpp"

namespace rlpt::tg {

// tanh that stays strictly inside (-1,1) in the working precision, so
// bounded latent/heatmap invariants survive float rounding.
template <typename T>
inline T tanh_bounded(T x) {
  T limit = T(1) - std::numeric_limits<T>::epsilon() / 2;
  return std::clamp(std::tanh(x), -limit, limit);
}

enum class Op {
  kInput,
  kParam,
  kConv2d,
  kMaxPool2,
  kUpsample2,
  kRelu,
  kTanh,
  kSoftplus,
  kConcat,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kMinimum,
  kAffine,
  kExp,
  kLog,
  kAbs,
  kPowScalar,
  kClamp,
  kSumAll,
  kMeanAll,
  kSumSpatial,
  kBroadcast,
  kSliceChannels,
};

// Reverse-mode tape over eagerly evaluated NCHW tensors. Nodes are stored
// in insertion order, which is also the topological order.
template <typename T>
class Graph {
 public:
  struct Node {
    Op op;
    int in0 = -1, in1 = -1, in2 = -1;
    Tensor<T> value;
    Tensor<T> grad;  // allocated lazily during backward
    bool requires_grad = false;
    // op attributes
    int stride = 1, pad = 0;
    T a = T(0), b = T(0);
    int c0 = 0, c1 = 0;
    std::vector<std::int32_t> arg;  // maxpool argmax
    std::string pname;              // kParam only
  };

  explicit Graph(ParamStore<T>* store = nullptr) : store_(store) {}

  int input(Tensor<T> v, bool requires_grad = false) {
    Node n;
    n.op = Op::kInput;
    n.value = std::move(v);
    n.requires_grad = requires_grad;
    return push(std::move(n));
  }

  int param(const std::string& name) {
    if (!store_) throw ConfigError("graph has no parameter store");
    Node n;
    n.op = Op::kParam;
    n.value = store_->get(name).value;
    n.requires_grad = true;
    n.pname = name;
    return push(std::move(n));
  }

  int conv2d(int x, int w, int b, int stride, int pad) {
    const Tensor<T>& in = val(x);
    const Tensor<T>& wt = val(w);
    if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
    if (pad < 0) throw ShapeError("conv2d: padding must be >= 0");
    if (wt.dims.h != wt.dims.w) throw ShapeError("conv2d: kernel must be square");
    if (wt.dims.c != in.dims.c)
      throw ShapeError("conv2d: input channel axis mismatch: input has " +
                       std::to_string(in.dims.c) + ", weight expects " +
                       std::to_string(wt.dims.c));
    const int k = wt.dims.h;
    const int oh = (in.dims.h + 2 * pad - k) / stride + 1;
    const int ow = (in.dims.w + 2 * pad - k) / stride + 1;
    if (in.dims.h + 2 * pad < k || in.dims.w + 2 * pad < k)
      throw ShapeError("conv2d: spatial axis smaller than kernel: input " +
                       in.dims.str() + ", kernel " + std::to_string(k));
    if (b >= 0) {
      const Tensor<T>& bias = val(b);
      if (bias.dims.c != wt.dims.n || bias.dims.n != 1 || bias.dims.h != 1 ||
          bias.dims.w != 1)
        throw ShapeError("conv2d: bias channel axis mismatch: want (1," +
                         std::to_string(wt.dims.n) + ",1,1), got " + bias.dims.str());
    }
    Node n;
    n.op = Op::kConv2d;
    n.in0 = x;
    n.in1 = w;
    n.in2 = b;
    n.stride = stride;
    n.pad = pad;
    n.requires_grad = needs(x) || needs(w) || (b >= 0 && needs(b));
    n.value = Tensor<T>({in.dims.n, wt.dims.n, oh, ow});
    conv_forward(in, wt, b >= 0 ? &val(b) : nullptr, stride, pad, n.value);
    return push(std::move(n));
  }

  int maxpool2(int x) {
    const Tensor<T>& in = val(x);
    if (in.dims.h % 2 != 0 || in.dims.w % 2 != 0)
      throw ShapeError("maxpool2: spatial axes must be even, got " + in.dims.str());
    Node n;
    n.op = Op::kMaxPool2;
    n.in0 = x;
    n.requires_grad = needs(x);
    n.value = Tensor<T>({in.dims.n, in.dims.c, in.dims.h / 2, in.dims.w / 2});
    n.arg.resize(static_cast<std::size_t>(n.value.numel()));
    const int oh = n.value.dims.h, ow = n.value.dims.w;
    for (int nn = 0; nn < in.dims.n; ++nn)
      for (int c = 0; c < in.dims.c; ++c)
        for (int y = 0; y < oh; ++y)
          for (int xx = 0; xx < ow; ++xx) {
            T best = in.at(nn, c, 2 * y, 2 * xx);
            int argbest = 0;
            for (int t = 1; t < 4; ++t) {
              T v = in.at(nn, c, 2 * y + (t >> 1), 2 * xx + (t & 1));
              if (v > best) {
                best = v;
                argbest = t;
              }
            }
            n.value.at(nn, c, y, xx) = best;
            n.arg[static_cast<std::size_t>(n.value.index(nn, c, y, xx))] = argbest;
          }
    return push(std::move(n));
  }

  int upsample2(int x) {
    const Tensor<T>& in = val(x);
    Node n;
    n.op = Op::kUpsample2;
    n.in0 = x;
    n.requires_grad = needs(x);
    n.value = Tensor<T>({in.dims.n, in.dims.c, in.dims.h * 2, in.dims.w * 2});
    for (int nn = 0; nn < in.dims.n; ++nn)
      for (int c = 0; c < in.dims.c; ++c)
        for (int y = 0; y < in.dims.h; ++y)
          for (int xx = 0; xx < in.dims.w; ++xx) {
            T v = in.at(nn, c, y, xx);
            n.value.at(nn, c, 2 * y, 2 * xx) = v;
            n.value.at(nn, c, 2 * y, 2 * xx + 1) = v;
            n.value.at(nn, c, 2 * y + 1, 2 * xx) = v;
            n.value.at(nn, c, 2 * y + 1, 2 * xx + 1) = v;
          }
    return push(std::move(n));
  }

  int relu(int x) {
    return unary(Op::kRelu, x, [](T v) { return v > T(0) ? v : T(0); });
  }
  int tanh(int x) {
    return unary(Op::kTanh, x, [](T v) { return tanh_bounded(v); });
  }
  int softplus(int x) {
    return unary(Op::kSoftplus, x, [](T v) {
      return v > T(30) ? v : std::log1p(std::exp(v));
    });
  }
  int exp(int x) {
    return unary(Op::kExp, x, [](T v) { return std::exp(v); });
  }
  int log(int x) {
    return unary(Op::kLog, x, [](T v) { return std::log(v); });
  }
  int abs(int x) {
    return unary(Op::kAbs, x, [](T v) { return std::abs(v); });
  }

  int concat(int a, int b) {
    const Tensor<T>& ta = val(a);
    const Tensor<T>& tb = val(b);
    if (ta.dims.n != tb.dims.n || ta.dims.h != tb.dims.h || ta.dims.w != tb.dims.w)
      throw ShapeError("concat: spatial/batch axis mismatch: " + ta.dims.str() +
                       " vs " + tb.dims.str());
    Node n;
    n.op = Op::kConcat;
    n.in0 = a;
    n.in1 = b;
    n.requires_grad = needs(a) || needs(b);
    n.value = Tensor<T>({ta.dims.n, ta.dims.c + tb.dims.c, ta.dims.h, ta.dims.w});
    const std::int64_t plane = std::int64_t(ta.dims.h) * ta.dims.w;
    for (int nn = 0; nn < ta.dims.n; ++nn) {
      std::memcpy(&n.value.data[n.value.index(nn, 0, 0, 0)],
                  &ta.data[ta.index(nn, 0, 0, 0)],
                  sizeof(T) * static_cast<std::size_t>(plane * ta.dims.c));
      std::memcpy(&n.value.data[n.value.index(nn, ta.dims.c, 0, 0)],
                  &tb.data[tb.index(nn, 0, 0, 0)],
                  sizeof(T) * static_cast<std::size_t>(plane * tb.dims.c));
    }
    return push(std::move(n));
  }

  int add(int a, int b) {
    return binary(Op::kAdd, a, b, [](T x, T y) { return x + y; });
  }
  int sub(int a, int b) {
    return binary(Op::kSub, a, b, [](T x, T y) { return x - y; });
  }
  int mul(int a, int b) {
    return binary(Op::kMul, a, b, [](T x, T y) { return x * y; });
  }
  int div(int a, int b) {
    return binary(Op::kDiv, a, b, [](T x, T y) { return x / y; });
  }
  int minimum(int a, int b) {
    return binary(Op::kMinimum, a, b, [](T x, T y) { return x <= y ? x : y; });
  }

  // a*x + b
  int affine(int x, T a, T b) {
    Node n = make_unary(Op::kAffine, x);
    n.a = a;
    n.b = b;
    const Tensor<T>& in = val(x);
    for (std::int64_t i = 0; i < in.numel(); ++i) n.value.data[i] = a * in.data[i] + b;
    return push(std::move(n));
  }

  int pow_scalar(int x, T p) {
    Node n = make_unary(Op::kPowScalar, x);
    n.a = p;
    const Tensor<T>& in = val(x);
    for (std::int64_t i = 0; i < in.numel(); ++i) n.value.data[i] = std::pow(in.data[i], p);
    return push(std::move(n));
  }

  int clamp(int x, T lo, T hi) {
    Node n = make_unary(Op::kClamp, x);
    n.a = lo;
    n.b = hi;
    const Tensor<T>& in = val(x);
    for (std::int64_t i = 0; i < in.numel(); ++i)
      n.value.data[i] = std::clamp(in.data[i], lo, hi);
    return push(std::move(n));
  }

  int sum_all(int x) {
    Node n;
    n.op = Op::kSumAll;
    n.in0 = x;
    n.requires_grad = needs(x);
    double acc = 0;
    for (T v : val(x).data) acc += double(v);
    n.value = Tensor<T>::scalar(T(acc));
    return push(std::move(n));
  }

  int mean_all(int x) {
    Node n;
    n.op = Op::kMeanAll;
    n.in0 = x;
    n.requires_grad = needs(x);
    double acc = 0;
    for (T v : val(x).data) acc += double(v);
    n.value = Tensor<T>::scalar(T(acc / double(val(x).numel())));
    return push(std::move(n));
  }

  // (N,C,H,W) -> (N,1,1,1), summing channels and space per batch element.
  int sum_spatial(int x) {
    const Tensor<T>& in = val(x);
    Node n;
    n.op = Op::kSumSpatial;
    n.in0 = x;
    n.requires_grad = needs(x);
    n.value = Tensor<T>({in.dims.n, 1, 1, 1});
    const std::int64_t per = std::int64_t(in.dims.c) * in.dims.h * in.dims.w;
    for (int nn = 0; nn < in.dims.n; ++nn) {
      double acc = 0;
      const T* p = &in.data[static_cast<std::size_t>(nn) * per];
      for (std::int64_t i = 0; i < per; ++i) acc += double(p[i]);
      n.value.data[nn] = T(acc);
    }
    return push(std::move(n));
  }

  // Explicit shape coercion: (1,1,1,1) -> dims, or (N,1,1,1) -> (N,c,h,w).
  int broadcast(int x, Dims4 dims) {
    const Tensor<T>& in = val(x);
    if (!(in.is_scalar() || (in.dims.c == 1 && in.dims.h == 1 && in.dims.w == 1 &&
                             in.dims.n == dims.n)))
      throw ShapeError("broadcast: source must be (1,1,1,1) or (N,1,1,1), got " +
                       in.dims.str());
    Node n;
    n.op = Op::kBroadcast;
    n.in0 = x;
    n.requires_grad = needs(x);
    n.value = Tensor<T>(dims);
    const std::int64_t per = std::int64_t(dims.c) * dims.h * dims.w;
    for (int nn = 0; nn < dims.n; ++nn) {
      T v = in.is_scalar() ? in.data[0] : in.data[nn];
      T* p = &n.value.data[static_cast<std::size_t>(nn) * per];
      for (std::int64_t i = 0; i < per; ++i) p[i] = v;
    }
    return push(std::move(n));
  }

  int slice_channels(int x, int c0, int c1) {
    const Tensor<T>& in = val(x);
    if (c0 < 0 || c1 > in.dims.c || c0 >= c1)
      throw ShapeError("slice_channels: bad channel range [" + std::to_string(c0) +
                       "," + std::to_string(c1) + ") on " + in.dims.str());
    Node n;
    n.op = Op::kSliceChannels;
    n.in0 = x;
    n.c0 = c0;
    n.c1 = c1;
    n.requires_grad = needs(x);
    n.value = Tensor<T>({in.dims.n, c1 - c0, in.dims.h, in.dims.w});
    const std::int64_t plane = std::int64_t(in.dims.h) * in.dims.w;
    for (int nn = 0; nn < in.dims.n; ++nn)
      std::memcpy(&n.value.data[n.value.index(nn, 0, 0, 0)],
                  &in.data[in.index(nn, c0, 0, 0)],
                  sizeof(T) * static_cast<std::size_t>(plane * (c1 - c0)));
    return push(std::move(n));
  }

  const Tensor<T>& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const Tensor<T>& grad(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.numel() == 0)
      throw ShapeError("grad requested for node without gradient");
    return n.grad;
  }

  // Backpropagates from a scalar loss node. Parameter gradients are
  // accumulated into the store; parameters not on the tape keep their
  // (zeroed) gradients.
  void backward(int loss) { backward_seeded(loss, Tensor<T>::scalar(T(1)), true); }

  // Backpropagates an arbitrary adjoint injected at `node`. Used where the
  // seed gradient comes from outside the tape.
  void backward_adjoint(int node, const Tensor<T>& adjoint) {
    backward_seeded(node, adjoint, false);
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
  ParamStore<T>* store_;

  int push(Node&& n) {
    nodes_.push_back(std::move(n));
    return int(nodes_.size()) - 1;
  }
  const Tensor<T>& val(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool needs(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

  Node make_unary(Op op, int x) {
    Node n;
    n.op = op;
    n.in0 = x;
    n.requires_grad = needs(x);
    n.value = Tensor<T>(val(x).dims);
    return n;
  }

  template <typename F>
  int unary(Op op, int x, F f) {
    Node n = make_unary(op, x);
    const Tensor<T>& in = val(x);
    const std::int64_t m = in.numel();
#pragma omp parallel for schedule(static) if (m > 16384)
    for (std::int64_t i = 0; i < m; ++i) n.value.data[i] = f(in.data[i]);
    return push(std::move(n));
  }

  template <typename F>
  int binary(Op op, int a, int b, F f) {
    const Tensor<T>& ta = val(a);
    const Tensor<T>& tb = val(b);
    if (!(ta.dims == tb.dims))
      throw ShapeError("elementwise op: shape mismatch " + ta.dims.str() + " vs " +
                       tb.dims.str());
    Node n;
    n.op = op;
    n.in0 = a;
    n.in1 = b;
    n.requires_grad = needs(a) || needs(b);
    n.value = Tensor<T>(ta.dims);
    const std::int64_t m = ta.numel();
#pragma omp parallel for schedule(static) if (m > 16384)
    for (std::int64_t i = 0; i < m; ++i) n.value.data[i] = f(ta.data[i], tb.data[i]);
    return push(std::move(n));
  }

  Tensor<T>& grad_buf(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.numel() == 0) n.grad = Tensor<T>::zeros(n.value.dims);
    return n.grad;
  }

  void backward_seeded(int seed_node, const Tensor<T>& seed, bool expect_scalar) {
    Node& top = nodes_[static_cast<std::size_t>(seed_node)];
    if (expect_scalar && !top.value.is_scalar())
      throw ShapeError("backward: loss node must be scalar, got " + top.value.dims.str());
    if (!(seed.dims == top.value.dims))
      throw ShapeError("backward: adjoint shape mismatch");
    if (!top.requires_grad) {
      flush_param_grads();
      return;
    }
    grad_buf(seed_node) = seed;
    for (int id = seed_node; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (!n.requires_grad || n.grad.numel() == 0) continue;
      step_backward(n);
    }
    flush_param_grads();
  }

  void flush_param_grads() {
    if (!store_) return;
    for (Node& n : nodes_) {
      if (n.op != Op::kParam || n.grad.numel() == 0) continue;
      Tensor<T>& g = store_->get(n.pname).grad;
      for (std::int64_t i = 0; i < g.numel(); ++i) g.data[i] += n.grad.data[i];
    }
  }

  void add_into(Tensor<T>& dst, const Tensor<T>& src) {
    for (std::int64_t i = 0; i < dst.numel(); ++i) dst.data[i] += src.data[i];
  }

  void step_backward(Node& n) {
    const Tensor<T>& g = n.grad;
    switch (n.op) {
      case Op::kInput:
      case Op::kParam:
        break;
      case Op::kConv2d: {
        const Tensor<T>& in = val(n.in0);
        const Tensor<T>& wt = val(n.in1);
        Tensor<T>* gin = needs(n.in0) ? &grad_buf(n.in0) : nullptr;
        Tensor<T>* gw = needs(n.in1) ? &grad_buf(n.in1) : nullptr;
        Tensor<T>* gb = (n.in2 >= 0 && needs(n.in2)) ? &grad_buf(n.in2) : nullptr;
        conv_backward(in, wt, g, n.stride, n.pad, gin, gw, gb);
        break;
      }
      case Op::kMaxPool2: {
        Tensor<T>& gin = grad_buf(n.in0);
        const int oh = n.value.dims.h, ow = n.value.dims.w;
        for (int nn = 0; nn < n.value.dims.n; ++nn)
          for (int c = 0; c < n.value.dims.c; ++c)
            for (int y = 0; y < oh; ++y)
              for (int x = 0; x < ow; ++x) {
                int t = n.arg[static_cast<std::size_t>(n.value.index(nn, c, y, x))];
                gin.at(nn, c, 2 * y + (t >> 1), 2 * x + (t & 1)) += g.at(nn, c, y, x);
              }
        break;
      }
      case Op::kUpsample2: {
        Tensor<T>& gin = grad_buf(n.in0);
        for (int nn = 0; nn < gin.dims.n; ++nn)
          for (int c = 0; c < gin.dims.c; ++c)
            for (int y = 0; y < gin.dims.h; ++y)
              for (int x = 0; x < gin.dims.w; ++x)
                gin.at(nn, c, y, x) += g.at(nn, c, 2 * y, 2 * x) +
                                       g.at(nn, c, 2 * y, 2 * x + 1) +
                                       g.at(nn, c, 2 * y + 1, 2 * x) +
                                       g.at(nn, c, 2 * y + 1, 2 * x + 1);
        break;
      }
      case Op::kRelu: {
        Tensor<T>& gin = grad_buf(n.in0);
        for (std::int64_t i = 0; i < gin.numel(); ++i)
          if (n.value.data[i] > T(0)) gin.data[i] += g.data[i];
        break;
      }
      case Op::kTanh: {
        Tensor<T>& gin = grad_buf(n.in0);
        for (std::int64_t i = 0; i < gin.numel(); ++i) {
          T y = n.value.data[i];
          gin.data[i] += g.data[i] * (T(1) - y * y);
        }
        break;
      }
      case Op::kSoftplus: {
        const Tensor<T>& in = val(n.in0);
        Tensor<T>& gin = grad_buf(n.in0);
        for (std::int64_t i = 0; i < gin.numel(); ++i) {
          T s = T(1) / (T(1) + std::exp(-in.data[i]));
          gin.data[i] += g.data[i] * s;
        }
        break;
      }
      case Op::kConcat: {
        const Tensor<T>& ta = val(n.in0);
        const std::int64_t plane = std::int64_t(ta.dims.h) * ta.dims.w;
        if (needs(n.in0)) {
          Tensor<T>& ga = grad_buf(n.in0);
          for (int nn = 0; nn < ta.dims.n; ++nn) {
            const T* src = &g.data[n.value.index(nn, 0, 0, 0)];
            T* dst = &ga.data[ga.index(nn, 0, 0, 0)];
            for (std::int64_t i = 0; i < plane * ta.dims.c; ++i) dst[i] += src[i];
          }
        }
        if (needs(n.in1)) {
          const Tensor<T>& tb = val(n.in1);
          Tensor<T>& gb = grad_buf(n.in1);
          for (int nn = 0; nn < tb.dims.n; ++nn) {
            const T* src = &g.data[n.value.index(nn, ta.dims.c, 0, 0)];
            T* dst = &gb.data[gb.index(nn, 0, 0, 0)];
            for (std::int64_t i = 0; i < plane * tb.dims.c; ++i) dst[i] += src[i];
          }
        }
        break;
      }
      case Op::kAdd: {
        if (needs(n.in0)) add_into(grad_buf(n.in0), g);
        if (needs(n.in1)) add_into(grad_buf(n.in1), g);
        break;
      }
      case Op::kSub: {
        if (needs(n.in0)) add_into(grad_buf(n.in0), g);
        if (needs(n.in1)) {
          Tensor<T>& gb = grad_buf(n.in1);
          for (std::int64_t i = 0; i < gb.numel(); ++i) gb.data[i] -= g.data[i];
        }
        break;
      }
      case Op::kMul: {
        const Tensor<T>& ta = val(n.in0);
        const Tensor<T>& tb = val(n.in1);
        if (needs(n.in0)) {
          Tensor<T>& ga = grad_buf(n.in0);
          for (std::int64_t i = 0; i < ga.numel(); ++i) ga.data[i] += g.data[i] * tb.data[i];
        }
        if (needs(n.in1)) {
          Tensor<T>& gb = grad_buf(n.in1);
          for (std::int64_t i = 0; i < gb.numel(); ++i) gb.data[i] += g.data[i] * ta.data[i];
        }
        break;
      }
      case Op::kDiv: {
        const Tensor<T>& ta = val(n.in0);
        const Tensor<T>& tb = val(n.in1);
        if (needs(n.in0)) {
          Tensor<T>& ga = grad_buf(n.in0);
          for (std::int64_t i = 0; i < ga.numel(); ++i) ga.data[i] += g.data[i] / tb.data[i];
        }
        if (needs(n.in1)) {
          Tensor<T>& gb = grad_buf(n.in1);
          for (std::int64_t i = 0; i < gb.numel(); ++i)
            gb.data[i] -= g.data[i] * ta.data[i] / (tb.data[i] * tb.data[i]);
        }
        break;
      }
      case Op::kMinimum: {
        const Tensor<T>& ta = val(n.in0);
        const Tensor<T>& tb = val(n.in1);
        if (needs(n.in0)) {
          Tensor<T>& ga = grad_buf(n.in0);
          for (std::int64_t i = 0; i < ga.numel(); ++i)
            if (ta.data[i] <= tb.data[i]) ga.data[i] += g.data[i];
        }
        if (needs(n.in1)) {
          Tensor<T>& gb = grad_buf(n.in1);
          for (std::int64_t i = 0; i < gb.numel(); ++i)
            if (ta.data[i] > tb.data[i]) gb.data[i] += g.data[i];
        }
        break;
      }
      case Op::kAffine: {
        Tensor<T>& gin = grad_buf(n.in0);
        for (std::int64_t i = 0; i < gin.numel(); ++i) gin.data[i] += n.a * g.data[i];
        break;
      }
      case Op::kExp: {
        Tensor<T>& gin = grad_buf(n.in0);
        for (std::int64_t i = 0; i < gin.numel(); ++i)
          gin.data[i] += g.data[i] * n.value.data[i];
        break;
      }
      case Op::kLog: {
        const Tensor<T>& in = val(n.in0);
        Tensor<T>& gin = grad_buf(n.in0);
        for (std::int64_t i = 0; i < gin.numel(); ++i) gin.data[i] += g.data[i] / in.data[i];
        break;
      }
      case Op::kAbs: {
        const Tensor<T>& in = val(n.in0);
        Tensor<T>& gin = grad_buf(n.in0);
        for (std::int64_t i = 0; i < gin.numel(); ++i) {
          T s = in.data[i] > T(0) ? T(1) : (in.data[i] < T(0) ? T(-1) : T(0));
          gin.data[i] += g.data[i] * s;
        }
        break;
      }
      case Op::kPowScalar: {
        const Tensor<T>& in = val(n.in0);
        Tensor<T>& gin = grad_buf(n.in0);
        for (std::int64_t i = 0; i < gin.numel(); ++i)
          gin.data[i] += g.data[i] * n.a * std::pow(in.data[i], n.a - T(1));
        break;
      }
      case Op::kClamp: {
        const Tensor<T>& in = val(n.in0);
        Tensor<T>& gin = grad_buf(n.in0);
        for (std::int64_t i = 0; i < gin.numel(); ++i)
          if (in.data[i] >= n.a && in.data[i] <= n.b) gin.data[i] += g.data[i];
        break;
      }
      case Op::kSumAll: {
        Tensor<T>& gin = grad_buf(n.in0);
        const T gv = g.data[0];
        for (std::int64_t i = 0; i < gin.numel(); ++i) gin.data[i] += gv;
        break;
      }
      case Op::kMeanAll: {
        Tensor<T>& gin = grad_buf(n.in0);
        const T gv = g.data[0] / T(double(gin.numel()));
        for (std::int64_t i = 0; i < gin.numel(); ++i) gin.data[i] += gv;
        break;
      }
      case Op::kSumSpatial: {
        Tensor<T>& gin = grad_buf(n.in0);
        const std::int64_t per = std::int64_t(gin.dims.c) * gin.dims.h * gin.dims.w;
        for (int nn = 0; nn < gin.dims.n; ++nn) {
          const T gv = g.data[nn];
          T* p = &gin.data[static_cast<std::size_t>(nn) * per];
          for (std::int64_t i = 0; i < per; ++i) p[i] += gv;
        }
        break;
      }
      case Op::kBroadcast: {
        Tensor<T>& gin = grad_buf(n.in0);
        const std::int64_t per = std::int64_t(g.dims.c) * g.dims.h * g.dims.w;
        if (gin.is_scalar()) {
          double acc = 0;
          for (T v : g.data) acc += double(v);
          gin.data[0] += T(acc);
        } else {
          for (int nn = 0; nn < g.dims.n; ++nn) {
            double acc = 0;
            const T* p = &g.data[static_cast<std::size_t>(nn) * per];
            for (std::int64_t i = 0; i < per; ++i) acc += double(p[i]);
            gin.data[nn] += T(acc);
          }
        }
        break;
      }
      case Op::kSliceChannels: {
        Tensor<T>& gin = grad_buf(n.in0);
        const std::int64_t plane = std::int64_t(gin.dims.h) * gin.dims.w;
        for (int nn = 0; nn < gin.dims.n; ++nn) {
          const T* src = &g.data[n.value.index(nn, 0, 0, 0)];
          T* dst = &gin.data[gin.index(nn, n.c0, 0, 0)];
          for (std::int64_t i = 0; i < plane * (n.c1 - n.c0); ++i) dst[i] += src[i];
        }
        break;
      }
    }
  }

  // ---- convolution kernels (im2col + GEMM) ----

  using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MapRM = Eigen::Map<RowMat>;
  using CMapRM = Eigen::Map<const RowMat>;

  // Caffe-layout im2col: out[(ic*k+ky)*k+kx][oy*ow+ox].
  static void im2col(const T* in, int ic, int h, int w, int k, int stride, int pad,
                     int oh, int ow, T* col) {
    for (int c = 0; c < ic; ++c)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          T* dst = col + ((std::int64_t(c) * k + ky) * k + kx) * oh * ow;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= h) {
              std::fill(dst, dst + ow, T(0));
              dst += ow;
              continue;
            }
            const T* src = in + (std::int64_t(c) * h + iy) * w;
            if (stride == 1) {
              for (int ox = 0; ox < ow; ++ox) {
                const int ix = ox - pad + kx;
                dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
              }
            } else {
              for (int ox = 0; ox < ow; ++ox) {
                const int ix = ox * stride - pad + kx;
                dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
              }
            }
            dst += ow;
          }
        }
  }

  static void col2im(const T* col, int ic, int h, int w, int k, int stride, int pad,
                     int oh, int ow, T* in_grad) {
    for (int c = 0; c < ic; ++c)
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const T* src = col + ((std::int64_t(c) * k + ky) * k + kx) * oh * ow;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= h) {
              src += ow;
              continue;
            }
            T* dst = in_grad + (std::int64_t(c) * h + iy) * w;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride - pad + kx;
              if (ix >= 0 && ix < w) dst[ix] += src[ox];
            }
            src += ow;
          }
        }
  }

  static void conv_forward(const Tensor<T>& in, const Tensor<T>& wt, const Tensor<T>* bias,
                           int stride, int pad, Tensor<T>& out) {
    const int k = wt.dims.h, ic = in.dims.c, oc = wt.dims.n;
    const int oh = out.dims.h, ow = out.dims.w;
    const std::int64_t ckk = std::int64_t(ic) * k * k;
    const std::int64_t px = std::int64_t(oh) * ow;
    CMapRM wmat(wt.data.data(), oc, ckk);
#pragma omp parallel
    {
      std::vector<T> col(static_cast<std::size_t>(ckk * px));
#pragma omp for schedule(static)
      for (int nn = 0; nn < in.dims.n; ++nn) {
        im2col(&in.data[in.index(nn, 0, 0, 0)], ic, in.dims.h, in.dims.w, k, stride,
               pad, oh, ow, col.data());
        CMapRM colmat(col.data(), ckk, px);
        MapRM outmat(&out.data[out.index(nn, 0, 0, 0)], oc, px);
        outmat.noalias() = wmat * colmat;
        if (bias)
          for (int c = 0; c < oc; ++c) outmat.row(c).array() += bias->data[static_cast<std::size_t>(c)];
      }
    }
  }

  static void conv_backward(const Tensor<T>& in, const Tensor<T>& wt, const Tensor<T>& gout,
                            int stride, int pad, Tensor<T>* gin, Tensor<T>* gw,
                            Tensor<T>* gb) {
    const int k = wt.dims.h, ic = in.dims.c, oc = wt.dims.n;
    const int oh = gout.dims.h, ow = gout.dims.w;
    const std::int64_t ckk = std::int64_t(ic) * k * k;
    const std::int64_t px = std::int64_t(oh) * ow;
    CMapRM wmat(wt.data.data(), oc, ckk);

    const int nthreads = omp_get_max_threads();
    std::vector<RowMat> gw_part;
    if (gw) gw_part.assign(static_cast<std::size_t>(nthreads), RowMat::Zero(oc, ckk));
    std::vector<Eigen::Matrix<T, Eigen::Dynamic, 1>> gb_part;
    if (gb)
      gb_part.assign(static_cast<std::size_t>(nthreads),
                     Eigen::Matrix<T, Eigen::Dynamic, 1>::Zero(oc));

#pragma omp parallel
    {
      const int tid = omp_get_thread_num();
      std::vector<T> col(static_cast<std::size_t>(ckk * px));
      std::vector<T> dcol(gin ? static_cast<std::size_t>(ckk * px) : 0);
#pragma omp for schedule(static)
      for (int nn = 0; nn < in.dims.n; ++nn) {
        CMapRM gout_mat(&gout.data[gout.index(nn, 0, 0, 0)], oc, px);
        if (gw || gin)
          im2col(&in.data[in.index(nn, 0, 0, 0)], ic, in.dims.h, in.dims.w, k, stride,
                 pad, oh, ow, col.data());
        if (gw) {
          CMapRM colmat(col.data(), ckk, px);
          gw_part[static_cast<std::size_t>(tid)].noalias() += gout_mat * colmat.transpose();
        }
        if (gb) gb_part[static_cast<std::size_t>(tid)].noalias() += gout_mat.rowwise().sum();
        if (gin) {
          MapRM dcol_mat(dcol.data(), ckk, px);
          dcol_mat.noalias() = wmat.transpose() * gout_mat;
          col2im(dcol.data(), ic, in.dims.h, in.dims.w, k, stride, pad, oh, ow,
                 &gin->data[gin->index(nn, 0, 0, 0)]);
        }
      }
    }
    // Fixed-order reduction across threads keeps results bit-stable.
    if (gw) {
      MapRM gw_mat(gw->data.data(), oc, ckk);
      for (int t = 0; t < nthreads; ++t) gw_mat += gw_part[static_cast<std::size_t>(t)];
    }
    if (gb) {
      for (int t = 0; t < nthreads; ++t)
        for (int c = 0; c < oc; ++c) gb->data[static_cast<std::size_t>(c)] += gb_part[static_cast<std::size_t>(t)](c);
    }
  }
};

using GraphF = Graph<float>;
using GraphD = Graph<double>;

}  // namespace rlpt::tg
