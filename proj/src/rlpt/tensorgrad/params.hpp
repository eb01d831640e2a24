// Copyright 2026 the rlpt authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "rlpt/tensorgrad/tensor.hpp"

namespace rlpt::tg {

// Named trainable tensors with their gradient and Adam moment buffers.
// Registration order is kept so checkpoints and updates are deterministic.
template <typename T>
struct ParamStore {
  struct Entry {
    Tensor<T> value;
    Tensor<T> grad;
    Tensor<T> m;  // Adam first moment
    Tensor<T> v;  // Adam second moment
  };

  std::vector<std::string> order;
  std::map<std::string, Entry> entries;

  Entry& add(const std::string& name, Tensor<T> init) {
    if (entries.count(name)) throw ConfigError("duplicate parameter: " + name);
    Entry e;
    e.grad = Tensor<T>::zeros(init.dims);
    e.m = Tensor<T>::zeros(init.dims);
    e.v = Tensor<T>::zeros(init.dims);
    e.value = std::move(init);
    order.push_back(name);
    return entries.emplace(name, std::move(e)).first->second;
  }

  bool has(const std::string& name) const { return entries.count(name) != 0; }

  Entry& get(const std::string& name) {
    auto it = entries.find(name);
    if (it == entries.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
  }
  const Entry& get(const std::string& name) const {
    auto it = entries.find(name);
    if (it == entries.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
  }

  void zero_grads() {
    for (auto& [name, e] : entries)
      std::fill(e.grad.data.begin(), e.grad.data.end(), T(0));
  }

  std::int64_t parameter_count() const {
    std::int64_t n = 0;
    for (const auto& [name, e] : entries) n += e.value.numel();
    return n;
  }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const std::string& name : order) out.add(name, get(name).value.template cast<U>());
    return out;
  }
};

}  // namespace rlpt::tg
