// Copyright 2026 the rlpt authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rlpt/tensorgrad/graph.hpp"

namespace rlpt::nets {

enum class NetKind { kImportance, kEncoder, kDenoiser, kCritic };
enum class NetSize { kSmall, kNormal, kLarge };

std::string kind_name(NetKind k);
std::string size_name(NetSize s);
NetSize size_from_name(const std::string& name);

// Concrete layer schedule for one network. `channels` is the per-level
// schedule for UNETs (importance/denoiser) and the full conv chain for the
// plain CNNs (encoder/critic/small importance).
struct NetConfig {
  NetKind kind = NetKind::kImportance;
  NetSize size = NetSize::kNormal;
  int in_channels = 0;
  int out_channels = 0;
  bool unet = false;
  int conv_kernel = 3;
  std::vector<int> channels;

  std::int64_t parameter_count() const;
  std::string to_json_text() const;
  static NetConfig from_json_text(const std::string& text);
  std::uint64_t config_hash() const;
};

// The architecture table. Channel contracts: importance 39->1, encoder
// (32 warped latent + 24 samples) 56->32, denoiser 32->3, critic 39->1
// scalar. `in_channels_override` serves pipeline variants that change the
// input assembly (e.g. no-encoder mode).
NetConfig build_variant(NetKind kind, NetSize size, int in_channels_override = -1);

// Registers uniformly initialized parameters (+-sqrt(6/(fan_in+fan_out)))
// under `prefix` in the store.
template <typename T>
void init_params(const NetConfig& cfg, tg::ParamStore<T>& store, const std::string& prefix,
                 std::uint64_t seed);

// Builds the forward pass on the tape and returns the raw (pre-activation)
// output node. Callers apply the contract activation: tanh for importance
// heatmaps and encoder latents, none for the denoiser.
template <typename T>
int forward(const NetConfig& cfg, tg::Graph<T>& g, int input, const std::string& prefix);

// Critic head: conv stack then spatial mean, one scalar per batch element.
template <typename T>
int critic_forward(const NetConfig& cfg, tg::Graph<T>& g, int input,
                   const std::string& prefix);

}  // namespace rlpt::nets
