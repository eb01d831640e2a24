// Copyright 2026 the rlpt authors
// SPDX-License-Identifier: Apache-2.0

#include "rlpt/nets/nets.hpp"

#include <json.hpp>

#include "rlpt/rng.hpp"

namespace rlpt::nets {

using nlohmann::json;

std::string kind_name(NetKind k) {
  switch (k) {
    case NetKind::kImportance: return "importance";
    case NetKind::kEncoder: return "encoder";
    case NetKind::kDenoiser: return "denoiser";
    case NetKind::kCritic: return "critic";
  }
  return "?";
}

std::string size_name(NetSize s) {
  switch (s) {
    case NetSize::kSmall: return "small";
    case NetSize::kNormal: return "normal";
    case NetSize::kLarge: return "large";
  }
  return "?";
}

NetSize size_from_name(const std::string& name) {
  if (name == "small") return NetSize::kSmall;
  if (name == "normal") return NetSize::kNormal;
  if (name == "large") return NetSize::kLarge;
  throw ConfigError("unknown network size: " + name);
}

NetConfig build_variant(NetKind kind, NetSize size, int in_channels_override) {
  NetConfig c;
  c.kind = kind;
  c.size = size;
  switch (kind) {
    case NetKind::kImportance:
      c.in_channels = 39;
      c.out_channels = 1;
      if (size == NetSize::kSmall) {
        c.unet = false;  // plain CNN, three 3x3 blocks, one latent channel
        c.channels = {1, 1};
      } else if (size == NetSize::kNormal) {
        c.unet = true;
        c.channels = {4, 8, 16, 32, 64};
      } else {
        c.unet = true;  // the classic full-size UNET schedule
        c.channels = {64, 128, 256, 512, 1024};
      }
      break;
    case NetKind::kEncoder:
      c.in_channels = 56;
      c.out_channels = 32;
      c.unet = false;
      if (size == NetSize::kSmall) {
        c.conv_kernel = 1;
        c.channels = {48, 40, 32};
      } else if (size == NetSize::kNormal) {
        c.channels = {48, 40, 32};
      } else {
        c.channels = {48, 40, 32, 32, 32};
      }
      break;
    case NetKind::kDenoiser:
      c.in_channels = 32;
      c.out_channels = 3;
      c.unet = true;
      if (size == NetSize::kSmall)
        c.channels = {16, 24, 32, 40, 56};
      else if (size == NetSize::kNormal)
        c.channels = {32, 48, 64, 80, 112};
      else
        c.channels = {64, 96, 128, 160, 224};
      break;
    case NetKind::kCritic:
      c.in_channels = 39;
      c.out_channels = 1;
      c.unet = false;
      c.channels = {16, 8};
      break;
  }
  if (in_channels_override > 0) c.in_channels = in_channels_override;
  return c;
}

namespace {

struct ConvSpec {
  std::string name;
  int in = 0, out = 0, k = 3;
};

// Flattens the architecture into its conv layers, in forward order.
std::vector<ConvSpec> conv_layers(const NetConfig& c) {
  std::vector<ConvSpec> layers;
  if (!c.unet) {
    int prev = c.in_channels;
    int idx = 0;
    for (int ch : c.channels) {
      layers.push_back({"c" + std::to_string(idx++), prev, ch, c.conv_kernel});
      prev = ch;
    }
    layers.push_back({"out", prev, c.out_channels, c.conv_kernel});
    return layers;
  }
  const int levels = int(c.channels.size());
  int prev = c.in_channels;
  for (int l = 0; l < levels; ++l) {
    layers.push_back({"e" + std::to_string(l), prev, c.channels[std::size_t(l)], 3});
    prev = c.channels[std::size_t(l)];
  }
  for (int l = levels - 2; l >= 0; --l) {
    const int skip = c.channels[std::size_t(l)];
    layers.push_back({"d" + std::to_string(l), prev + skip, c.channels[std::size_t(l)], 3});
    prev = c.channels[std::size_t(l)];
  }
  layers.push_back({"out", prev, c.out_channels, 3});
  return layers;
}

}  // namespace

std::int64_t NetConfig::parameter_count() const {
  std::int64_t n = 0;
  for (const ConvSpec& l : conv_layers(*this))
    n += std::int64_t(l.in) * l.out * l.k * l.k + l.out;
  return n;
}

std::string NetConfig::to_json_text() const {
  json j;
  j["kind"] = kind_name(kind);
  j["size"] = size_name(size);
  j["in_channels"] = in_channels;
  j["out_channels"] = out_channels;
  j["unet"] = unet;
  j["conv_kernel"] = conv_kernel;
  j["channels"] = channels;
  return j.dump();
}

NetConfig NetConfig::from_json_text(const std::string& text) {
  json j = json::parse(text);
  NetConfig c;
  const std::string k = j.at("kind");
  if (k == "importance")
    c.kind = NetKind::kImportance;
  else if (k == "encoder")
    c.kind = NetKind::kEncoder;
  else if (k == "denoiser")
    c.kind = NetKind::kDenoiser;
  else if (k == "critic")
    c.kind = NetKind::kCritic;
  else
    throw ConfigError("unknown network kind: " + k);
  c.size = size_from_name(j.at("size"));
  c.in_channels = j.at("in_channels");
  c.out_channels = j.at("out_channels");
  c.unet = j.at("unet");
  c.conv_kernel = j.at("conv_kernel");
  c.channels = j.at("channels").get<std::vector<int>>();
  return c;
}

std::uint64_t NetConfig::config_hash() const {
  Fnv1a h;
  h.update_str(to_json_text());
  return h.digest();
}

template <typename T>
void init_params(const NetConfig& cfg, tg::ParamStore<T>& store, const std::string& prefix,
                 std::uint64_t seed) {
  int layer_index = 0;
  for (const ConvSpec& l : conv_layers(cfg)) {
    KeyedRng rng{seed, rng_domain::kInit, KeyedRng::mix(std::uint64_t(layer_index)),
                 std::uint64_t(cfg.config_hash())};
    const double fan_in = double(l.in) * l.k * l.k;
    const double fan_out = double(l.out) * l.k * l.k;
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    tg::Tensor<T> w({l.out, l.in, l.k, l.k});
    for (auto& v : w.data) v = T((rng.next_double() * 2.0 - 1.0) * bound);
    store.add(prefix + "." + l.name + ".w", std::move(w));
    store.add(prefix + "." + l.name + ".b", tg::Tensor<T>({1, l.out, 1, 1}));
    ++layer_index;
  }
}

template <typename T>
int forward(const NetConfig& cfg, tg::Graph<T>& g, int input, const std::string& prefix) {
  const tg::Dims4 d = g.value(input).dims;
  if (d.c != cfg.in_channels)
    throw ShapeError(kind_name(cfg.kind) + ": input channel axis mismatch: want " +
                     std::to_string(cfg.in_channels) + ", got " + std::to_string(d.c));
  auto conv = [&](int x, const std::string& name, int pad) {
    return g.conv2d(x, g.param(prefix + "." + name + ".w"),
                    g.param(prefix + "." + name + ".b"), 1, pad);
  };

  if (!cfg.unet) {
    int x = input;
    const int pad = cfg.conv_kernel / 2;
    for (int i = 0; i < int(cfg.channels.size()); ++i)
      x = g.relu(conv(x, "c" + std::to_string(i), pad));
    return conv(x, "out", pad);
  }

  const int levels = int(cfg.channels.size());
  const int need = 1 << (levels - 1);
  if (d.h % need != 0 || d.w % need != 0)
    throw ShapeError(kind_name(cfg.kind) + ": resolution " + std::to_string(d.h) + "x" +
                     std::to_string(d.w) + " not divisible by " + std::to_string(need) +
                     "; pad the input to a multiple of " + std::to_string(need));
  std::vector<int> skips;
  int x = input;
  for (int l = 0; l < levels; ++l) {
    x = g.relu(conv(x, "e" + std::to_string(l), 1));
    if (l + 1 < levels) {
      skips.push_back(x);
      x = g.maxpool2(x);
    }
  }
  for (int l = levels - 2; l >= 0; --l) {
    x = g.upsample2(x);
    x = g.concat(x, skips[std::size_t(l)]);
    x = g.relu(conv(x, "d" + std::to_string(l), 1));
  }
  return conv(x, "out", 1);
}

template <typename T>
int critic_forward(const NetConfig& cfg, tg::Graph<T>& g, int input,
                   const std::string& prefix) {
  const int raw = forward(cfg, g, input, prefix);
  const tg::Dims4 d = g.value(raw).dims;
  const double inv = 1.0 / (double(d.c) * d.h * d.w);
  return g.affine(g.sum_spatial(raw), T(inv), T(0));
}

template void init_params<float>(const NetConfig&, tg::ParamStore<float>&,
                                 const std::string&, std::uint64_t);
template void init_params<double>(const NetConfig&, tg::ParamStore<double>&,
                                  const std::string&, std::uint64_t);
template int forward<float>(const NetConfig&, tg::Graph<float>&, int, const std::string&);
template int forward<double>(const NetConfig&, tg::Graph<double>&, int, const std::string&);
template int critic_forward<float>(const NetConfig&, tg::Graph<float>&, int,
                                   const std::string&);
template int critic_forward<double>(const NetConfig&, tg::Graph<double>&, int,
                                    const std::string&);

}  // namespace rlpt::nets
