// Copyright 2026 the rlpt authors
// SPDX-License-Identifier: Apache-2.0

#include "rlpt/pipeline/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rlpt/rng.hpp"
#include "rlpt/tensorgrad/checkpoint.hpp"

namespace rlpt::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kOurs: return "ours";
    case Variant::kA1GradApprox: return "A1_grad_approx";
    case Variant::kA2Uniform: return "A2_uniform";
    case Variant::kB1NoEncoder: return "B1_no_encoder";
    case Variant::kB2NoTemporal: return "B2_no_temporal";
    case Variant::kCAveraged: return "C_averaged";
    case Variant::kSmall: return "small";
  }
  return "?";
}

Variant variant_from_name(const std::string& name) {
  for (Variant v : {Variant::kOurs, Variant::kA1GradApprox, Variant::kA2Uniform,
                    Variant::kB1NoEncoder, Variant::kB2NoTemporal, Variant::kCAveraged,
                    Variant::kSmall})
    if (variant_name(v) == name) return v;
  throw ConfigError("unknown variant: " + name);
}

double lr_schedule(const ScheduleState& s) {
  if (s.total_steps < 1) throw ConfigError("lr_schedule: total_steps must be >= 1");
  const double step = double(std::clamp<std::int64_t>(s.step, 0, s.total_steps));
  const double warm = std::max(1.0, std::round(s.warmup_frac * double(s.total_steps)));
  if (step <= warm) return s.lr_min + (s.lr_max - s.lr_min) * (step / warm);
  // decay rate solved from lr(total) = lr_min
  const double k = std::log(s.lr_max / s.lr_min) / (double(s.total_steps) - warm);
  return s.lr_max * std::exp(-k * (step - warm));
}

void VariantConfig::validate() const {
  if (spp_budget_avg < 0) throw ConfigError("spp budget must be >= 0");
  if (h < 16 || w < 16 || h % 16 != 0 || w % 16 != 0)
    throw ConfigError("resolution must be a multiple of 16 in both axes");
  if (epochs < 1 || batch < 1) throw ConfigError("epochs and batch must be >= 1");
  if (cap < 1 || cap > reservoir::kMaxSamples)
    throw ConfigError("cap must be in [1,8]");
  if (mode == Variant::kA1GradApprox && spp_budget_avg < 1.0)
    throw ConfigError(
        "A1_grad_approx cannot run below 1 spp: the numerical gradient "
        "(ref - mean)/count is undefined at zero samples, so every pixel "
        "needs at least one");
  if (mode == Variant::kA2Uniform && spp_budget_avg < 1.0)
    throw ConfigError(
        "A2_uniform cannot run below 1 spp: uniform sampling has no way to "
        "spend a fractional per-pixel budget");
}

std::string VariantConfig::to_json_text() const {
  json j;
  j["variant"] = variant_name(mode);
  j["spp_budget_avg"] = spp_budget_avg;
  j["resolution"] = {h, w};
  j["epochs"] = epochs;
  j["batch"] = batch;
  j["cap"] = cap;
  j["lr_max"] = lr_max;
  j["lr_min"] = lr_min;
  j["warmup_frac"] = warmup_frac;
  j["seed"] = seed;
  j["flip_augment"] = flip_augment;
  j["crop_augment"] = crop_augment;
  j["permute_augment"] = permute_augment;
  j["staged_warmup_epochs"] = staged_warmup_epochs;
  j["ppo"] = {{"gamma", ppo.gamma},
              {"lambda_gae", ppo.lambda_gae},
              {"clip_eps", ppo.clip_eps},
              {"entropy_coef", ppo.entropy_coef},
              {"init_log_std", ppo.init_log_std},
              {"update_epochs", ppo.update_epochs},
              {"minibatch", ppo.minibatch},
              {"lr", ppo.lr},
              {"critic_lr", ppo.critic_lr}};
  return j.dump();
}

VariantConfig VariantConfig::from_json_text(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("run config JSON parse error");
  VariantConfig c;
  c.mode = variant_from_name(j.at("variant"));
  c.spp_budget_avg = j.value("spp_budget_avg", 2.0);
  if (j.contains("resolution")) {
    c.h = j.at("resolution").at(0);
    c.w = j.at("resolution").at(1);
  }
  c.epochs = j.value("epochs", c.epochs);
  c.batch = j.value("batch", c.batch);
  c.cap = j.value("cap", c.cap);
  c.lr_max = j.value("lr_max", c.lr_max);
  c.lr_min = j.value("lr_min", c.lr_min);
  c.warmup_frac = j.value("warmup_frac", c.warmup_frac);
  c.seed = j.value("seed", c.seed);
  c.flip_augment = j.value("flip_augment", c.flip_augment);
  c.crop_augment = j.value("crop_augment", c.crop_augment);
  c.permute_augment = j.value("permute_augment", c.permute_augment);
  c.staged_warmup_epochs = j.value("staged_warmup_epochs", 0);
  if (j.contains("ppo")) {
    const json& p = j.at("ppo");
    c.ppo.gamma = p.value("gamma", c.ppo.gamma);
    c.ppo.lambda_gae = p.value("lambda_gae", c.ppo.lambda_gae);
    c.ppo.clip_eps = p.value("clip_eps", c.ppo.clip_eps);
    c.ppo.entropy_coef = p.value("entropy_coef", c.ppo.entropy_coef);
    c.ppo.init_log_std = p.value("init_log_std", c.ppo.init_log_std);
    c.ppo.update_epochs = p.value("update_epochs", c.ppo.update_epochs);
    c.ppo.minibatch = p.value("minibatch", c.ppo.minibatch);
    c.ppo.lr = p.value("lr", c.ppo.lr);
    c.ppo.critic_lr = p.value("critic_lr", c.ppo.critic_lr);
  }
  c.validate();
  return c;
}

int TrainState::carried_channels() const {
  return config.mode == Variant::kB1NoEncoder ? 3 : reservoir::kLatentChannels;
}

int TrainState::state_channels() const { return carried_channels() + 7; }

TrainState TrainState::init(const VariantConfig& cfg) {
  cfg.validate();
  TrainState st;
  st.config = cfg;
  const nets::NetSize size =
      cfg.mode == Variant::kSmall ? nets::NetSize::kSmall : nets::NetSize::kNormal;
  const int state_ch = (cfg.mode == Variant::kB1NoEncoder ? 3 : 32) + 7;

  st.importance_cfg = nets::build_variant(nets::NetKind::kImportance, size,
                                          cfg.mode == Variant::kB1NoEncoder ? state_ch : -1);
  st.encoder_cfg = nets::build_variant(nets::NetKind::kEncoder, size);
  st.denoiser_cfg = nets::build_variant(nets::NetKind::kDenoiser, size,
                                        cfg.mode == Variant::kB1NoEncoder ? 27 : -1);
  st.critic_cfg = nets::build_variant(nets::NetKind::kCritic, nets::NetSize::kNormal, state_ch);

  if (cfg.mode != Variant::kB1NoEncoder)
    nets::init_params(st.encoder_cfg, st.model, "encoder",
                      KeyedRng::combine(cfg.seed, 0xE0C0DE));
  nets::init_params(st.denoiser_cfg, st.model, "denoiser",
                    KeyedRng::combine(cfg.seed, 0xDE01));
  policy::init_policy_params(st.importance_cfg, st.policy_store,
                             KeyedRng::combine(cfg.seed, 0x1A90),
                             cfg.ppo.init_log_std);
  nets::init_params(st.critic_cfg, st.critic_store, policy::kCriticPrefix,
                    KeyedRng::combine(cfg.seed, 0xC1C0));
  return st;
}

std::uint64_t TrainState::config_hash() const {
  Fnv1a h;
  h.update_str(variant_name(config.mode));
  h.update_str(importance_cfg.to_json_text());
  h.update_str(encoder_cfg.to_json_text());
  h.update_str(denoiser_cfg.to_json_text());
  h.update_str(critic_cfg.to_json_text());
  return h.digest();
}

namespace {

void merge_store(tg::ParamStore<float>& dst, const tg::ParamStore<float>& src) {
  for (const std::string& name : src.order) {
    const auto& e = src.get(name);
    dst.add(name, e.value);
    dst.add(name + "@m", e.m);
    dst.add(name + "@v", e.v);
  }
}

void split_store(const tg::ParamStore<float>& merged, tg::ParamStore<float>& dst) {
  for (const std::string& name : dst.order) {
    auto& e = dst.get(name);
    e.value = merged.get(name).value;
    e.m = merged.get(name + "@m").value;
    e.v = merged.get(name + "@v").value;
  }
}

}  // namespace

void save_train_state(const TrainState& st, const std::string& path) {
  tg::ParamStore<float> merged;
  merge_store(merged, st.model);
  merge_store(merged, st.policy_store);
  merge_store(merged, st.critic_store);
  json meta;
  meta["kind"] = "train_state";
  meta["config"] = json::parse(st.config.to_json_text());
  meta["nets"] = {{"importance", json::parse(st.importance_cfg.to_json_text())},
                  {"encoder", json::parse(st.encoder_cfg.to_json_text())},
                  {"denoiser", json::parse(st.denoiser_cfg.to_json_text())},
                  {"critic", json::parse(st.critic_cfg.to_json_text())}};
  meta["config_hash"] = hex64(st.config_hash());
  meta["epoch"] = st.epoch;
  meta["steps"] = {{"model", st.model_step},
                   {"policy", st.policy_step},
                   {"critic", st.critic_step},
                   {"sched", st.sched_step}};
  tg::save_checkpoint(path, merged, meta.dump());
}

TrainState load_train_state(const std::string& path) {
  tg::ParamStore<float> merged;
  const std::string meta_text = tg::load_checkpoint(path, merged);
  json meta = json::parse(meta_text);
  if (meta.value("kind", "") != "train_state")
    throw DataError("not a training checkpoint: " + path);
  TrainState st = TrainState::init(VariantConfig::from_json_text(meta.at("config").dump()));
  if (hex64(st.config_hash()) != meta.at("config_hash").get<std::string>())
    throw DataError("checkpoint config hash mismatch: " + path);
  split_store(merged, st.model);
  split_store(merged, st.policy_store);
  split_store(merged, st.critic_store);
  st.epoch = meta.at("epoch");
  st.model_step = meta.at("steps").at("model");
  st.policy_step = meta.at("steps").at("policy");
  st.critic_step = meta.at("steps").at("critic");
  st.sched_step = meta.at("steps").at("sched");
  return st;
}

FrameIO make_frame_io(const FrameRecord& rec) {
  FrameIO f;
  const int h = rec.reference.h, w = rec.reference.w;
  f.aux = tg::TensorF({1, 7, h, w});
  const std::size_t plane = std::size_t(h) * w;
  std::copy(rec.aux.normal.data.begin(), rec.aux.normal.data.end(), f.aux.data.begin());
  std::copy(rec.aux.albedo.data.begin(), rec.aux.albedo.data.end(),
            f.aux.data.begin() + 3 * plane);
  std::copy(rec.aux.depth.data.begin(), rec.aux.depth.data.end(),
            f.aux.data.begin() + 6 * plane);
  f.motion = tg::TensorF({1, 2, h, w});
  std::copy(rec.aux.motion.data.begin(), rec.aux.motion.data.end(), f.motion.data.begin());
  f.reference = rec.reference;
  f.bank = rec.bank;
  return f;
}

namespace {

// ---- clip-level augmentation (flips + crop-rescale, consistent across a
// clip so warping stays valid) ----

struct ClipAugment {
  bool hflip = false, vflip = false;
  int cy = 0, cx = 0, ch = 0, cw = 0;  // crop window in source pixels
};

ClipAugment draw_augment(const VariantConfig& cfg, std::uint64_t key, int h, int w) {
  ClipAugment a;
  a.ch = h;
  a.cw = w;
  KeyedRng rng{key, rng_domain::kAugment};
  if (cfg.flip_augment) {
    a.hflip = rng.next_double() < 0.5;
    a.vflip = rng.next_double() < 0.5;
  }
  if (cfg.crop_augment) {
    const double area = 0.75 + 0.25 * rng.next_double();
    const double side = std::sqrt(area);
    a.ch = std::clamp(int(std::lround(side * h)), 1, h);
    a.cw = std::clamp(int(std::lround(side * w)), 1, w);
    a.cy = int(rng.next_below(std::uint32_t(h - a.ch + 1)));
    a.cx = int(rng.next_below(std::uint32_t(w - a.cw + 1)));
  }
  return a;
}

// Bilinear crop-rescale of one plane into (h,w), then in-place flips.
void resample_plane(const float* src, int h, int w, const ClipAugment& a, float* dst) {
  const double sy_scale = double(a.ch) / h;
  const double sx_scale = double(a.cw) / w;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int oy = a.vflip ? h - 1 - y : y;
      const int ox = a.hflip ? w - 1 - x : x;
      const double sy = a.cy + (oy + 0.5) * sy_scale - 0.5;
      const double sx = a.cx + (ox + 0.5) * sx_scale - 0.5;
      const int y0 = std::clamp(int(std::floor(sy)), 0, h - 1);
      const int x0 = std::clamp(int(std::floor(sx)), 0, w - 1);
      const int y1 = std::min(y0 + 1, h - 1);
      const int x1 = std::min(x0 + 1, w - 1);
      const float fy = float(std::clamp(sy - y0, 0.0, 1.0));
      const float fx = float(std::clamp(sx - x0, 0.0, 1.0));
      const float v = (1 - fy) * ((1 - fx) * src[std::size_t(y0) * w + x0] +
                                  fx * src[std::size_t(y0) * w + x1]) +
                      fy * ((1 - fx) * src[std::size_t(y1) * w + x0] +
                            fx * src[std::size_t(y1) * w + x1]);
      dst[std::size_t(y) * w + x] = v;
    }
}

FrameIO augment_frame(const FrameRecord& rec, const ClipAugment& a) {
  FrameIO f = make_frame_io(rec);
  if (!a.hflip && !a.vflip && a.cy == 0 && a.cx == 0 && a.ch == f.reference.h &&
      a.cw == f.reference.w)
    return f;
  const int h = f.reference.h, w = f.reference.w;
  const std::size_t plane = std::size_t(h) * w;
  std::vector<float> tmp(plane);
  auto apply = [&](float* data, int channels) {
    for (int c = 0; c < channels; ++c) {
      resample_plane(data + std::size_t(c) * plane, h, w, a, tmp.data());
      std::copy(tmp.begin(), tmp.end(), data + std::size_t(c) * plane);
    }
  };
  apply(f.aux.data.data(), 7);
  apply(f.motion.data.data(), 2);
  apply(f.reference.data.data(), 3);
  apply(f.bank.data(), reservoir::kSampleChannels);

  // channel fixups: displacement rescaling and mirrored axes
  const float rx = float(double(w) / a.cw), ry = float(double(h) / a.ch);
  for (std::size_t p = 0; p < plane; ++p) {
    float& mx = f.motion.data[p];
    float& my = f.motion.data[plane + p];
    mx *= rx;
    my *= ry;
    if (a.hflip) mx = -mx;
    if (a.vflip) my = -my;
    if (a.hflip) f.aux.data[p] = -f.aux.data[p];                  // normal x
    if (a.vflip) f.aux.data[plane + p] = -f.aux.data[plane + p];  // normal y
  }
  return f;
}

tg::TensorF slice_batch(const tg::TensorF& t, int b) {
  tg::TensorF out({1, t.dims.c, t.dims.h, t.dims.w});
  const std::size_t per = std::size_t(out.numel());
  std::copy(t.data.begin() + std::size_t(b) * per, t.data.begin() + (b + 1) * per,
            out.data.begin());
  return out;
}

io::Image image_from_slice(const tg::TensorF& t, int b) {
  io::Image img(t.dims.h, t.dims.w, t.dims.c);
  const std::size_t per = img.data.size();
  std::copy(t.data.begin() + std::size_t(b) * per, t.data.begin() + (b + 1) * per,
            img.data.begin());
  return img;
}

budget::SampleCountMap uniform_counts(int h, int w, std::int64_t budget_total, int cap) {
  budget::SampleCountMap m;
  m.h = h;
  m.w = w;
  m.cap = cap;
  m.budget_total = budget_total;
  const std::int64_t pixels = std::int64_t(h) * w;
  const std::int64_t per = std::llround(double(budget_total) / double(pixels));
  const std::uint16_t y = std::uint16_t(std::clamp<std::int64_t>(per, 0, cap));
  m.counts.assign(std::size_t(pixels), y);
  m.clamp_shortfall = (per - y) * pixels;
  return m;
}

// A1 needs at least one sample everywhere; zeros are promoted by taking
// from the largest counts so the total stays put.
void enforce_min_one(budget::SampleCountMap& m) {
  std::vector<std::size_t> zeros;
  for (std::size_t p = 0; p < m.counts.size(); ++p)
    if (m.counts[p] == 0) zeros.push_back(p);
  if (zeros.empty()) return;
  std::vector<std::size_t> order(m.counts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return m.counts[a] != m.counts[b] ? m.counts[a] > m.counts[b] : a < b;
  });
  std::size_t donor = 0;
  for (std::size_t z : zeros) {
    while (donor < order.size() && m.counts[order[donor]] < 2) ++donor;
    if (donor >= order.size())
      throw ConfigError("A1_grad_approx: budget too small to give every pixel a sample");
    --m.counts[order[donor]];
    ++m.counts[z];
    if (m.counts[order[donor]] < 2) ++donor;
  }
}

reservoir::SampleBuffer samples_from_bank(const std::vector<float>& bank,
                                          const budget::SampleCountMap& counts, int h,
                                          int w) {
  reservoir::SampleBuffer buf(h, w);
  const std::size_t plane = std::size_t(h) * w;
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const int n = counts.at(i, j);
      buf.valid[std::size_t(i) * w + j] = std::uint8_t(n);
      for (int k = 0; k < n; ++k)
        for (int c = 0; c < 3; ++c)
          buf.rgb.at(0, 3 * k + c, i, j) = bank[std::size_t(3 * k + c) * plane +
                                                std::size_t(i) * w + j];
    }
  return buf;
}

}  // namespace

tg::TensorF a1_heatmap_grad(const tg::TensorF& sample_grads,
                            const reservoir::SampleBuffer& buffer,
                            const budget::SampleCountMap& counts,
                            const io::Image& reference, const tg::TensorF& heatmap,
                            std::int64_t budget_total) {
  const int h = buffer.h, w = buffer.w;
  const std::int64_t pixels = std::int64_t(h) * w;
  // d(loss)/d(count) through the numerical gradient of the pixel estimate
  std::vector<double> dcount(static_cast<std::size_t>(pixels));
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const int s = counts.at(i, j);
      scenegen::Vec3 dmean{0, 0, 0};
      scenegen::Vec3 mean{0, 0, 0};
      for (int k = 0; k < s; ++k) {
        dmean.x += sample_grads.at(0, 3 * k + 0, i, j);
        dmean.y += sample_grads.at(0, 3 * k + 1, i, j);
        dmean.z += sample_grads.at(0, 3 * k + 2, i, j);
        mean.x += buffer.rgb.at(0, 3 * k + 0, i, j);
        mean.y += buffer.rgb.at(0, 3 * k + 1, i, j);
        mean.z += buffer.rgb.at(0, 3 * k + 2, i, j);
      }
      const scenegen::Vec3 ref{reference.at(0, i, j), reference.at(1, i, j),
                               reference.at(2, i, j)};
      const scenegen::Vec3 dds = budget::grad_approx(ref, mean / double(std::max(s, 1)), s);
      dcount[std::size_t(i) * w + j] = dmean.dot(dds);
    }
  // through the allocation ratio y_i = B (x_i - min) / sum(x - min)
  double mn = heatmap.data[0];
  for (float v : heatmap.data) mn = std::min(mn, double(v));
  double sum = 0;
  for (float v : heatmap.data) sum += double(v) - mn;
  tg::TensorF gx(heatmap.dims);
  if (sum == 0.0) return gx;  // uniform fallback region: no ratio gradient
  double weighted = 0;
  for (std::int64_t p = 0; p < pixels; ++p)
    weighted += dcount[std::size_t(p)] * (double(heatmap.data[std::size_t(p)]) - mn);
  for (std::int64_t p = 0; p < pixels; ++p)
    gx.data[std::size_t(p)] =
        float(double(budget_total) / sum * (dcount[std::size_t(p)] - weighted / sum));
  return gx;
}

void step_frames(TrainState& st, const std::vector<const FrameIO*>& frames, int t,
                 std::vector<tg::TensorF>& carried, std::vector<FrameStep>& out,
                 std::uint64_t seed, bool deterministic, bool do_model_update, double lr,
                 bool permute) {
  const VariantConfig& cfg = st.config;
  const int B = int(frames.size());
  if (B == 0 || int(carried.size()) != B)
    throw ShapeError("step_frames: carried state count mismatch");
  const int h = cfg.h, w = cfg.w;
  const std::int64_t pixels = std::int64_t(h) * w;
  const std::int64_t budget_total = std::llround(cfg.spp_budget_avg * double(pixels));
  const int cc = st.carried_channels();
  const bool b1 = cfg.mode == Variant::kB1NoEncoder;
  out.assign(std::size_t(B), FrameStep{});

  // temporal feedback: warped carry, zeros at clip start and in B2 mode
  std::vector<tg::TensorF> warped(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) {
    if (t == 0 || cfg.mode == Variant::kB2NoTemporal ||
        carried[std::size_t(b)].numel() == 0)
      warped[std::size_t(b)] = tg::TensorF({1, cc, h, w});
    else
      warped[std::size_t(b)] = reservoir::warp(carried[std::size_t(b)],
                                               frames[std::size_t(b)]->motion);
  }

  tg::TensorF states({B, st.state_channels(), h, w});
  for (int b = 0; b < B; ++b) {
    const std::size_t base = std::size_t(b) * std::size_t(states.dims.c) * pixels;
    std::copy(warped[std::size_t(b)].data.begin(), warped[std::size_t(b)].data.end(),
              states.data.begin() + base);
    std::copy(frames[std::size_t(b)]->aux.data.begin(),
              frames[std::size_t(b)]->aux.data.end(),
              states.data.begin() + base + std::size_t(cc) * pixels);
  }

  // sampling heatmap: tanh-squashed policy action (A2 skips the network)
  const bool needs_net = cfg.mode != Variant::kA2Uniform;
  tg::TensorF mu;
  if (needs_net) {
    tg::GraphF g(&st.policy_store);
    mu = g.value(nets::forward(st.importance_cfg, g, g.input(states),
                               policy::kImportancePrefix));
  }
  const bool stochastic = !deterministic && cfg.uses_policy();
  const double log_std = needs_net
                             ? double(st.policy_store.get(policy::kLogStdParam).value.data[0])
                             : 0.0;
  const double sigma = std::exp(log_std);

  std::vector<tg::TensorF> u_clip(static_cast<std::size_t>(B));
  std::vector<budget::Heatmap> heat(static_cast<std::size_t>(B));
  std::vector<double> logprob(std::size_t(B), 0.0);
  for (int b = 0; b < B; ++b) {
    if (!needs_net) continue;
    u_clip[std::size_t(b)] = slice_batch(mu, b);
    tg::TensorF& u = u_clip[std::size_t(b)];
    if (stochastic) {
      KeyedRng rng{seed, rng_domain::kPolicy, std::uint64_t(b)};
      for (auto& v : u.data) v = float(double(v) + sigma * rng.next_normal());
    }
    double lp = 0;
    const tg::TensorF mu_b = slice_batch(mu, b);
    for (std::int64_t p = 0; p < u.numel(); ++p) {
      const double z = (double(u.data[std::size_t(p)]) - double(mu_b.data[std::size_t(p)])) / sigma;
      const double uu = double(u.data[std::size_t(p)]);
      const double sp = -2.0 * uu > 30 ? -2.0 * uu : std::log1p(std::exp(-2.0 * uu));
      lp += -0.5 * z * z - log_std - 0.91893853320467274 -
            2.0 * (0.6931471805599453 - uu - sp);
    }
    logprob[std::size_t(b)] = lp;
    heat[std::size_t(b)] = budget::Heatmap(h, w);
    for (std::int64_t p = 0; p < pixels; ++p)
      heat[std::size_t(b)].values[std::size_t(p)] = tg::tanh_bounded(u.data[std::size_t(p)]);
  }

  // allocation and bank sampling
  std::vector<reservoir::SampleBuffer> buffers(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) {
    budget::SampleCountMap counts;
    if (t == 0 || !needs_net)
      counts = uniform_counts(h, w, budget_total, cfg.cap);
    else
      counts = budget::allocate(heat[std::size_t(b)], budget_total, cfg.cap);
    if (cfg.mode == Variant::kA1GradApprox) enforce_min_one(counts);
    reservoir::SampleBuffer buf =
        samples_from_bank(frames[std::size_t(b)]->bank, counts, h, w);
    if (permute && !deterministic)
      buf = reservoir::permute_valid(buf, KeyedRng::combine(seed, std::uint64_t(b)));
    if (cfg.mode == Variant::kCAveraged) buf = reservoir::average_samples(buf);
    buffers[std::size_t(b)] = std::move(buf);
    out[std::size_t(b)].counts = std::move(counts);
  }

  // supervised graph: encode (unless B1), denoise, mixed loss
  tg::TensorF samples_stack({B, reservoir::kSampleChannels, h, w});
  tg::TensorF warped_stack({B, cc, h, w});
  tg::TensorF ref_stack({B, 3, h, w});
  for (int b = 0; b < B; ++b) {
    const std::size_t sbase = std::size_t(b) * std::size_t(reservoir::kSampleChannels) * pixels;
    std::copy(buffers[std::size_t(b)].rgb.data.begin(),
              buffers[std::size_t(b)].rgb.data.end(), samples_stack.data.begin() + sbase);
    const std::size_t wbase = std::size_t(b) * std::size_t(cc) * pixels;
    std::copy(warped[std::size_t(b)].data.begin(), warped[std::size_t(b)].data.end(),
              warped_stack.data.begin() + wbase);
    const std::size_t rbase = std::size_t(b) * 3 * std::size_t(pixels);
    std::copy(frames[std::size_t(b)]->reference.data.begin(),
              frames[std::size_t(b)]->reference.data.end(),
              ref_stack.data.begin() + rbase);
  }

  const bool a1_update = cfg.mode == Variant::kA1GradApprox && do_model_update && t > 0;
  tg::GraphF g(&st.model);
  const int samples_node = g.input(samples_stack, a1_update);
  const int warped_node = g.input(warped_stack);
  const int ref_node = g.input(ref_stack);
  int latent_node = -1;
  int den_in;
  if (b1) {
    den_in = g.concat(samples_node, warped_node);
  } else {
    const int enc_in = g.concat(warped_node, samples_node);
    latent_node = g.tanh(nets::forward(st.encoder_cfg, g, enc_in, "encoder"));
    den_in = latent_node;
  }
  const int den_out = nets::forward(st.denoiser_cfg, g, den_in, "denoiser");
  const quality::LossNodes loss_nodes = quality::mixed_loss_node(g, den_out, ref_node);
  const float batch_loss = g.value(loss_nodes.mixed).data[0];
  if (!std::isfinite(batch_loss))
    throw DivergenceError("step_frames: non-finite mixed loss");

  // per-clip metrics and rewards (double-precision evaluation)
  for (int b = 0; b < B; ++b) {
    FrameStep& fs = out[std::size_t(b)];
    fs.denoised = image_from_slice(g.value(den_out), b);
    fs.loss = quality::mixed_loss(fs.denoised, frames[std::size_t(b)]->reference);
    fs.reward = quality::reward(fs.loss.mixed);
    fs.psnr = quality::psnr(fs.denoised, frames[std::size_t(b)]->reference);
  }

  if (do_model_update) {
    st.model.zero_grads();
    g.backward(loss_nodes.mixed);
    tg::adam_step(st.model, lr, ++st.model_step);
  }

  if (a1_update) {
    // sampler update through the numerical-gradient chain
    tg::TensorF gx_stack({B, 1, h, w});
    for (int b = 0; b < B; ++b) {
      tg::TensorF hm({1, 1, h, w});
      std::copy(heat[std::size_t(b)].values.begin(), heat[std::size_t(b)].values.end(),
                hm.data.begin());
      const tg::TensorF gx = a1_heatmap_grad(
          slice_batch(g.grad(samples_node), b), buffers[std::size_t(b)],
          out[std::size_t(b)].counts, frames[std::size_t(b)]->reference, hm, budget_total);
      std::copy(gx.data.begin(), gx.data.end(),
                gx_stack.data.begin() + std::size_t(b) * std::size_t(pixels));
    }
    tg::GraphF gp(&st.policy_store);
    const int x_node = gp.tanh(nets::forward(st.importance_cfg, gp, gp.input(states),
                                             policy::kImportancePrefix));
    st.policy_store.zero_grads();
    gp.backward_adjoint(x_node, gx_stack);
    tg::adam_step(st.policy_store, cfg.ppo.lr, ++st.policy_step);
  }

  // carried state for the next frame + policy transitions
  for (int b = 0; b < B; ++b) {
    FrameStep& fs = out[std::size_t(b)];
    fs.warped_state = warped[std::size_t(b)];
    if (b1) {
      tg::TensorF c({1, 3, h, w});
      for (std::int64_t p = 0; p < c.numel(); ++p)
        c.data[std::size_t(p)] = std::clamp(fs.denoised.data[std::size_t(p)], 0.f, 1.f);
      carried[std::size_t(b)] = std::move(c);
    } else {
      carried[std::size_t(b)] = slice_batch(g.value(latent_node), b);
    }
    if (cfg.uses_policy() && !deterministic && t > 0) {
      policy::Transition tr;
      tr.state = slice_batch(states, b);
      tr.u = std::move(u_clip[std::size_t(b)]);
      tr.logprob = logprob[std::size_t(b)];
      tr.reward = fs.reward;
      tr.value = policy::critic_value(st.critic_cfg, st.critic_store, tr.state);
      tr.done = t == kClipLength - 1;
      fs.transition = std::move(tr);
      fs.has_transition = true;
    }
  }
}

namespace {

std::string format_csv(const std::vector<EpochMetrics>& rows) {
  std::ostringstream ss;
  ss << "epoch,split,psnr,loss,reward\n";
  char buf[160];
  for (const EpochMetrics& m : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%s,%.6f,%.6f,%.6f\n", m.epoch, m.split.c_str(),
                  m.psnr, m.loss, m.reward);
    ss << buf;
  }
  return ss.str();
}

EpochMetrics deterministic_eval_metrics(TrainState& st, const ClipDataset& ds, int epoch);

}  // namespace

TrainResult train(const VariantConfig& cfg_in, const std::vector<const ClipDataset*>& sets,
                  const ClipDataset* val_set, const std::string& out_dir,
                  const std::string& resume_checkpoint) {
  VariantConfig cfg = cfg_in;
  cfg.validate();
  if (sets.empty()) throw DataError("train: no datasets given");
  for (const ClipDataset* ds : sets)
    if (ds->meta.h != cfg.h || ds->meta.w != cfg.w)
      throw DataError("train: dataset resolution does not match the run config");

  fs::create_directories(out_dir);
  TrainState st = resume_checkpoint.empty() ? TrainState::init(cfg)
                                            : load_train_state(resume_checkpoint);
  if (!resume_checkpoint.empty() && variant_name(st.config.mode) != variant_name(cfg.mode))
    throw ConfigError("train: resume checkpoint variant differs from the run config");

  std::vector<std::pair<int, int>> clips;  // (dataset, clip)
  for (int d = 0; d < int(sets.size()); ++d)
    for (int c = 0; c < sets[std::size_t(d)]->clip_count(); ++c) clips.push_back({d, c});
  const int n_batches = int((clips.size() + std::size_t(cfg.batch) - 1) / std::size_t(cfg.batch));
  const std::int64_t steps_per_epoch = std::int64_t(n_batches) * kClipLength;
  const std::int64_t total_steps = steps_per_epoch * cfg.epochs;

  TrainResult result;
  std::vector<std::string> telemetry;
  telemetry.push_back(
      "update,mean_reward,policy_loss,value_loss,entropy,log_std,clip_fraction");

  for (int epoch = st.epoch; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(clips.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    KeyedRng shuffle{cfg.seed, 0xE90C4ull, std::uint64_t(epoch)};
    for (std::size_t k = order.size(); k > 1; --k)
      std::swap(order[k - 1], order[shuffle.next_below(std::uint32_t(k))]);

    std::vector<policy::Transition> pool;
    double sum_psnr = 0, sum_loss = 0, sum_reward = 0;
    std::int64_t frames_done = 0;

    for (int batch_start = 0; batch_start < int(clips.size()); batch_start += cfg.batch) {
      const int B = std::min<int>(cfg.batch, int(clips.size()) - batch_start);
      // prepare augmented clip frames
      std::vector<std::vector<FrameIO>> clip_frames(static_cast<std::size_t>(B));
      for (int b = 0; b < B; ++b) {
        const auto [d, c] = clips[order[std::size_t(batch_start + b)]];
        const ClipAugment aug =
            draw_augment(cfg,
                         KeyedRng::combine(cfg.seed, KeyedRng::mix(
                             (std::uint64_t(epoch) << 32) ^ std::uint64_t(d * 4096 + c))),
                         cfg.h, cfg.w);
        clip_frames[std::size_t(b)].reserve(kClipLength);
        for (int f = 0; f < kClipLength; ++f)
          clip_frames[std::size_t(b)].push_back(
              augment_frame(sets[std::size_t(d)]->frame(c, f), aug));
      }
      std::vector<tg::TensorF> carried(static_cast<std::size_t>(B));
      std::vector<std::vector<policy::Transition>> episodes(static_cast<std::size_t>(B));
      std::vector<FrameStep> steps;
      for (int t = 0; t < kClipLength; ++t) {
        const double lr = lr_schedule(
            {st.sched_step, total_steps, cfg.lr_max, cfg.lr_min, cfg.warmup_frac});
        std::vector<const FrameIO*> fptrs;
        for (int b = 0; b < B; ++b) fptrs.push_back(&clip_frames[std::size_t(b)][std::size_t(t)]);
        const std::uint64_t frame_seed = KeyedRng::combine(
            cfg.seed, KeyedRng::mix((std::uint64_t(epoch) << 40) ^
                                    (std::uint64_t(batch_start) << 16) ^ std::uint64_t(t)));
        step_frames(st, fptrs, t, carried, steps, frame_seed, /*deterministic=*/false,
                    /*do_model_update=*/true, lr, cfg.permute_augment);
        ++st.sched_step;
        for (int b = 0; b < B; ++b) {
          sum_psnr += steps[std::size_t(b)].psnr;
          sum_loss += steps[std::size_t(b)].loss.mixed;
          sum_reward += steps[std::size_t(b)].reward;
          ++frames_done;
          if (steps[std::size_t(b)].has_transition)
            episodes[std::size_t(b)].push_back(std::move(steps[std::size_t(b)].transition));
        }
      }
      for (int b = 0; b < B; ++b) {
        policy::gae(episodes[std::size_t(b)], cfg.ppo.gamma, cfg.ppo.lambda_gae);
        for (auto& tr : episodes[std::size_t(b)]) pool.push_back(std::move(tr));
      }
    }

    if (cfg.uses_policy() && epoch >= cfg.staged_warmup_epochs && !pool.empty()) {
      std::vector<policy::Transition*> batch;
      for (auto& tr : pool) batch.push_back(&tr);
      policy::normalize_advantages(batch);
      const policy::PpoStats stats = policy::ppo_update(
          st.importance_cfg, st.policy_store, st.critic_cfg, st.critic_store, batch,
          cfg.ppo, st.policy_step, st.critic_step,
          KeyedRng::combine(cfg.seed, KeyedRng::mix(0xA77000ull + std::uint64_t(epoch))));
      char buf[256];
      std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f", epoch,
                    stats.mean_reward, stats.policy_loss, stats.value_loss, stats.entropy,
                    stats.log_std, stats.clip_fraction);
      telemetry.push_back(buf);
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.split = "train";
    m.psnr = sum_psnr / double(frames_done);
    m.loss = sum_loss / double(frames_done);
    m.reward = sum_reward / double(frames_done);
    result.metrics.push_back(m);
    if (val_set) result.metrics.push_back(deterministic_eval_metrics(st, *val_set, epoch));

    st.epoch = epoch + 1;
    char name[64];
    std::snprintf(name, sizeof(name), "epoch_%03d.ckpt", epoch);
    save_train_state(st, (fs::path(out_dir) / name).string());
    tg::atomic_write_file((fs::path(out_dir) / "metrics.csv").string(),
                          format_csv(result.metrics));
    std::ostringstream tele;
    for (const std::string& line : telemetry) tele << line << "\n";
    tg::atomic_write_file((fs::path(out_dir) / "policy_telemetry.csv").string(), tele.str());
  }

  result.checkpoint_path = (fs::path(out_dir) / "final.ckpt").string();
  save_train_state(st, result.checkpoint_path);
  return result;
}

namespace {

EpochMetrics deterministic_eval_metrics(TrainState& st, const ClipDataset& ds, int epoch) {
  EpochMetrics m;
  m.epoch = epoch;
  m.split = "val";
  std::int64_t n = 0;
  for (int clip = 0; clip < ds.clip_count(); ++clip) {
    std::vector<tg::TensorF> carried(1);
    std::vector<FrameStep> steps;
    std::vector<FrameIO> frames;
    frames.reserve(kClipLength);
    for (int t = 0; t < kClipLength; ++t) frames.push_back(make_frame_io(ds.frame(clip, t)));
    for (int t = 0; t < kClipLength; ++t) {
      std::vector<const FrameIO*> fptrs{&frames[std::size_t(t)]};
      step_frames(st, fptrs, t, carried, steps, 0, /*deterministic=*/true,
                  /*do_model_update=*/false, 1.0, /*permute=*/false);
      m.psnr += steps[0].psnr;
      m.loss += steps[0].loss.mixed;
      m.reward += steps[0].reward;
      ++n;
    }
  }
  m.psnr /= double(n);
  m.loss /= double(n);
  m.reward /= double(n);
  return m;
}

}  // namespace

std::vector<EvalRow> evaluate(TrainState& st, const ClipDataset& ds,
                              const std::vector<double>& budgets,
                              const std::string& dump_dir) {
  if (ds.meta.h != st.config.h || ds.meta.w != st.config.w)
    throw DataError("evaluate: dataset resolution does not match the checkpoint");
  std::vector<EvalRow> rows;
  for (double budget : budgets) {
    if (budget < 0) throw ConfigError("evaluate: negative budget");
    if ((st.config.mode == Variant::kA1GradApprox ||
         st.config.mode == Variant::kA2Uniform) &&
        budget < 1.0)
      throw ConfigError(variant_name(st.config.mode) +
                        " cannot evaluate below 1 spp (per-pixel counts would hit zero)");
    TrainState eval_st = st;  // budget is an eval-time knob
    eval_st.config.spp_budget_avg = budget;
    EvalRow row;
    row.budget = budget;
    for (int clip = 0; clip < ds.clip_count(); ++clip) {
      std::vector<tg::TensorF> carried(1);
      std::vector<FrameStep> steps;
      std::vector<FrameIO> frames;
      for (int t = 0; t < kClipLength; ++t) frames.push_back(make_frame_io(ds.frame(clip, t)));
      for (int t = 0; t < kClipLength; ++t) {
        std::vector<const FrameIO*> fptrs{&frames[std::size_t(t)]};
        step_frames(eval_st, fptrs, t, carried, steps, 0, /*deterministic=*/true,
                    /*do_model_update=*/false, 1.0, /*permute=*/false);
        row.frame_psnr.push_back(steps[0].psnr);
        if (!dump_dir.empty()) {
          fs::create_directories(dump_dir);
          char buf[96];
          std::snprintf(buf, sizeof(buf), "b%.3f_c%02d_f%02d", budget, clip, t);
          io::write_pfm((fs::path(dump_dir) / (std::string(buf) + ".pfm")).string(),
                        steps[0].denoised);
          io::write_png8((fs::path(dump_dir) / (std::string(buf) + ".png")).string(),
                         steps[0].denoised);
          io::write_png16((fs::path(dump_dir) / (std::string(buf) + "_counts.png")).string(),
                          steps[0].counts.counts, ds.meta.h, ds.meta.w);
        }
      }
    }
    for (double p : row.frame_psnr) row.mean_psnr += p;
    row.mean_psnr /= double(row.frame_psnr.size());
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace rlpt::pipeline
