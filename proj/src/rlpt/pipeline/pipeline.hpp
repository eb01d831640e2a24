// Copyright 2026 the rlpt authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rlpt/budget/budget.hpp"
#include "rlpt/pipeline/dataset.hpp"
#include "rlpt/policy/policy.hpp"
#include "rlpt/quality/quality.hpp"

namespace rlpt::pipeline {

enum class Variant {
  kOurs,
  kA1GradApprox,
  kA2Uniform,
  kB1NoEncoder,
  kB2NoTemporal,
  kCAveraged,
  kSmall,
};

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

// Learning-rate schedule: linear warmup from lr_min to lr_max over the
// first warmup fraction of steps, then exponential decay back to lr_min.
struct ScheduleState {
  std::int64_t step = 0;
  std::int64_t total_steps = 1;
  double lr_max = 1e-3;
  double lr_min = 1e-8;
  double warmup_frac = 0.15;
};

double lr_schedule(const ScheduleState& s);

struct VariantConfig {
  Variant mode = Variant::kOurs;
  double spp_budget_avg = 2.0;
  int h = 64, w = 64;
  int epochs = 30;
  int batch = 4;  // clips stepped in lockstep
  int cap = reservoir::kMaxSamples;
  double lr_max = 1e-3;
  double lr_min = 1e-8;
  double warmup_frac = 0.15;
  std::uint64_t seed = 1;
  bool flip_augment = true;
  bool crop_augment = true;
  bool permute_augment = true;
  int staged_warmup_epochs = 0;  // epochs of supervised-only training first
  policy::PolicyConfig ppo;

  bool uses_policy() const {
    return mode != Variant::kA2Uniform && mode != Variant::kA1GradApprox;
  }
  // A1's numerical gradient needs >= 1 spp everywhere; uniform sampling
  // cannot express budgets below one sample per pixel either.
  void validate() const;

  std::string to_json_text() const;
  static VariantConfig from_json_text(const std::string& text);
};

// All trainable state of a run: the supervised networks, the sampling
// policy, and the critic, with their Adam step counters.
struct TrainState {
  VariantConfig config;
  nets::NetConfig importance_cfg, encoder_cfg, denoiser_cfg, critic_cfg;
  tg::ParamStore<float> model;         // encoder.* and denoiser.*
  tg::ParamStore<float> policy_store;  // importance.* and policy.log_std
  tg::ParamStore<float> critic_store;  // critic.*
  std::int64_t model_step = 0, policy_step = 0, critic_step = 0;
  std::int64_t sched_step = 0;
  int epoch = 0;

  static TrainState init(const VariantConfig& cfg);
  std::uint64_t config_hash() const;
  int state_channels() const;    // policy/critic input channels
  int carried_channels() const;  // temporal feedback channels
};

void save_train_state(const TrainState& st, const std::string& path);
TrainState load_train_state(const std::string& path);

// One prepared (possibly augmented) clip frame.
struct FrameIO {
  tg::TensorF aux;     // (1,7,H,W): normals, albedo, depth
  tg::TensorF motion;  // (1,2,H,W)
  io::Image reference;
  std::vector<float> bank;  // (24,H,W) planar
};

FrameIO make_frame_io(const FrameRecord& rec);

struct FrameStep {
  policy::Transition transition;
  bool has_transition = false;
  io::Image denoised;
  quality::LossValue loss;
  double reward = 0;
  double psnr = 0;
  budget::SampleCountMap counts;
  tg::TensorF warped_state;  // temporal feedback actually fed to the nets
};

// Steps aligned frames of several clips through Fig.-1 dataflow: warp,
// importance heatmap, allocation, bank sampling, packing, encoding,
// denoising, loss/reward. When `do_model_update` is set, one Adam step is
// applied to the supervised networks (and, in A1 mode, to the sampler via
// the numerical-gradient chain). `carried` holds each clip's temporal
// state and is replaced by the new one.
void step_frames(TrainState& st, const std::vector<const FrameIO*>& frames, int t,
                 std::vector<tg::TensorF>& carried, std::vector<FrameStep>& out,
                 std::uint64_t seed, bool deterministic, bool do_model_update, double lr,
                 bool permute);

struct EpochMetrics {
  int epoch = 0;
  std::string split;
  double psnr = 0;
  double loss = 0;
  double reward = 0;
};

struct TrainResult {
  std::vector<EpochMetrics> metrics;
  std::string checkpoint_path;  // final checkpoint
};

// Closed-loop training over the given clip datasets. Writes per-epoch
// checkpoints, metrics.csv and policy_telemetry.csv into out_dir.
TrainResult train(const VariantConfig& cfg, const std::vector<const ClipDataset*>& sets,
                  const ClipDataset* val_set, const std::string& out_dir,
                  const std::string& resume_checkpoint = "");

struct EvalRow {
  double budget = 0;
  double mean_psnr = 0;
  std::vector<double> frame_psnr;
};

// Deterministic evaluation at each requested average-spp budget.
// `dump_dir`, when nonempty, receives denoised PFM/PNG frames and
// sample-count heatmaps.
std::vector<EvalRow> evaluate(TrainState& st, const ClipDataset& ds,
                              const std::vector<double>& budgets,
                              const std::string& dump_dir = "");

// The Eq.-style numerical-gradient chain used by the A1 variant, exposed
// for direct testing: converts per-sample loss gradients into a heatmap
// gradient through (ref - mean)/count and the allocation ratio.
tg::TensorF a1_heatmap_grad(const tg::TensorF& sample_grads,
                            const reservoir::SampleBuffer& buffer,
                            const budget::SampleCountMap& counts,
                            const io::Image& reference, const tg::TensorF& heatmap,
                            std::int64_t budget_total);

}  // namespace rlpt::pipeline
