// Copyright 2026 the rlpt authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rlpt/nets/nets.hpp"
#include "rlpt/tensorgrad/adam.hpp"

namespace rlpt::policy {

inline constexpr const char* kLogStdParam = "policy.log_std";
inline constexpr const char* kImportancePrefix = "importance";
inline constexpr const char* kCriticPrefix = "critic";

struct PolicyConfig {
  double gamma = 0.99;
  double lambda_gae = 0.95;
  double clip_eps = 0.2;
  double entropy_coef = 1e-3;
  double init_log_std = -1.0;
  int update_epochs = 1;
  int minibatch = 64;
  double lr = 3e-4;
  double critic_lr = 1e-3;
};

// One environment step from the sampler's point of view. The action is a
// per-pixel value in [-1,1]; `u` is its pre-squash Gaussian draw and
// `logprob` the joint (pixel-summed) density with the tanh correction.
struct Transition {
  tg::TensorF state;  // (1, C, H, W)
  tg::TensorF u;      // (1, 1, H, W)
  double logprob = 0;
  double reward = 0;
  double value = 0;
  bool done = false;
  // filled by gae()
  double advantage = 0;
  double ret = 0;
};

struct ActionSample {
  tg::TensorF action;  // tanh(u), strictly inside (-1,1)
  tg::TensorF u;
  double logprob = 0;
};

// Registers importance-net parameters plus the global log_std scalar.
void init_policy_params(const nets::NetConfig& cfg, tg::ParamStore<float>& store,
                        std::uint64_t seed, double init_log_std);

// u ~ Normal(mu(state), exp(log_std) I) per pixel, action = tanh(u).
// With `deterministic`, u = mu and the logprob is evaluated at that point.
ActionSample sample_action(const nets::NetConfig& cfg, tg::ParamStore<float>& store,
                           const tg::TensorF& state, std::uint64_t seed,
                           bool deterministic);

// Joint log-density of a stored pre-squash action under the current policy.
double action_logprob(const nets::NetConfig& cfg, tg::ParamStore<float>& store,
                      const tg::TensorF& state, const tg::TensorF& u);

// Generalized advantage estimation over one episode (terminal bootstrap 0).
// Fills advantage and ret (return target) in place.
void gae(std::vector<Transition>& episode, double gamma, double lambda);

// Normalizes advantages to zero mean / unit variance across the batch.
void normalize_advantages(std::vector<Transition*>& batch);

struct PpoStats {
  double mean_reward = 0;
  double policy_loss = 0;
  double value_loss = 0;
  double entropy = 0;
  double clip_fraction = 0;
  double log_std = 0;
  double first_epoch_max_ratio_dev = 0;  // max |ratio-1| before any update
};

// Clipped-surrogate PPO over a batch of transitions (advantages already
// normalized by the caller). Updates the policy store (importance net +
// log_std) and the critic store. Aborts with DivergenceError on NaN.
PpoStats ppo_update(const nets::NetConfig& policy_cfg, tg::ParamStore<float>& policy_store,
                    const nets::NetConfig& critic_cfg, tg::ParamStore<float>& critic_store,
                    std::vector<Transition*>& batch, const PolicyConfig& cfg,
                    std::int64_t& policy_step, std::int64_t& critic_step,
                    std::uint64_t seed);

double critic_value(const nets::NetConfig& cfg, tg::ParamStore<float>& store,
                    const tg::TensorF& state);

}  // namespace rlpt::policy
