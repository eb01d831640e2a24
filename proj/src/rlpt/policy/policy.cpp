// Copyright 2026 the rlpt authors
// SPDX-License-Identifier: Apache-2.0

#include "rlpt/policy/policy.hpp"

#include <algorithm>
#include <cmath>

#include "rlpt/rng.hpp"

namespace rlpt::policy {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;
constexpr double kLog2 = 0.6931471805599453;

// log(1 - tanh(u)^2), evaluated stably as 2(log 2 - u - softplus(-2u)).
double tanh_log_jacobian(double u) {
  const double sp = -2.0 * u > 30 ? -2.0 * u : std::log1p(std::exp(-2.0 * u));
  return 2.0 * (kLog2 - u - sp);
}

}  // namespace

void init_policy_params(const nets::NetConfig& cfg, tg::ParamStore<float>& store,
                        std::uint64_t seed, double init_log_std) {
  nets::init_params(cfg, store, kImportancePrefix, seed);
  store.add(kLogStdParam, tg::TensorF::full({1, 1, 1, 1}, float(init_log_std)));
}

namespace {

tg::TensorF policy_mean(const nets::NetConfig& cfg, tg::ParamStore<float>& store,
                        const tg::TensorF& state) {
  tg::GraphF g(&store);
  const int s = g.input(state);
  const int mu = nets::forward(cfg, g, s, kImportancePrefix);
  return g.value(mu);
}

double joint_logprob(const tg::TensorF& u, const tg::TensorF& mu, double log_std) {
  const double sigma = std::exp(log_std);
  double lp = 0;
  for (std::int64_t i = 0; i < u.numel(); ++i) {
    const double z = (double(u.data[i]) - double(mu.data[i])) / sigma;
    lp += -0.5 * z * z - log_std - 0.5 * kLog2Pi - tanh_log_jacobian(double(u.data[i]));
  }
  return lp;
}

}  // namespace

ActionSample sample_action(const nets::NetConfig& cfg, tg::ParamStore<float>& store,
                           const tg::TensorF& state, std::uint64_t seed,
                           bool deterministic) {
  const tg::TensorF mu = policy_mean(cfg, store, state);
  const double log_std = double(store.get(kLogStdParam).value.data[0]);
  const double sigma = std::exp(log_std);

  ActionSample out;
  out.u = mu;
  if (!deterministic) {
    KeyedRng rng{seed, rng_domain::kPolicy};
    for (auto& v : out.u.data) v = float(double(v) + sigma * rng.next_normal());
  }
  out.action = out.u;
  for (auto& v : out.action.data) v = tg::tanh_bounded(v);
  out.logprob = joint_logprob(out.u, mu, log_std);
  return out;
}

double action_logprob(const nets::NetConfig& cfg, tg::ParamStore<float>& store,
                      const tg::TensorF& state, const tg::TensorF& u) {
  return joint_logprob(u, policy_mean(cfg, store, state),
                       double(store.get(kLogStdParam).value.data[0]));
}

void gae(std::vector<Transition>& episode, double gamma, double lambda) {
  double next_adv = 0;
  double next_value = 0;  // terminal bootstrap
  for (int t = int(episode.size()) - 1; t >= 0; --t) {
    Transition& tr = episode[std::size_t(t)];
    const double not_done = tr.done ? 0.0 : 1.0;
    const double delta = tr.reward + gamma * next_value * not_done - tr.value;
    next_adv = delta + gamma * lambda * not_done * next_adv;
    tr.advantage = next_adv;
    tr.ret = tr.advantage + tr.value;
    next_value = tr.value;
  }
}

void normalize_advantages(std::vector<Transition*>& batch) {
  if (batch.empty()) return;
  double mean = 0;
  for (const Transition* t : batch) mean += t->advantage;
  mean /= double(batch.size());
  double var = 0;
  for (const Transition* t : batch) var += (t->advantage - mean) * (t->advantage - mean);
  var /= double(batch.size());
  const double inv = 1.0 / std::sqrt(var + 1e-8);
  for (Transition* t : batch) t->advantage = (t->advantage - mean) * inv;
}

namespace {

// Stacks per-transition (1,C,H,W) tensors into a (B,C,H,W) batch.
tg::TensorF stack(const std::vector<Transition*>& batch, bool states) {
  const tg::Dims4 d0 = states ? batch[0]->state.dims : batch[0]->u.dims;
  tg::TensorF out({int(batch.size()), d0.c, d0.h, d0.w});
  const std::size_t per = std::size_t(d0.numel());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& src = states ? batch[b]->state : batch[b]->u;
    if (!(src.dims == d0)) throw ShapeError("ppo_update: mixed state shapes in batch");
    std::copy(src.data.begin(), src.data.end(), out.data.begin() + b * per);
  }
  return out;
}

// Joint log-density node per batch element, built from the same float ops
// for the rollout reference and the update, so unchanged parameters give a
// ratio of exactly 1. Each batch element's value is independent of the
// batch composition.
int build_logprob_node(tg::GraphF& g, const nets::NetConfig& cfg,
                       const std::vector<Transition*>& chunk, int states, int u_node) {
  const int B = int(chunk.size());
  const std::int64_t pixels = chunk[0]->u.numel();
  const int mu = nets::forward(cfg, g, states, kImportancePrefix);
  const int ls = g.param(kLogStdParam);
  const int diff = g.sub(u_node, mu);
  const int sumsq = g.sum_spatial(g.mul(diff, diff));
  const int inv_var = g.exp(g.affine(ls, -2.f, 0.f));
  const int quad = g.affine(g.mul(g.broadcast(inv_var, {B, 1, 1, 1}), sumsq), -0.5f, 0.f);
  const int lin = g.broadcast(
      g.affine(ls, -float(pixels), -0.5f * float(pixels) * float(kLog2Pi)), {B, 1, 1, 1});
  tg::TensorF corr({B, 1, 1, 1});
  for (int b = 0; b < B; ++b) {
    double c = 0;
    for (const float uv : chunk[std::size_t(b)]->u.data) c -= tanh_log_jacobian(uv);
    corr.data[std::size_t(b)] = float(c);
  }
  return g.add(g.add(quad, lin), g.input(corr));
}

}  // namespace

PpoStats ppo_update(const nets::NetConfig& policy_cfg, tg::ParamStore<float>& policy_store,
                    const nets::NetConfig& critic_cfg, tg::ParamStore<float>& critic_store,
                    std::vector<Transition*>& batch, const PolicyConfig& cfg,
                    std::int64_t& policy_step, std::int64_t& critic_step,
                    std::uint64_t seed) {
  if (batch.empty()) throw ConfigError("ppo_update: empty transition batch");
  PpoStats stats;
  for (const Transition* t : batch) stats.mean_reward += t->reward;
  stats.mean_reward /= double(batch.size());

  // Reference log-densities under the pre-update parameters, evaluated
  // through the same tape path as the update; the first epoch therefore
  // starts from ratios of exactly 1.
  std::vector<float> logprob_old(batch.size());
  {
    const std::size_t mb = std::size_t(std::max(1, cfg.minibatch));
    for (std::size_t start = 0; start < batch.size(); start += mb) {
      std::vector<Transition*> chunk(batch.begin() + std::ptrdiff_t(start),
                                     batch.begin() +
                                         std::ptrdiff_t(std::min(start + mb, batch.size())));
      tg::GraphF g(&policy_store);
      const int states = g.input(stack(chunk, true));
      const int u_node = g.input(stack(chunk, false));
      const int lp = build_logprob_node(g, policy_cfg, chunk, states, u_node);
      for (std::size_t b = 0; b < chunk.size(); ++b)
        logprob_old[start + b] = g.value(lp).data[b];
    }
  }

  const std::int64_t pixels = batch[0]->u.numel();
  const double entropy_per_pixel_const = 0.5 * (kLog2Pi + 1.0);

  std::vector<std::size_t> order(batch.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  KeyedRng shuffle_rng{seed, rng_domain::kPolicy, 0x50504full};

  bool first_minibatch = true;
  int minibatches = 0;
  for (int epoch = 0; epoch < cfg.update_epochs; ++epoch) {
    for (std::size_t k = order.size(); k > 1; --k)
      std::swap(order[k - 1], order[shuffle_rng.next_below(std::uint32_t(k))]);
    const std::size_t mb = std::size_t(std::max(1, cfg.minibatch));
    for (std::size_t start = 0; start < order.size(); start += mb) {
      std::vector<Transition*> chunk;
      std::vector<float> lp_old;
      for (std::size_t i = start; i < std::min(start + mb, order.size()); ++i) {
        chunk.push_back(batch[order[i]]);
        lp_old.push_back(logprob_old[order[i]]);
      }
      const int B = int(chunk.size());

      tg::GraphF g(&policy_store);
      const int states = g.input(stack(chunk, true));
      const int u_node = g.input(stack(chunk, false));
      const int ls = g.param(kLogStdParam);
      const int lp_new = build_logprob_node(g, policy_cfg, chunk, states, u_node);

      tg::TensorF lp_old_t({B, 1, 1, 1});
      tg::TensorF adv_t({B, 1, 1, 1});
      for (int b = 0; b < B; ++b) {
        lp_old_t.data[std::size_t(b)] = float(lp_old[std::size_t(b)]);
        adv_t.data[std::size_t(b)] = float(chunk[std::size_t(b)]->advantage);
      }
      const int ratio = g.exp(g.sub(lp_new, g.input(lp_old_t)));
      const int adv = g.input(adv_t);
      const int surr = g.minimum(
          g.mul(ratio, adv),
          g.mul(g.clamp(ratio, float(1.0 - cfg.clip_eps), float(1.0 + cfg.clip_eps)), adv));
      // maximize surrogate + entropy bonus
      const int neg_surr = g.affine(g.mean_all(surr), -1.f, 0.f);
      const int ent = g.affine(ls, float(pixels), float(pixels) * float(entropy_per_pixel_const));
      const int loss = g.add(neg_surr, g.affine(ent, -float(cfg.entropy_coef), 0.f));

      const float loss_v = g.value(loss).data[0];
      if (!std::isfinite(loss_v))
        throw DivergenceError("ppo_update: non-finite policy objective");

      if (first_minibatch) {
        for (int b = 0; b < B; ++b)
          stats.first_epoch_max_ratio_dev =
              std::max(stats.first_epoch_max_ratio_dev,
                       std::abs(double(g.value(ratio).data[std::size_t(b)]) - 1.0));
        first_minibatch = false;
      }
      for (int b = 0; b < B; ++b) {
        const double r = double(g.value(ratio).data[std::size_t(b)]);
        if (std::abs(r - 1.0) > cfg.clip_eps) stats.clip_fraction += 1.0;
      }
      stats.policy_loss += double(loss_v);

      policy_store.zero_grads();
      g.backward(loss);
      adam_step(policy_store, cfg.lr, ++policy_step);

      // critic regression toward the GAE return targets
      tg::GraphF gc(&critic_store);
      const int cstates = gc.input(stack(chunk, true));
      const int v = nets::critic_forward(critic_cfg, gc, cstates, kCriticPrefix);
      tg::TensorF ret_t({B, 1, 1, 1});
      for (int b = 0; b < B; ++b) ret_t.data[std::size_t(b)] = float(chunk[std::size_t(b)]->ret);
      const int verr = gc.sub(v, gc.input(ret_t));
      const int vloss = gc.mean_all(gc.mul(verr, verr));
      const float vloss_v = gc.value(vloss).data[0];
      if (!std::isfinite(vloss_v))
        throw DivergenceError("ppo_update: non-finite value objective");
      stats.value_loss += double(vloss_v);
      critic_store.zero_grads();
      gc.backward(vloss);
      adam_step(critic_store, cfg.critic_lr, ++critic_step);

      ++minibatches;
    }
  }
  stats.policy_loss /= std::max(1, minibatches);
  stats.value_loss /= std::max(1, minibatches);
  stats.clip_fraction /= double(batch.size() * std::size_t(std::max(1, cfg.update_epochs)));
  stats.log_std = double(policy_store.get(kLogStdParam).value.data[0]);
  stats.entropy = double(pixels) * (stats.log_std + entropy_per_pixel_const);
  return stats;
}

double critic_value(const nets::NetConfig& cfg, tg::ParamStore<float>& store,
                    const tg::TensorF& state) {
  tg::GraphF g(&store);
  const int s = g.input(state);
  const int v = nets::critic_forward(cfg, g, s, kCriticPrefix);
  return double(g.value(v).data[0]);
}

}  // namespace rlpt::policy
