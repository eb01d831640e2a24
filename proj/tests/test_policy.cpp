// Copyright 2026 the rlpt authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "oracle_utils.hpp"
#include "rlpt/policy/policy.hpp"

using namespace rlpt;
using namespace rlpt::policy;

namespace {

nets::NetConfig tiny_policy_cfg(int in_channels) {
  nets::NetConfig cfg;
  cfg.kind = nets::NetKind::kImportance;
  cfg.size = nets::NetSize::kSmall;
  cfg.in_channels = in_channels;
  cfg.out_channels = 1;
  cfg.unet = false;
  cfg.conv_kernel = 3;
  cfg.channels = {4};
  return cfg;
}

nets::NetConfig tiny_critic_cfg(int in_channels) {
  nets::NetConfig cfg = nets::build_variant(nets::NetKind::kCritic, nets::NetSize::kNormal,
                                            in_channels);
  return cfg;
}

// two-pixel state whose first channel distinguishes the pixels
tg::TensorF bandit_state() {
  tg::TensorF s({1, 4, 1, 2});
  s.at(0, 0, 0, 0) = 1.f;
  s.at(0, 0, 0, 1) = -1.f;
  return s;
}

}  // namespace

TEST_CASE("sampled actions stay inside (-1,1) and are seed-deterministic") {
  const nets::NetConfig cfg = tiny_policy_cfg(4);
  tg::ParamStore<float> store;
  init_policy_params(cfg, store, 5, -1.0);
  const tg::TensorF state = bandit_state();
  const ActionSample a = sample_action(cfg, store, state, 42, false);
  const ActionSample b = sample_action(cfg, store, state, 42, false);
  const ActionSample c = sample_action(cfg, store, state, 43, false);
  CHECK(a.action.data == b.action.data);
  CHECK(a.logprob == b.logprob);
  CHECK(a.action.data != c.action.data);
  for (float v : a.action.data) {
    CHECK(v > -1.f);
    CHECK(v < 1.f);
  }
  CHECK(std::isfinite(a.logprob));
}

TEST_CASE("deterministic flag returns tanh of the mean exactly") {
  const nets::NetConfig cfg = tiny_policy_cfg(4);
  tg::ParamStore<float> store;
  init_policy_params(cfg, store, 6, -1.0);
  const ActionSample det = sample_action(cfg, store, bandit_state(), 1, true);
  const ActionSample det2 = sample_action(cfg, store, bandit_state(), 999, true);
  CHECK(det.action.data == det2.action.data);  // seed must not matter
  for (std::size_t i = 0; i < det.action.data.size(); ++i)
    CHECK(det.action.data[i] == tg::tanh_bounded(det.u.data[i]));
}

TEST_CASE("tanh-gaussian density integrates to one on a single pixel") {
  const nets::NetConfig cfg = tiny_policy_cfg(2);
  tg::ParamStore<float> store;
  init_policy_params(cfg, store, 7, -1.0);
  tg::TensorF state({1, 2, 1, 1});
  state.at(0, 0, 0, 0) = 0.8f;
  state.at(0, 1, 0, 0) = -0.3f;

  const int n = 20000;
  double integral = 0;
  for (int k = 0; k <= n; ++k) {
    const double a = -1.0 + 2.0 * double(k) / n;
    const double ac = std::clamp(a, -1.0 + 1e-12, 1.0 - 1e-12);
    tg::TensorF u({1, 1, 1, 1});
    u.data[0] = float(std::atanh(ac));
    const double p = std::exp(action_logprob(cfg, store, state, u));
    integral += (k == 0 || k == n ? 0.5 : 1.0) * p;
  }
  integral *= 2.0 / n;
  CHECK(std::abs(integral - 1.0) < 1e-3);
}

TEST_CASE("gae hand-checked recursions") {
  {
    std::vector<Transition> ep(1);
    ep[0].reward = 0.7;
    ep[0].value = 0;
    ep[0].done = true;
    gae(ep, 1.0, 1.0);
    CHECK(ep[0].advantage == doctest::Approx(0.7));
  }
  {
    std::vector<Transition> ep(2);
    ep[0].reward = 1;
    ep[1].reward = 1;
    ep[1].done = true;
    gae(ep, 0.99, 0.95);
    CHECK(ep[1].advantage == doctest::Approx(1.0));
    CHECK(ep[0].advantage == doctest::Approx(1.0 + 0.99 * 0.95 * 1.0));
    CHECK(ep[0].ret == doctest::Approx(ep[0].advantage));
  }
  {
    std::vector<Transition> ep(5);
    for (auto& t : ep) {
      t.reward = 0;
      t.value = 0;
    }
    ep.back().done = true;
    gae(ep, 0.99, 0.95);
    for (const auto& t : ep) CHECK(t.advantage == 0.0);
  }
}

TEST_CASE("clipped surrogate: gradient vanishes only on the clipped branch") {
  // scalar check of min(r*A, clip(r)*A) with r = exp(lp - lp_old), r > 1+eps
  for (const double advantage : {1.0, -1.0}) {
    tg::ParamStore<double> store;
    store.add("lp", tg::TensorD::scalar(0.5));  // ratio = e^0.5 ~ 1.65
    tg::GraphD g(&store);
    const int ratio = g.exp(g.param("lp"));
    const int adv = g.input(tg::TensorD::scalar(advantage));
    const int surr = g.minimum(g.mul(ratio, adv),
                               g.mul(g.clamp(ratio, 0.8, 1.2), adv));
    store.zero_grads();
    g.backward(surr);
    const double grad = store.get("lp").grad.data[0];
    if (advantage > 0)
      CHECK(grad == 0.0);  // clipped branch is active and constant
    else
      CHECK(grad == doctest::Approx(-std::exp(0.5)));  // unclipped branch flows
  }
}

TEST_CASE("zero advantages leave the policy network untouched") {
  const nets::NetConfig pcfg = tiny_policy_cfg(4);
  const nets::NetConfig ccfg = tiny_critic_cfg(4);
  tg::ParamStore<float> pstore, cstore;
  init_policy_params(pcfg, pstore, 8, -1.0);
  nets::init_params(ccfg, cstore, kCriticPrefix, 9);

  std::vector<Transition> pool;
  for (int k = 0; k < 8; ++k) {
    Transition tr;
    tr.state = bandit_state();
    const ActionSample a = sample_action(pcfg, pstore, tr.state, 100 + k, false);
    tr.u = a.u;
    tr.logprob = a.logprob;
    tr.reward = 1.0;
    tr.value = 0.0;
    tr.advantage = 0.0;
    tr.ret = 1.0;
    tr.done = true;
    pool.push_back(std::move(tr));
  }
  const auto before = pstore.get("importance.c0.w").value.data;
  const auto log_std_before = pstore.get(kLogStdParam).value.data[0];
  std::vector<Transition*> batch;
  for (auto& t : pool) batch.push_back(&t);
  PolicyConfig cfg;
  cfg.update_epochs = 1;
  cfg.minibatch = 8;
  std::int64_t ps = 0, cs = 0;
  const PpoStats stats = ppo_update(pcfg, pstore, ccfg, cstore, batch, cfg, ps, cs, 1);
  CHECK(pstore.get("importance.c0.w").value.data == before);
  CHECK(pstore.get(kLogStdParam).value.data[0] != log_std_before);  // entropy bonus
  CHECK(stats.first_epoch_max_ratio_dev == 0.0);
}

TEST_CASE("ppo ratios are exactly one before the first update") {
  const nets::NetConfig pcfg = tiny_policy_cfg(4);
  const nets::NetConfig ccfg = tiny_critic_cfg(4);
  tg::ParamStore<float> pstore, cstore;
  init_policy_params(pcfg, pstore, 18, -1.0);
  nets::init_params(ccfg, cstore, kCriticPrefix, 19);
  std::vector<Transition> pool;
  for (int k = 0; k < 12; ++k) {
    Transition tr;
    tr.state = bandit_state();
    const ActionSample a = sample_action(pcfg, pstore, tr.state, 500 + k, false);
    tr.u = a.u;
    tr.logprob = a.logprob;
    tr.reward = double(k % 3);
    tr.value = 0.1;
    tr.done = true;
    pool.push_back(std::move(tr));
  }
  for (auto& t : pool) {
    std::vector<Transition> ep{t};
    gae(ep, 0.99, 0.95);
    t = ep[0];
  }
  std::vector<Transition*> batch;
  for (auto& t : pool) batch.push_back(&t);
  normalize_advantages(batch);
  PolicyConfig cfg;
  cfg.update_epochs = 2;
  cfg.minibatch = 4;
  std::int64_t ps = 0, cs = 0;
  const PpoStats stats = ppo_update(pcfg, pstore, ccfg, cstore, batch, cfg, ps, cs, 3);
  CHECK(stats.first_epoch_max_ratio_dev == 0.0);
}

TEST_CASE("advantage normalization yields zero mean, unit variance") {
  std::vector<Transition> pool(32);
  KeyedRng rng{77};
  for (auto& t : pool) t.advantage = rng.next_double() * 10 - 3;
  std::vector<Transition*> batch;
  for (auto& t : pool) batch.push_back(&t);
  normalize_advantages(batch);
  double mean = 0, var = 0;
  for (const auto* t : batch) mean += t->advantage;
  mean /= double(batch.size());
  for (const auto* t : batch) var += (t->advantage - mean) * (t->advantage - mean);
  var /= double(batch.size());
  CHECK(std::abs(mean) < 1e-6);
  CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("toy bandit: policy learns to order two pixels") {
  const nets::NetConfig pcfg = tiny_policy_cfg(4);
  const nets::NetConfig ccfg = tiny_critic_cfg(4);
  tg::ParamStore<float> pstore, cstore;
  init_policy_params(pcfg, pstore, 21, -1.0);
  nets::init_params(ccfg, cstore, kCriticPrefix, 22);

  PolicyConfig cfg;
  cfg.update_epochs = 4;
  cfg.minibatch = 32;
  cfg.lr = 5e-3;
  cfg.critic_lr = 1e-2;
  const tg::TensorF state = bandit_state();

  std::int64_t ps = 0, cs = 0;
  std::uint64_t noise = 0;
  for (int update = 0; update < 200; ++update) {
    std::vector<Transition> pool;
    for (int k = 0; k < 32; ++k) {
      Transition tr;
      tr.state = state;
      const ActionSample a = sample_action(pcfg, pstore, state, ++noise, false);
      tr.u = a.u;
      tr.logprob = a.logprob;
      tr.reward = a.action.at(0, 0, 0, 0) > a.action.at(0, 0, 0, 1) ? 1.0 : 0.0;
      tr.value = critic_value(ccfg, cstore, state);
      tr.done = true;
      std::vector<Transition> ep{std::move(tr)};
      gae(ep, 0.99, 0.95);
      pool.push_back(std::move(ep[0]));
    }
    std::vector<Transition*> batch;
    for (auto& t : pool) batch.push_back(&t);
    normalize_advantages(batch);
    ppo_update(pcfg, pstore, ccfg, cstore, batch, cfg, ps, cs, 1000 + update);
  }

  int correct = 0;
  const int trials = 200;
  for (int k = 0; k < trials; ++k) {
    const ActionSample a = sample_action(pcfg, pstore, state, 777000 + k, false);
    correct += a.action.at(0, 0, 0, 0) > a.action.at(0, 0, 0, 1) ? 1 : 0;
  }
  CHECK(double(correct) / trials > 0.9);
}

TEST_CASE("critic: zero weights give zero value, training regresses to a constant") {
  const nets::NetConfig ccfg = tiny_critic_cfg(4);
  tg::ParamStore<float> cstore;
  nets::init_params(ccfg, cstore, kCriticPrefix, 31);
  {
    tg::ParamStore<float> zeroed;
    nets::init_params(ccfg, zeroed, kCriticPrefix, 32);
    for (const std::string& n : zeroed.order)
      std::fill(zeroed.get(n).value.data.begin(), zeroed.get(n).value.data.end(), 0.f);
    CHECK(critic_value(ccfg, zeroed, bandit_state()) == 0.0);
  }
  // values stay finite on fuzzed states
  for (std::uint64_t s = 0; s < 20; ++s)
    CHECK(std::isfinite(critic_value(ccfg, cstore, rlpt::test::random_tensor_f({1, 4, 1, 2}, s))));

  // constant reward 5 with gamma = 0 makes every return target 5
  const nets::NetConfig pcfg = tiny_policy_cfg(4);
  tg::ParamStore<float> pstore;
  init_policy_params(pcfg, pstore, 33, -1.0);
  PolicyConfig cfg;
  cfg.update_epochs = 1;
  cfg.minibatch = 16;
  cfg.critic_lr = 2e-2;
  std::int64_t ps = 0, cs = 0;
  for (int update = 0; update < 60; ++update) {
    std::vector<Transition> pool(16);
    for (auto& tr : pool) {
      tr.state = bandit_state();
      const ActionSample a = sample_action(pcfg, pstore, tr.state, 9000 + update, false);
      tr.u = a.u;
      tr.reward = 5.0;
      tr.value = critic_value(ccfg, cstore, tr.state);
      tr.advantage = 0.0;
      tr.ret = 5.0;
      tr.done = true;
    }
    std::vector<Transition*> batch;
    for (auto& t : pool) batch.push_back(&t);
    ppo_update(pcfg, pstore, ccfg, cstore, batch, cfg, ps, cs, update);
  }
  CHECK(std::abs(critic_value(ccfg, cstore, bandit_state()) - 5.0) < 0.5);
}
