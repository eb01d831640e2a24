// Copyright 2026 the rlpt authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "oracle_utils.hpp"
#include "rlpt/budget/budget.hpp"
#include "rlpt/nets/nets.hpp"
#include "rlpt/quality/quality.hpp"
#include "rlpt/tensorgrad/adam.hpp"

using namespace rlpt;
using namespace rlpt::nets;
using rlpt::test::fd_max_rel_error;
using rlpt::test::random_tensor;
using rlpt::test::random_tensor_f;

TEST_CASE("channel contracts hold for every size variant") {
  for (const NetSize size : {NetSize::kSmall, NetSize::kNormal, NetSize::kLarge}) {
    CHECK(build_variant(NetKind::kImportance, size).in_channels == 39);
    CHECK(build_variant(NetKind::kImportance, size).out_channels == 1);
    CHECK(build_variant(NetKind::kEncoder, size).in_channels == 56);
    CHECK(build_variant(NetKind::kEncoder, size).out_channels == 32);
    CHECK(build_variant(NetKind::kDenoiser, size).in_channels == 32);
    CHECK(build_variant(NetKind::kDenoiser, size).out_channels == 3);
  }
}

TEST_CASE("parameter counts order small < normal < large") {
  for (const NetKind kind : {NetKind::kImportance, NetKind::kEncoder, NetKind::kDenoiser}) {
    const auto s = build_variant(kind, NetSize::kSmall).parameter_count();
    const auto n = build_variant(kind, NetSize::kNormal).parameter_count();
    const auto l = build_variant(kind, NetSize::kLarge).parameter_count();
    CHECK(s < n);
    CHECK(n < l);
  }
  // halving channels on both sides of each conv shrinks weights ~4x
  const double ratio =
      double(build_variant(NetKind::kDenoiser, NetSize::kSmall).parameter_count()) /
      double(build_variant(NetKind::kDenoiser, NetSize::kNormal).parameter_count());
  CHECK(ratio > 0.2);
  CHECK(ratio < 0.3);
}

TEST_CASE("small variants match their architecture notes") {
  CHECK_FALSE(build_variant(NetKind::kImportance, NetSize::kSmall).unet);  // no pooling
  CHECK(build_variant(NetKind::kEncoder, NetSize::kSmall).conv_kernel == 1);
  CHECK(build_variant(NetKind::kEncoder, NetSize::kLarge).channels.size() == 5);
}

TEST_CASE("importance forward: shape, tanh bound, zero-weight fallback") {
  const NetConfig cfg = build_variant(NetKind::kImportance, NetSize::kNormal);
  tg::ParamStore<float> store;
  init_params(cfg, store, "imp", 7);
  tg::GraphF g(&store);
  const int in = g.input(random_tensor_f({2, 39, 32, 32}, 3, -1, 1));
  const int heat = g.tanh(forward(cfg, g, in, "imp"));
  CHECK(g.value(heat).dims == tg::Dims4{2, 1, 32, 32});
  for (float v : g.value(heat).data) {
    CHECK(v > -1.0f);
    CHECK(v < 1.0f);
  }

  // zero weights -> zero heatmap -> the allocator's uniform fallback
  for (const std::string& name : store.order)
    std::fill(store.get(name).value.data.begin(), store.get(name).value.data.end(), 0.f);
  tg::GraphF g2(&store);
  const int heat2 = g2.tanh(forward(cfg, g2, g2.input(random_tensor_f({1, 39, 32, 32}, 4)),
                                    "imp"));
  budget::Heatmap hm(32, 32);
  std::copy(g2.value(heat2).data.begin(), g2.value(heat2).data.end(), hm.values.begin());
  const auto counts = budget::allocate(hm, 2 * 32 * 32, 8);
  for (auto c : counts.counts) CHECK(c == 2);
}

TEST_CASE("importance rejects resolutions not divisible by 16") {
  const NetConfig cfg = build_variant(NetKind::kImportance, NetSize::kNormal);
  tg::ParamStore<float> store;
  init_params(cfg, store, "imp", 7);
  tg::GraphF g(&store);
  const int in = g.input(tg::TensorF::zeros({1, 39, 24, 32}));
  CHECK_THROWS_WITH_AS(forward(cfg, g, in, "imp"), doctest::Contains("pad"), ShapeError);
}

TEST_CASE("importance gradient w.r.t. first-layer weights matches finite differences") {
  const NetConfig cfg = build_variant(NetKind::kImportance, NetSize::kNormal);
  tg::ParamStore<double> store;
  init_params(cfg, store, "imp", 11);
  const tg::TensorD input = random_tensor({1, 39, 16, 16}, 12, -1, 1);
  const double err = fd_max_rel_error(
      store, {"imp.e0.w", "imp.e0.b"},
      [&](tg::GraphD& g) { return g.mean_all(g.tanh(forward(cfg, g, g.input(input), "imp"))); },
      1e-5, 24);
  CHECK(err < 1e-4);
}

TEST_CASE("encoder output is a bounded 32-channel latent") {
  const NetConfig cfg = build_variant(NetKind::kEncoder, NetSize::kNormal);
  tg::ParamStore<float> store;
  init_params(cfg, store, "enc", 21);
  tg::GraphF g(&store);
  const int in = g.input(random_tensor_f({1, 56, 24, 24}, 22, -1, 1));
  const int latent = g.tanh(forward(cfg, g, in, "enc"));
  CHECK(g.value(latent).dims == tg::Dims4{1, 32, 24, 24});
  for (float v : g.value(latent).data) {
    CHECK(v > -1.0f);
    CHECK(v < 1.0f);
  }
}

TEST_CASE("encoder is sensitive to sample order") {
  const NetConfig cfg = build_variant(NetKind::kEncoder, NetSize::kNormal);
  tg::ParamStore<float> store;
  init_params(cfg, store, "enc", 31);
  tg::TensorF in = random_tensor_f({1, 56, 20, 20}, 32, 0, 1);
  tg::GraphF g1(&store);
  const auto out1 = g1.value(g1.tanh(forward(cfg, g1, g1.input(in), "enc")));
  // swap sample slot 0 and slot 1 (channels 32..34 <-> 35..37) at one pixel
  for (int c = 0; c < 3; ++c)
    std::swap(in.at(0, 32 + c, 10, 10), in.at(0, 35 + c, 10, 10));
  tg::GraphF g2(&store);
  const auto out2 = g2.value(g2.tanh(forward(cfg, g2, g2.input(in), "enc")));
  CHECK(out1.data != out2.data);
}

TEST_CASE("encoder forward is deterministic on degenerate input") {
  const NetConfig cfg = build_variant(NetKind::kEncoder, NetSize::kNormal);
  tg::ParamStore<float> store;
  init_params(cfg, store, "enc", 41);
  tg::TensorF in({1, 56, 16, 16});
  // zero warped latent, all-sentinel samples
  for (int c = 32; c < 56; ++c)
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) in.at(0, c, y, x) = -1.f;
  tg::GraphF g1(&store), g2(&store);
  const auto a = g1.value(g1.tanh(forward(cfg, g1, g1.input(in), "enc")));
  const auto b = g2.value(g2.tanh(forward(cfg, g2, g2.input(in), "enc")));
  CHECK(a.data == b.data);
}

TEST_CASE("denoiser output shape and smoke training on an identity task") {
  const NetConfig cfg = build_variant(NetKind::kDenoiser, NetSize::kNormal);
  tg::ParamStore<float> store;
  init_params(cfg, store, "den", 51);

  const io::Image target_img = rlpt::test::random_image(32, 32, 3, 52, 0.1f, 0.9f);
  tg::TensorF latent({1, 32, 32, 32});
  tg::TensorF target({1, 3, 32, 32});
  std::copy(target_img.data.begin(), target_img.data.end(), target.data.begin());
  for (int c = 0; c < 32; ++c)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) latent.at(0, c, y, x) = target_img.at(c % 3, y, x);

  auto loss_value = [&]() {
    tg::GraphF g(&store);
    const int out = forward(cfg, g, g.input(latent), "den");
    return double(g.value(quality::mixed_loss_node(g, out, g.input(target)).mixed).data[0]);
  };
  const double before = loss_value();
  for (int step = 1; step <= 25; ++step) {
    tg::GraphF g(&store);
    const int out = forward(cfg, g, g.input(latent), "den");
    const auto nodes = quality::mixed_loss_node(g, out, g.input(target));
    store.zero_grads();
    g.backward(nodes.mixed);
    tg::adam_step(store, 1e-3, step);
  }
  CHECK(loss_value() < before);
}

TEST_CASE("full differentiable pipeline matches finite differences at 16x16") {
  const NetConfig enc_cfg = build_variant(NetKind::kEncoder, NetSize::kNormal);
  const NetConfig den_cfg = build_variant(NetKind::kDenoiser, NetSize::kNormal);
  tg::ParamStore<double> store;
  init_params(enc_cfg, store, "encoder", 61);
  init_params(den_cfg, store, "denoiser", 62);
  const tg::TensorD warped = random_tensor({1, 32, 16, 16}, 63, -0.9, 0.9);
  const tg::TensorD samples = random_tensor({1, 24, 16, 16}, 64, 0, 1);
  const tg::TensorD ref = random_tensor({1, 3, 16, 16}, 65, 0, 1);

  auto build = [&](tg::GraphD& g) {
    const int enc_in = g.concat(g.input(warped), g.input(samples));
    const int latent = g.tanh(forward(enc_cfg, g, enc_in, "encoder"));
    const int out = forward(den_cfg, g, latent, "denoiser");
    // l1 term only: msssim needs 32 px min, and backprop path is identical
    const int diff = g.sub(g.clamp(out, 0.0, 1.0), g.input(ref));
    return g.mean_all(g.abs(diff));
  };
  std::vector<std::string> names;
  for (const std::string& n : store.order) names.push_back(n);
  // small eps keeps perturbations from hopping relu kinks; double precision
  // has headroom to spare
  const double err = fd_max_rel_error(store, names, build, 3e-7, 4);
  CHECK(err < 1e-4);
}

TEST_CASE("end-to-end gradients are finite and nonzero") {
  const NetConfig enc_cfg = build_variant(NetKind::kEncoder, NetSize::kNormal);
  const NetConfig den_cfg = build_variant(NetKind::kDenoiser, NetSize::kNormal);
  tg::ParamStore<float> store;
  init_params(enc_cfg, store, "encoder", 71);
  init_params(den_cfg, store, "denoiser", 72);
  tg::GraphF g(&store);
  const int enc_in = g.concat(g.input(random_tensor_f({1, 32, 32, 32}, 73, -0.9f, 0.9f)),
                              g.input(random_tensor_f({1, 24, 32, 32}, 74, 0, 1)));
  const int latent = g.tanh(forward(enc_cfg, g, enc_in, "encoder"));
  const int out = forward(den_cfg, g, latent, "denoiser");
  const auto nodes =
      quality::mixed_loss_node(g, out, g.input(random_tensor_f({1, 3, 32, 32}, 75, 0, 1)));
  store.zero_grads();
  g.backward(nodes.mixed);
  for (const std::string& n : store.order) {
    double norm = 0;
    for (float v : store.get(n).grad.data) {
      CHECK(std::isfinite(v));
      norm += std::abs(double(v));
    }
    CHECK(norm > 0.0);
  }
}

TEST_CASE("config serialization and hash discriminate variants") {
  const NetConfig a = build_variant(NetKind::kDenoiser, NetSize::kNormal);
  const NetConfig b = build_variant(NetKind::kDenoiser, NetSize::kSmall);
  CHECK(a.config_hash() != b.config_hash());
  const NetConfig a2 = NetConfig::from_json_text(a.to_json_text());
  CHECK(a2.config_hash() == a.config_hash());
  CHECK(a2.channels == a.channels);
}
