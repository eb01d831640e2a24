// Copyright 2026 the rlpt authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "oracle_utils.hpp"
#include "rlpt/pipeline/pipeline.hpp"

using namespace rlpt;
using namespace rlpt::pipeline;

namespace {

// tiny in-memory dataset for fast tests
ClipDataset tiny_dataset(const std::string& scene, int clips = 1, int res = 16,
                         int spp_ref = 32, std::uint64_t seed = 5) {
  return generate_dataset(scenegen::Scene::builtin(scene), clips, res, res, spp_ref, seed);
}

VariantConfig tiny_config(Variant mode, int res = 16) {
  VariantConfig cfg;
  cfg.mode = mode;
  cfg.h = res;
  cfg.w = res;
  cfg.epochs = 2;
  cfg.batch = 2;
  cfg.spp_budget_avg = 2.0;
  cfg.seed = 11;
  return cfg;
}

}  // namespace

TEST_CASE("lr schedule endpoints and warmup peak") {
  const std::int64_t total = 1000;
  CHECK(lr_schedule({0, total, 1e-3, 1e-8, 0.15}) == doctest::Approx(1e-8));
  CHECK(lr_schedule({150, total, 1e-3, 1e-8, 0.15}) == doctest::Approx(1e-3));
  CHECK(lr_schedule({total, total, 1e-3, 1e-8, 0.15}) ==
        doctest::Approx(1e-8).epsilon(1e-12));
  // out-of-range steps clamp
  CHECK(lr_schedule({-5, total, 1e-3, 1e-8, 0.15}) == doctest::Approx(1e-8));
  CHECK(lr_schedule({total + 50, total, 1e-3, 1e-8, 0.15}) ==
        doctest::Approx(1e-8).epsilon(1e-12));
  // monotone rise then fall
  double prev = 0;
  for (int s = 0; s <= 150; s += 10) {
    const double lr = lr_schedule({s, total, 1e-3, 1e-8, 0.15});
    CHECK(lr >= prev);
    prev = lr;
  }
  for (int s = 150; s <= 1000; s += 50) {
    const double lr = lr_schedule({s, total, 1e-3, 1e-8, 0.15});
    CHECK(lr <= prev + 1e-15);
    prev = lr;
  }
}

TEST_CASE("variant config validation enforces the sub-1-spp rules") {
  VariantConfig a1 = tiny_config(Variant::kA1GradApprox);
  a1.spp_budget_avg = 0.5;
  CHECK_THROWS_WITH_AS(a1.validate(), doctest::Contains("1 spp"), ConfigError);
  VariantConfig a2 = tiny_config(Variant::kA2Uniform);
  a2.spp_budget_avg = 0.5;
  CHECK_THROWS_AS(a2.validate(), ConfigError);
  VariantConfig ours = tiny_config(Variant::kOurs);
  ours.spp_budget_avg = 0.01;
  CHECK_NOTHROW(ours.validate());

  // round trip through the run-config document
  ours.spp_budget_avg = 0.5;
  const VariantConfig back = VariantConfig::from_json_text(ours.to_json_text());
  CHECK(back.mode == ours.mode);
  CHECK(back.spp_budget_avg == ours.spp_budget_avg);
  CHECK(back.ppo.lr == ours.ppo.lr);
}

TEST_CASE("step_frames is bit-deterministic for a fixed seed") {
  const ClipDataset ds = tiny_dataset("box");
  auto run_once = [&](std::uint64_t seed) {
    TrainState st = TrainState::init(tiny_config(Variant::kOurs));
    std::vector<FrameIO> frames;
    for (int t = 0; t < 3; ++t) frames.push_back(make_frame_io(ds.frame(0, t)));
    std::vector<tg::TensorF> carried(1);
    std::vector<FrameStep> steps;
    std::vector<float> record;
    for (int t = 0; t < 3; ++t) {
      std::vector<const FrameIO*> fps{&frames[std::size_t(t)]};
      step_frames(st, fps, t, carried, steps, seed + t, false, true, 1e-3, true);
      record.insert(record.end(), steps[0].denoised.data.begin(),
                    steps[0].denoised.data.end());
      if (steps[0].has_transition) {
        record.insert(record.end(), steps[0].transition.u.data.begin(),
                      steps[0].transition.u.data.end());
        record.push_back(float(steps[0].transition.reward));
        record.push_back(float(steps[0].transition.logprob));
      }
    }
    return record;
  };
  CHECK(run_once(900) == run_once(900));
  CHECK(run_once(900) != run_once(901));
}

TEST_CASE("temporal feedback: frame t sees the warp of frame t-1's latent") {
  const ClipDataset ds = tiny_dataset("checker");
  TrainState st = TrainState::init(tiny_config(Variant::kOurs));
  std::vector<FrameIO> frames;
  for (int t = 0; t < 2; ++t) frames.push_back(make_frame_io(ds.frame(0, t)));
  std::vector<tg::TensorF> carried(1);
  std::vector<FrameStep> steps;
  std::vector<const FrameIO*> f0{&frames[0]};
  step_frames(st, f0, 0, carried, steps, 1, false, false, 1e-3, false);
  const tg::TensorF latent0 = carried[0];
  for (float v : latent0.data) {
    CHECK(v > -1.f);
    CHECK(v < 1.f);
  }
  const tg::TensorF expected = reservoir::warp(latent0, frames[1].motion);
  std::vector<const FrameIO*> f1{&frames[1]};
  step_frames(st, f1, 1, carried, steps, 2, false, false, 1e-3, false);
  CHECK(steps[0].warped_state.data == expected.data);
}

TEST_CASE("B2 ignores carried state entirely") {
  const ClipDataset ds = tiny_dataset("checker");
  TrainState st = TrainState::init(tiny_config(Variant::kB2NoTemporal));
  std::vector<FrameIO> frames{make_frame_io(ds.frame(0, 1))};
  std::vector<FrameStep> steps_a, steps_b;
  std::vector<const FrameIO*> fps{&frames[0]};

  std::vector<tg::TensorF> garbage(1);
  garbage[0] = rlpt::test::random_tensor_f({1, 32, 16, 16}, 5, -0.9f, 0.9f);
  step_frames(st, fps, 1, garbage, steps_a, 3, false, false, 1e-3, false);

  TrainState st2 = TrainState::init(tiny_config(Variant::kB2NoTemporal));
  std::vector<tg::TensorF> zeros(1);
  zeros[0] = tg::TensorF({1, 32, 16, 16});
  step_frames(st2, fps, 1, zeros, steps_b, 3, false, false, 1e-3, false);

  CHECK(steps_a[0].denoised.data == steps_b[0].denoised.data);
  for (float v : steps_a[0].warped_state.data) CHECK(v == 0.0f);
}

TEST_CASE("C mode averages the sample buffer") {
  const ClipDataset ds = tiny_dataset("box");
  TrainState st = TrainState::init(tiny_config(Variant::kCAveraged));
  std::vector<FrameIO> frames{make_frame_io(ds.frame(0, 0))};
  std::vector<tg::TensorF> carried(1);
  std::vector<FrameStep> steps;
  std::vector<const FrameIO*> fps{&frames[0]};
  CHECK_NOTHROW(step_frames(st, fps, 0, carried, steps, 4, false, false, 1e-3, false));
}

TEST_CASE("A1 heatmap gradient flows only through the numerical-gradient chain") {
  const int res = 4;
  reservoir::SampleBuffer buf(res, res);
  budget::SampleCountMap counts;
  counts.h = counts.w = res;
  counts.cap = 8;
  counts.counts.assign(16, 2);
  KeyedRng rng{12};
  for (int i = 0; i < res; ++i)
    for (int j = 0; j < res; ++j) {
      buf.valid[std::size_t(i) * res + j] = 2;
      for (int c = 0; c < 6; ++c) buf.rgb.at(0, c, i, j) = rng.next_float();
    }
  const io::Image ref = rlpt::test::random_image(res, res, 3, 13);
  tg::TensorF heat({1, 1, res, res});
  for (auto& v : heat.data) v = rng.next_float() - 0.5f;

  // zero loss gradient at the samples -> zero heatmap gradient
  const tg::TensorF zero_grads({1, 24, res, res});
  const tg::TensorF gx0 = a1_heatmap_grad(zero_grads, buf, counts, ref, heat, 32);
  for (float v : gx0.data) CHECK(v == 0.0f);

  tg::TensorF some_grads({1, 24, res, res});
  for (auto& v : some_grads.data) v = rng.next_float() - 0.5f;
  const tg::TensorF gx1 = a1_heatmap_grad(some_grads, buf, counts, ref, heat, 32);
  double norm = 0;
  for (float v : gx1.data) norm += std::abs(v);
  CHECK(norm > 0.0);

  // a zero count anywhere violates the Eq.-gradient precondition
  counts.counts[5] = 0;
  buf.valid[5] = 0;
  CHECK_THROWS_WITH_AS(a1_heatmap_grad(some_grads, buf, counts, ref, heat, 32),
                       doctest::Contains("zero spp"), ConfigError);
}

TEST_CASE("training smoke run lowers the loss and writes metrics") {
  const ClipDataset box = tiny_dataset("box");
  const ClipDataset mirror = tiny_dataset("mirror");
  VariantConfig cfg = tiny_config(Variant::kOurs);
  cfg.epochs = 4;
  cfg.lr_max = 2e-3;
  const std::string out = "/tmp/rlpt_smoke_train";
  std::filesystem::remove_all(out);
  const TrainResult res = train(cfg, {&box, &mirror}, nullptr, out);
  REQUIRE(res.metrics.size() == 4);
  CHECK(res.metrics.back().loss < res.metrics.front().loss);
  CHECK(std::filesystem::exists(out + "/metrics.csv"));
  CHECK(std::filesystem::exists(res.checkpoint_path));

  // checkpoint round trip preserves every parameter bit
  TrainState st = load_train_state(res.checkpoint_path);
  const std::string resaved = "/tmp/rlpt_smoke_train/resaved.ckpt";
  save_train_state(st, resaved);
  CHECK(io::read_file_bytes(res.checkpoint_path) == io::read_file_bytes(resaved));
}

TEST_CASE("A2 skips policy training entirely") {
  const ClipDataset box = tiny_dataset("box");
  VariantConfig cfg = tiny_config(Variant::kA2Uniform);
  cfg.epochs = 1;
  const std::string out = "/tmp/rlpt_smoke_a2";
  std::filesystem::remove_all(out);
  TrainState before = TrainState::init(cfg);
  const TrainResult res = train(cfg, {&box}, nullptr, out);
  TrainState after = load_train_state(res.checkpoint_path);
  for (const std::string& n : before.policy_store.order)
    CHECK(after.policy_store.get(n).value.data == before.policy_store.get(n).value.data);
  // but the denoiser did train
  CHECK(after.model.get("denoiser.out.w").value.data !=
        before.model.get("denoiser.out.w").value.data);
}

TEST_CASE("A1 trains the sampler through the gradient chain") {
  const ClipDataset box = tiny_dataset("box");
  VariantConfig cfg = tiny_config(Variant::kA1GradApprox);
  cfg.epochs = 1;
  const std::string out = "/tmp/rlpt_smoke_a1";
  std::filesystem::remove_all(out);
  TrainState before = TrainState::init(cfg);
  const TrainResult res = train(cfg, {&box}, nullptr, out);
  TrainState after = load_train_state(res.checkpoint_path);
  CHECK(after.policy_store.get("importance.out.w").value.data !=
        before.policy_store.get("importance.out.w").value.data);
}

TEST_CASE("evaluation is deterministic and accepts sub-1 budgets for ours") {
  const ClipDataset ds = tiny_dataset("mirror");
  TrainState st = TrainState::init(tiny_config(Variant::kOurs));
  const auto rows1 = evaluate(st, ds, {0.01, 0.5, 2.0});
  const auto rows2 = evaluate(st, ds, {0.01, 0.5, 2.0});
  REQUIRE(rows1.size() == 3);
  for (std::size_t i = 0; i < rows1.size(); ++i) {
    CHECK(rows1[i].frame_psnr == rows2[i].frame_psnr);
    CHECK(std::isfinite(rows1[i].mean_psnr));
    CHECK(rows1[i].mean_psnr > 0);
  }

  TrainState a2 = TrainState::init(tiny_config(Variant::kA2Uniform));
  CHECK_THROWS_AS(evaluate(a2, ds, {0.5}), ConfigError);
  TrainState a1 = TrainState::init(tiny_config(Variant::kA1GradApprox));
  CHECK_THROWS_AS(evaluate(a1, ds, {0.5}), ConfigError);
}

TEST_CASE("dataset round trip: save, load, identical bytes on re-save") {
  const ClipDataset ds = tiny_dataset("flicker", 1, 16, 8);
  const std::string d1 = "/tmp/rlpt_ds_a";
  const std::string d2 = "/tmp/rlpt_ds_b";
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
  const std::string h1 = save_dataset(ds, d1);
  const ClipDataset loaded = load_dataset(d1);
  CHECK(loaded.meta.content_hash == h1);
  CHECK(loaded.frames.size() == ds.frames.size());
  const std::string h2 = save_dataset(loaded, d2);
  CHECK(h1 == h2);
  for (const auto& name : {"manifest.json", "scene.json", "frames/f00000.ref.raw",
                           "frames/f00000.bank.raw"}) {
    CHECK(io::read_file_bytes(d1 + "/" + name) == io::read_file_bytes(d2 + "/" + name));
  }
  // the sample bank reproduces trace_sample with the bank seed
  const std::uint64_t sbank = bank_seed(ds.meta.seed);
  const scenegen::Vec3 v = scenegen::trace_sample(loaded.scene, 2, 3, 4, 5, sbank, 16, 16);
  const std::size_t plane = 16 * 16;
  CHECK(loaded.frames[2].bank[std::size_t(3 * 5) * plane + 3 * 16 + 4] == float(v.x));

  // corrupting a payload byte is caught by the content hash
  {
    std::string bytes = io::read_file_bytes(d2 + "/frames/f00000.ref.raw");
    bytes[7] = char(bytes[7] + 1);
    tg::atomic_write_file(d2 + "/frames/f00000.ref.raw", bytes);
    CHECK_THROWS_AS(load_dataset(d2), DataError);
  }
}
