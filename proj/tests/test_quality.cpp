// Copyright 2026 the rlpt authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <limits>

#include "oracle_utils.hpp"
#include "rlpt/quality/quality.hpp"

using namespace rlpt;
using namespace rlpt::quality;
using rlpt::test::fd_max_rel_error;
using rlpt::test::random_image;

TEST_CASE("msssim of an image with itself is 1") {
  const io::Image a = random_image(32, 32, 3, 1);
  CHECK(msssim(a, a) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("msssim is symmetric") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const io::Image a = random_image(32, 32, 3, seed * 2);
    const io::Image b = random_image(32, 32, 3, seed * 2 + 1);
    CHECK(std::abs(msssim(a, b) - msssim(b, a)) < 1e-6);
  }
}

TEST_CASE("msssim matches the scalar reference implementation") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    io::Image a = random_image(32, 32, 3, seed * 3 + 10);
    io::Image b = a;
    // correlated pair: reference plus noise, more realistic than iid pairs
    KeyedRng rng{seed};
    for (auto& v : b.data) v = std::clamp(v + 0.2f * (rng.next_float() - 0.5f), 0.f, 1.f);
    CHECK(msssim(a, b) == doctest::Approx(rlpt::test::reference_msssim(a, b)).epsilon(1e-6));
  }
}

TEST_CASE("inverted image scores poorly") {
  // content away from mid-gray so inversion actually changes structure
  io::Image a = random_image(48, 48, 3, 77, 0.0f, 0.25f);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 48; ++x)
      for (int c = 0; c < 3; ++c) a.at(c, y, x) += 0.75f;
  io::Image inv = a;
  for (auto& v : inv.data) v = 1.0f - v;
  CHECK(msssim(a, inv) < 0.5);
}

TEST_CASE("msssim rejects images below the 3-scale minimum") {
  const io::Image a = random_image(16, 40, 3, 5);
  CHECK_THROWS_WITH_AS(msssim(a, a), doctest::Contains("32"), ShapeError);
}

TEST_CASE("msssim gradient matches finite differences at 32x32") {
  tg::ParamStore<double> store;
  store.add("img", rlpt::test::random_tensor({1, 3, 32, 32}, 91, 0.15, 0.85));
  const tg::TensorD ref = rlpt::test::random_tensor({1, 3, 32, 32}, 92, 0.1, 0.9);
  const double err = fd_max_rel_error(
      store, {"img"},
      [&](tg::GraphD& g) { return msssim_node(g, g.param("img"), g.input(ref)); }, 1e-5,
      64);
  CHECK(err < 1e-3);
}

TEST_CASE("mixed loss composition identity") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const io::Image a = random_image(32, 32, 3, seed + 40, 0.05f, 0.95f);
    io::Image b = a;
    KeyedRng rng{seed + 99};
    for (auto& v : b.data) v = std::clamp(v + 0.1f * (rng.next_float() - 0.5f), 0.f, 1.f);
    const LossValue lv = mixed_loss(a, b);
    double l1 = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
      l1 += std::abs(double(a.data[i]) - double(b.data[i]));
    l1 /= double(a.data.size());
    CHECK(lv.l1 == doctest::Approx(l1).epsilon(1e-9));
    CHECK(lv.msssim == doctest::Approx(msssim(a, b)).epsilon(1e-12));
    CHECK(std::abs(lv.mixed - (0.16 * lv.l1 + 0.84 * (1.0 - lv.msssim))) < 1e-7);
  }
}

TEST_CASE("mixed loss of identical images is zero") {
  const io::Image a = random_image(32, 32, 3, 123);
  const LossValue lv = mixed_loss(a, a);
  CHECK(lv.mixed == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("constant offset in a clip-free region gives l1 = offset") {
  const io::Image ref = random_image(32, 32, 3, 50, 0.1f, 0.8f);
  io::Image img = ref;
  for (auto& v : img.data) v += 0.1f;
  const LossValue lv = mixed_loss(img, ref);
  CHECK(lv.l1 == doctest::Approx(0.1).epsilon(1e-5));
  CHECK(lv.mixed ==
        doctest::Approx(0.16 * lv.l1 + 0.84 * (1.0 - lv.msssim)).epsilon(1e-9));
}

TEST_CASE("mixed loss decreases as the image interpolates toward the reference") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const io::Image ref = random_image(32, 32, 3, seed + 200, 0.1f, 0.9f);
    const io::Image far = random_image(32, 32, 3, seed + 300, 0.0f, 1.0f);
    double prev = std::numeric_limits<double>::infinity();
    for (const double alpha : {1.0, 0.75, 0.5, 0.25, 0.0}) {
      io::Image img = ref;
      for (std::size_t i = 0; i < img.data.size(); ++i)
        img.data[i] = float(double(ref.data[i]) +
                            alpha * (double(far.data[i]) - double(ref.data[i])));
      const double m = mixed_loss(img, ref).mixed;
      CHECK(m <= prev + 1e-9);
      prev = m;
    }
  }
}

TEST_CASE("psnr closed forms and symmetry") {
  const io::Image ref = random_image(16, 16, 3, 61, 0.2f, 0.8f);
  CHECK(std::isinf(psnr(ref, ref)));

  io::Image img = ref;
  for (auto& v : img.data) v += 0.1f;  // MSE = 0.01
  CHECK(psnr(img, ref) == doctest::Approx(20.0).epsilon(1e-4));
  CHECK(psnr(img, ref) == doctest::Approx(psnr(ref, img)).epsilon(1e-12));

  io::Image img2 = ref;
  for (auto& v : img2.data) v += 0.01f;  // MSE = 0.0001
  CHECK(psnr(img2, ref) == doctest::Approx(40.0).epsilon(1e-3));
}

TEST_CASE("psnr decreases with added noise amplitude") {
  const io::Image ref = random_image(24, 24, 3, 62, 0.3f, 0.7f);
  double prev = std::numeric_limits<double>::infinity();
  for (const float amp : {0.01f, 0.05f, 0.1f, 0.2f}) {
    io::Image img = ref;
    KeyedRng rng{63};
    for (auto& v : img.data) v += amp * (rng.next_float() * 2 - 1);
    const double p = psnr(img, ref);
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("reward formula") {
  CHECK(reward(0.0) == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(reward(1.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(reward(0.5) - 3.1623) < 1e-4);
  double prev = reward(0.0);
  for (int i = 1; i <= 1000; ++i) {
    const double r = reward(double(i) / 1000.0);
    CHECK(r < prev);
    prev = r;
  }
}

TEST_CASE("error_analysis of identical inputs is neutral") {
  const io::Image ref = random_image(16, 16, 3, 71);
  const io::Image a = random_image(16, 16, 3, 72);
  const ErrorAnalysis ea = error_analysis(a, a, ref, 0.01);
  for (float v : ea.binary.data) CHECK(v == 0.0f);
  for (float v : ea.extreme.data) CHECK(v == 0.0f);
  std::int64_t sum = 0;
  for (std::size_t b = 0; b < ea.histogram.size(); ++b) sum += ea.histogram[b];
  CHECK(sum == 16 * 16);
  CHECK(ea.histogram[127] + ea.histogram[128] == 16 * 16);  // zero-centered bins
}

TEST_CASE("single-pixel perturbation flags exactly one pixel") {
  const io::Image ref = random_image(16, 16, 3, 73, 0.2f, 0.8f);
  io::Image a = ref;
  io::Image b = ref;
  a.at(1, 5, 9) += 0.5f;
  const ErrorAnalysis ea = error_analysis(a, b, ref, 1e-4);
  int flagged = 0;
  for (float v : ea.binary.data) flagged += v != 0.0f;
  CHECK(flagged == 1);
  CHECK(ea.binary.at(0, 5, 9) == 1.0f);
  int extreme = 0;
  for (float v : ea.extreme.data) extreme += v != 0.0f;
  CHECK(extreme == 1);
}

TEST_CASE("histogram partitions all pixels, clipping outliers to edge bins") {
  const io::Image ref = random_image(16, 16, 3, 74, 0.0f, 0.2f);
  io::Image a = ref;
  for (auto& v : a.data) v += 0.9f;  // huge MSE difference, beyond the +-0.1 range
  const ErrorAnalysis ea = error_analysis(a, ref, ref, 0.01);
  std::int64_t sum = 0;
  for (auto c : ea.histogram) sum += c;
  CHECK(sum == 16 * 16);
  CHECK(ea.histogram.back() == 16 * 16);
}
