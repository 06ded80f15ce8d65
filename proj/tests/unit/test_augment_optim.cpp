#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "dmt/augment.hpp"
#include "dmt/errors.hpp"
#include "dmt/optim.hpp"
#include "dmt/rng.hpp"
#include "scenarios.hpp"
#include "support.hpp"

using namespace dmt;

TEST(Rng, EngineIsStandardMt19937_64) {
  // 10000th output of a default-seeded mt19937_64, fixed by the standard.
  Rng rng(5489);
  std::uint64_t x = 0;
  for (int i = 0; i < 10000; ++i) x = rng.next_u64();
  EXPECT_EQ(x, 9981545732273789042ULL);
}

TEST(Rng, MixSeedIsSplitMix64) {
  EXPECT_EQ(mix_seed(0), 0xe220a8397b1dcdafULL);
  EXPECT_NE(sample_seed(0, 0, 0), sample_seed(0, 1, 0));
  EXPECT_NE(sample_seed(0, 0, 0), sample_seed(0, 0, 1));
  EXPECT_EQ(sample_seed(7, 3, 5), sample_seed(7, 3, 5));
}

TEST(Rng, DistributionRanges) {
  Rng rng(1);
  double sum = 0.0, sq = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(rng.uniform_int(7), 7u);
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.02);
  EXPECT_NEAR(sq / n, 1.0, 0.02);
  EXPECT_THROW(rng.uniform_int(0), InvalidArgument);
}

TEST(Augment, FullScaleSquareCropIsIdentity) {
  Rng rng(2);
  const Tensor img = test::random_image(rng, 8);
  CropBox box;
  const Tensor out = random_resized_crop(img, rng, 1.0, 1.0, 8, &box, 1.0, 1.0);
  EXPECT_EQ(box, (CropBox{0, 0, 8, 8}));
  EXPECT_LT(max_abs_diff(out, img), 1e-6);
}

TEST(Augment, CropBoxesStayInside) {
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const CropBox b = sample_crop_box(16, 12, rng, 0.2, 1.0, 0.75, 4.0 / 3.0);
    ASSERT_GE(b.height, 1u);
    ASSERT_GE(b.width, 1u);
    ASSERT_LE(b.top + b.height, 16u);
    ASSERT_LE(b.left + b.width, 12u);
  }
}

TEST(Augment, DegenerateSource) {
  Rng rng(4);
  EXPECT_THROW(random_resized_crop(Tensor({3, 1, 4}), rng, 0.5, 1.0, 4), InvalidArgument);
  EXPECT_THROW(random_resized_crop(Tensor({3, 4, 4}), rng, 0.5, 0.4, 4), InvalidArgument);
}

TEST(Augment, SameStateSameOutput) {
  const Tensor img = golden::ramp_image();
  Rng a(9), b(9);
  const ViewPair va = make_views(img, a, AugmentConfig{}, 8);
  const ViewPair vb = make_views(img, b, AugmentConfig{}, 8);
  EXPECT_TRUE(va.student_view.bit_equal(vb.student_view));
  EXPECT_TRUE(va.teacher_view.bit_equal(vb.teacher_view));
  EXPECT_EQ(va.record.crop, vb.record.crop);
}

TEST(Flip, Cases) {
  const Tensor pair({3, 1, 2}, {1, 2, 3, 4, 5, 6});
  const Tensor flipped = horizontal_flip(pair, true);
  EXPECT_EQ(flipped.at(0, 0, 0), 2.0);
  EXPECT_EQ(flipped.at(2, 0, 1), 5.0);
  EXPECT_TRUE(horizontal_flip(pair, false).bit_equal(pair));
  const Tensor sym({3, 1, 3}, {1, 2, 1, 3, 4, 3, 5, 6, 5});
  EXPECT_TRUE(horizontal_flip(sym, true).bit_equal(sym));
}

TEST(Jitter, ZeroStrengthIsIdentity) {
  Rng rng(5);
  const Tensor img = test::random_image(rng, 6);
  JitterFactors f;
  EXPECT_TRUE(color_jitter(img, rng, 0.0, 0.0, 0.0, &f).bit_equal(img));
  EXPECT_TRUE(f.is_identity());
}

TEST(Jitter, BrightnessScales) {
  const Tensor img = Tensor::full({3, 4, 4}, 0.25);
  JitterFactors f;
  f.brightness = 2.0;
  const Tensor out = apply_jitter(img, f);
  for (double v : out.storage()) EXPECT_EQ(v, 0.5);
  f.brightness = 8.0;
  const Tensor clamped = apply_jitter(img, f);
  for (double v : clamped.storage()) EXPECT_EQ(v, 1.0);
}

TEST(Jitter, FactorRanges) {
  Rng rng(6);
  for (int i = 0; i < 200; ++i) {
    const JitterFactors f = sample_jitter(rng, 0.4, 0.4, 1.5);
    ASSERT_GE(f.brightness, 0.6);
    ASSERT_LE(f.brightness, 1.4);
    ASSERT_GE(f.saturation, 0.0);
    ASSERT_LE(f.saturation, 2.5);
  }
}

TEST(Views, NoJitterMeansIdenticalViews) {
  AugmentConfig cfg;
  cfg.brightness = cfg.contrast = cfg.saturation = 0.0;
  Rng rng(7);
  const ViewPair v = make_views(golden::ramp_image(), rng, cfg, 8);
  EXPECT_TRUE(v.teacher_view.bit_equal(v.student_view));
}

TEST(Views, OnlyStudentIsJittered) {
  Rng rng(8);
  const ViewPair v = make_views(golden::ramp_image(), rng, AugmentConfig{}, 8);
  EXPECT_TRUE(v.record.teacher_jitter.is_identity());
  const Tensor unjittered =
      horizontal_flip(crop_and_resize(golden::ramp_image(), v.record.crop, 8), v.record.flipped);
  EXPECT_TRUE(v.teacher_view.bit_equal(unjittered));
  EXPECT_TRUE(v.student_view.bit_equal(apply_jitter(unjittered, v.record.student_jitter)));
}

TEST(Golden, FrozenStreams) {
  const auto frozen = KeyValueConfig::load(std::filesystem::path(DMT_GOLDEN_DIR) / "values.txt");
  const auto now = golden::compute();
  ASSERT_EQ(frozen.entries().size(), now.entries().size());
  for (const auto& [key, value] : now.entries()) EXPECT_EQ(frozen.get(key), value) << key;
}

TEST(AdamW, FirstStepClosedForm) {
  ParameterSet ps;
  ps.add("w", Tensor({1}, {0.0}));
  ps.get("w").grad = Tensor({1}, {1.0});
  AdamWState st;
  st.hyper.weight_decay = 0.0;
  adamw_step({&ps}, st, 1e-3);
  EXPECT_NEAR(ps.get("w").value[0], -1e-3 / (1.0 + 1e-8), 1e-18);
}

TEST(AdamW, ZeroGradientMovesNothingAndDecaysMoments) {
  ParameterSet ps;
  ps.add("w", Tensor({2}, {0.5, -1.0}));
  ps.zero_grad();
  AdamWState st;
  st.hyper.weight_decay = 0.0;
  for (int i = 0; i < 3; ++i) adamw_step({&ps}, st, 1e-2);
  EXPECT_EQ(ps.get("w").value[0], 0.5);
  EXPECT_EQ(ps.get("w").value[1], -1.0);

  // Moments built up by a unit gradient shrink once the gradient is zero.
  ps.get("w").grad = Tensor({2}, {1.0, 1.0});
  adamw_step({&ps}, st, 1e-2);
  const double m0 = st.m[0][0], v0 = st.v[0][0];
  ps.zero_grad();
  adamw_step({&ps}, st, 1e-2);
  EXPECT_DOUBLE_EQ(st.m[0][0], 0.9 * m0);
  EXPECT_DOUBLE_EQ(st.v[0][0], 0.999 * v0);
}

TEST(AdamW, PureDecoupledDecay) {
  ParameterSet ps;
  ps.add("w", Tensor({1}, {1.0}));
  ps.add("b", Tensor({1}, {1.0}), false);
  ps.zero_grad();
  AdamWState st;
  st.hyper.weight_decay = 0.05;
  adamw_step({&ps}, st, 0.1);
  EXPECT_DOUBLE_EQ(ps.get("w").value[0], 0.995);
  EXPECT_EQ(ps.get("b").value[0], 1.0);
}

TEST(AdamW, SignLikeAsymptotics) {
  ParameterSet ps;
  ps.add("w", Tensor({1}, {0.0}));
  AdamWState st;
  st.hyper.weight_decay = 0.0;
  double prev = 0.0;
  for (int i = 0; i < 20000; ++i) {
    ps.get("w").grad = Tensor({1}, {-0.3});
    prev = ps.get("w").value[0];
    adamw_step({&ps}, st, 1e-3);
  }
  EXPECT_NEAR((ps.get("w").value[0] - prev) / 1e-3, 1.0, 1e-6);
}

TEST(AdamW, Errors) {
  ParameterSet ps;
  ps.add("w", Tensor({1}, {0.0}));
  ps.get("w").grad = Tensor({1}, {1.0});
  AdamWState st;
  ps.get("w").grad.storage()[0] = std::nan("");
  EXPECT_THROW(adamw_step({&ps}, st, 1e-3), NumericError);
  EXPECT_EQ(ps.get("w").value[0], 0.0);
  ps.get("w").grad = Tensor({1}, {1.0});
  ps.set_frozen(true);
  EXPECT_THROW(adamw_step({&ps}, st, 1e-3), InvalidArgument);
  ps.set_frozen(false);
  adamw_step({&ps}, st, 1e-3);
  ParameterSet other;
  other.add("w", Tensor({2}));
  other.get("w").grad = Tensor({2});
  EXPECT_THROW(adamw_step({&other}, st, 1e-3), ShapeError);
}

TEST(Schedule, WarmupCosine) {
  ScheduleConfig s;
  s.base_lr = 1.5e-4;
  s.warmup_epochs = 15;
  s.total_epochs = 300;
  s.steps_per_epoch = 4;
  EXPECT_EQ(lr_at(0, s), 0.0);
  EXPECT_DOUBLE_EQ(lr_at(30, s), 0.75e-4);
  EXPECT_DOUBLE_EQ(lr_at(60, s), 1.5e-4);
  EXPECT_NEAR(lr_at(1200, s), 0.0, 1e-20);
  const std::size_t mid = 60 + (1200 - 60) / 2;
  EXPECT_NEAR(lr_at(mid, s), 0.75e-4, 1e-18);
  for (std::size_t k = 61; k <= 1200; ++k) ASSERT_LE(lr_at(k, s), lr_at(k - 1, s));
  EXPECT_THROW(lr_at(1201, s), InvalidArgument);
  s.floor_lr = 1e-6;
  EXPECT_DOUBLE_EQ(lr_at(1200, s), 1e-6);
  s.warmup_epochs = 300;
  EXPECT_THROW(s.validate(), ConfigError);
}
