#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dmt/errors.hpp"
#include "dmt/fusion.hpp"
#include "checks.hpp"
#include "naive.hpp"
#include "support.hpp"

using namespace dmt;

namespace {

const double kPairKl = (std::numbers::e - 1) / (std::numbers::e + 1);

std::vector<Tensor> random_teachers(Rng& rng, std::size_t m, std::size_t rows, std::size_t d) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < m; ++i) out.push_back(test::random_tensor(rng, {rows, d}, 1.5));
  return out;
}

}  // namespace

TEST(FuseTokens, SingleTeacherIsIdentity) {
  Rng rng(1);
  const auto t = random_teachers(rng, 1, 5, 3);
  EXPECT_TRUE(fuse_tokens(t).bit_equal(t[0]));
}

TEST(FuseTokens, PermutationInvariantBitExact) {
  Rng rng(2);
  auto t = random_teachers(rng, 4, 5, 6);
  const Tensor ref = fuse_tokens(t);
  std::sort(t.begin(), t.end(), [](const Tensor& a, const Tensor& b) { return a[0] < b[0]; });
  do {
    EXPECT_TRUE(fuse_tokens(t).bit_equal(ref));
  } while (std::next_permutation(t.begin(), t.end(), [](const Tensor& a, const Tensor& b) { return a[0] < b[0]; }));
}

TEST(FuseTokens, ThreeTwoByTwoMatchNaiveSumExactly) {
  Rng rng(3);
  const auto t = random_teachers(rng, 3, 2, 2);
  std::vector<oracle::Mat> mats;
  for (const auto& x : t) mats.push_back(oracle::to_mat(x));
  const auto want = oracle::fuse(mats, true);
  const Tensor got = fuse_tokens(t);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(got(i, j), want[i][j]);
}

TEST(FuseTokens, Errors) {
  EXPECT_THROW(fuse_tokens(std::vector<Tensor>{}), InvalidArgument);
  EXPECT_THROW(fuse_tokens(std::vector<Tensor>{Tensor({2, 2}), Tensor({2, 3})}), ShapeError);
}

TEST(FeatureMap, IndexFormula) {
  Rng rng(4);
  const Tensor tokens = test::random_tensor(rng, {5, 3});
  const FeatureMap f = tokens_to_feature_map(tokens, 2, 2);
  ASSERT_EQ(f.data.shape(), (Shape{3, 2, 2}));
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t w = 0; w < 2; ++w) EXPECT_EQ(f.data.at(c, r, w), tokens(1 + r * 2 + w, c));
  const Tensor back = feature_map_to_tokens(f);
  for (std::size_t n = 0; n < 4; ++n)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(back(n, c), tokens(n + 1, c));
  EXPECT_THROW(tokens_to_feature_map(tokens, 2, 3), ShapeError);
}

TEST(FeatureMap, FuseCommutesWithReshape) {
  Rng rng(5);
  const auto t = random_teachers(rng, 3, 10, 4);
  std::vector<FeatureMap> maps;
  for (const auto& x : t) maps.push_back(tokens_to_feature_map(x, 3, 3));
  const FeatureMap a = fuse_features(maps);
  const FeatureMap b = tokens_to_feature_map(fuse_tokens(t), 3, 3);
  EXPECT_TRUE(a.data.bit_equal(b.data));
}

TEST(Adapter, IdentityAndBiasOnly) {
  Rng rng(6);
  const Tensor s = test::random_tensor(rng, {5, 4});
  EXPECT_TRUE(adapter_project(s, Adapter::identity(4)).bit_equal(s));

  Adapter a(4, 3, 0);
  a.weight().value = Tensor({4, 3});
  a.bias().value = Tensor({3}, {0.5, -1.0, 2.0});
  const Tensor out = adapter_project(s, a);
  for (std::size_t n = 0; n < 5; ++n) {
    EXPECT_EQ(out(n, 0), 0.5);
    EXPECT_EQ(out(n, 2), 2.0);
  }
}

TEST(Adapter, MatchesMatmulOracle) {
  Rng rng(7);
  Adapter a(4, 6, 9);
  for (double& v : a.bias().value.storage()) v = rng.normal(0.0, 1.0);
  const Tensor s = test::random_tensor(rng, {5, 4});
  const Tensor out = adapter_project(s, a);
  const auto want = oracle::affine(oracle::to_mat(s), oracle::to_mat(a.weight().value), a.bias().value.storage());
  for (std::size_t n = 0; n < 5; ++n)
    for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(out(n, j), want[n][j], 1e-12);
  EXPECT_THROW(adapter_project(test::random_tensor(rng, {5, 3}), a), ShapeError);
  EXPECT_THROW(Adapter::identity(0), InvalidArgument);
}

TEST(TfdLoss, ZeroOnMatchAndShiftInvariant) {
  Rng rng(8);
  const Tensor s = test::random_tensor(rng, {5, 4});
  EXPECT_NEAR(tfd_loss(s, s), 0.0, 1e-12);

  const Tensor t = test::random_tensor(rng, {5, 4});
  Tensor shifted = t;
  for (std::size_t n = 0; n < 5; ++n) {
    const double c = rng.normal(0.0, 10.0);
    for (std::size_t j = 0; j < 4; ++j) shifted(n, j) += c;
  }
  EXPECT_NEAR(tfd_loss(s, shifted), tfd_loss(s, t), 1e-9);
}

TEST(TfdLoss, ClosedFormPair) {
  const Tensor s = Tensor::matrix(2, 2, {1, 0, 1, 0});
  const Tensor t = Tensor::matrix(2, 2, {0, 1, 0, 1});
  EXPECT_NEAR(tfd_loss(s, t), kPairKl, 1e-15);
  EXPECT_NEAR(tfd_loss(s, t), oracle::tfd(oracle::to_mat(s), oracle::to_mat(t)), 1e-15);
  EXPECT_THROW(tfd_loss(s, Tensor({3, 2})), ShapeError);
}

TEST(SfdLoss, ClosedFormAndZero) {
  const FeatureMap s{Tensor({1, 1, 2}, {1, 0})};
  const FeatureMap t{Tensor({1, 1, 2}, {0, 1})};
  EXPECT_NEAR(sfd_loss(s, t), kPairKl, 1e-15);
  EXPECT_EQ(sfd_loss(s, s), 0.0);
  EXPECT_THROW(sfd_loss(s, FeatureMap{Tensor({1, 2, 1})}), ShapeError);
}

TEST(SfdLoss, MatchesTripleLoopOracle) {
  Rng rng(9);
  const Tensor st = test::random_tensor(rng, {5, 3}), tt = test::random_tensor(rng, {5, 3});
  const double got = sfd_loss(tokens_to_feature_map(st, 2, 2), tokens_to_feature_map(tt, 2, 2));
  const double want = oracle::sfd(oracle::channels_of(oracle::to_mat(st)), oracle::channels_of(oracle::to_mat(tt)));
  EXPECT_NEAR(got, want, 1e-10 * want);
}

TEST(TotalLoss, SumOfTerms) {
  Rng rng(10);
  const Tensor s = test::random_tensor(rng, {5, 3});
  const FeatureMap sm = tokens_to_feature_map(s, 2, 2);
  EXPECT_EQ(total_loss(s, s, sm, sm), 0.0);
  const Tensor t = test::random_tensor(rng, {5, 3});
  const FeatureMap tm = tokens_to_feature_map(t, 2, 2);
  const auto so = oracle::to_mat(s), to = oracle::to_mat(t);
  const double want = oracle::tfd(so, to) + oracle::sfd(oracle::channels_of(so), oracle::channels_of(to));
  EXPECT_NEAR(total_loss(s, t, sm, tm), want, 1e-10 * want);
}

TEST(MseLoss, Values) {
  Tape tape;
  const Var s = tape.input(Tensor::matrix(1, 1, {2.0}));
  EXPECT_EQ(tape.value(mse_token_term(tape, s, Tensor::matrix(1, 1, {0.0}))).item(), 4.0);

  Rng rng(11);
  const Tensor a = test::random_tensor(rng, {5, 3}), b = test::random_tensor(rng, {5, 3});
  const FeatureMap am = tokens_to_feature_map(a, 2, 2), bm = tokens_to_feature_map(b, 2, 2);
  EXPECT_EQ(mse_loss_variant(a, a, am, am), 0.0);
  const auto terms = mse_loss_terms(a, b, am, bm);
  const auto ao = oracle::to_mat(a), bo = oracle::to_mat(b);
  EXPECT_NEAR(terms.token, oracle::mse_token(ao, bo), 1e-12);
  EXPECT_NEAR(terms.spatial, oracle::mse_spatial(oracle::channels_of(ao), oracle::channels_of(bo)), 1e-12);
  EXPECT_DOUBLE_EQ(mse_loss_variant(a, b, am, bm), terms.total());
}

TEST(LossMode, ParseAndPrint) {
  for (auto m : {LossMode::kTfdSfd, LossMode::kTfd, LossMode::kSfd, LossMode::kMse}) {
    EXPECT_EQ(parse_loss_mode(to_string(m)), m);
  }
  EXPECT_EQ(to_string(LossMode::kTfdSfd), "tfd+sfd");
  EXPECT_THROW(parse_loss_mode("kl"), ConfigError);
}

TEST(DistillLoss, ModeContract) {
  Rng rng(12);
  const auto teachers = random_teachers(rng, 2, 5, 3);
  const FusedTarget target = make_fused_target(teachers, 2, 2);
  const Tensor s = test::random_tensor(rng, {5, 3});

  Tape only_tfd;
  const Var a = only_tfd.input(s);
  const auto l = distill_loss(only_tfd, a, target, LossMode::kTfd);
  EXPECT_EQ(l.spatial_term, 0.0);
  only_tfd.backward(l.total);

  Tape direct;
  const Var b = direct.input(s);
  direct.backward(tfd_loss(direct, b, target.tokens));
  EXPECT_TRUE(only_tfd.grad(a).bit_equal(direct.grad(b)));

  Tape only_sfd;
  const auto l2 = distill_loss(only_sfd, only_sfd.input(s), target, LossMode::kSfd);
  EXPECT_EQ(l2.token_term, 0.0);
  EXPECT_DOUBLE_EQ(only_sfd.value(l2.total).item(), l2.spatial_term);
}

TEST(DistillLoss, TeacherOrderDoesNotMatter) {
  Rng rng(13);
  auto teachers = random_teachers(rng, 3, 10, 4);
  const Tensor s = test::random_tensor(rng, {10, 4});
  auto value = [&](const std::vector<Tensor>& t) {
    Tape tape;
    return tape.value(distill_loss(tape, tape.input(s), make_fused_target(t, 3, 3), LossMode::kTfdSfd).total).item();
  };
  const double ref = value(teachers);
  std::swap(teachers[0], teachers[2]);
  EXPECT_EQ(value(teachers), ref);
  std::swap(teachers[0], teachers[1]);
  EXPECT_EQ(value(teachers), ref);
}

TEST(OracleChecks, LossesFusionAdamW) {
  for (const auto& r : oracle::run_loss_oracle_checks(14, 100)) {
    EXPECT_EQ(r.instances, 100u) << r.name;
    EXPECT_LT(r.max_rel_error, 1e-10) << r.name;
  }
}
