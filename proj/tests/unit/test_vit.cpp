#include <gtest/gtest.h>

#include "dmt/errors.hpp"
#include "dmt/numerics.hpp"
#include "dmt/vit.hpp"
#include "checks.hpp"
#include "naive.hpp"
#include "support.hpp"

using namespace dmt;

namespace {

// Independent count: embed + class token + positions + blocks + final LN.
std::size_t hand_count(std::size_t h, std::size_t p, std::size_t d, std::size_t depth, std::size_t ratio) {
  const std::size_t n = (h / p) * (h / p);
  const std::size_t embed = 3 * p * p * d + d;
  const std::size_t block = 2 * d + (d * 3 * d + 3 * d) + (d * d + d) + 2 * d + (d * ratio * d + ratio * d) +
                            (ratio * d * d + d);
  return embed + d + (n + 1) * d + depth * block + 2 * d;
}

void scramble(ViTEncoder& enc, Rng& rng) {
  for (auto& p : enc.params().items())
    for (double& v : p.value.storage()) v += rng.normal(0.0, 0.3);
}

}  // namespace

TEST(Patchify, ImageNetGeometry) {
  const auto out = patchify(Tensor({3, 224, 224}), 16);
  EXPECT_EQ(out.shape(), (Shape{196, 768}));
}

TEST(Patchify, SinglePatchIsFlattenedImage) {
  Rng rng(1);
  const Tensor img = test::random_image(rng, 16);
  const Tensor out = patchify(img, 16);
  ASSERT_EQ(out.shape(), (Shape{1, 768}));
  for (std::size_t i = 0; i < 768; ++i) EXPECT_EQ(out[i], img[i]);
}

TEST(Patchify, MatchesIndexOracleAndRoundTrips) {
  Rng rng(2);
  const Tensor img = test::random_image(rng, 8);
  const Tensor out = patchify(img, 4);
  const auto want = oracle::patches(img, 4);
  for (std::size_t n = 0; n < 4; ++n)
    for (std::size_t k = 0; k < 48; ++k) EXPECT_EQ(out(n, k), want[n][k]);
  EXPECT_TRUE(unpatchify(out, 8, 8, 4).bit_equal(img));
}

TEST(Patchify, NonDivisible) {
  EXPECT_THROW(patchify(Tensor({3, 10, 10}), 4), ShapeError);
  EXPECT_THROW(patchify(Tensor({1, 8, 8}), 4), ShapeError);
}

TEST(ViTConfig, Validation) {
  ViTConfig c;
  c.image_size = 15;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.num_heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.depth = 0;
  EXPECT_NO_THROW(c.validate());
}

TEST(ParamCount, HandCountedSmallConfig) {
  ViTConfig c{16, 16, 0, 8, 1, 4};
  // 768*8 + 8 patch embed, 8 class token, 2*8 positions, 16 final LN.
  EXPECT_EQ(param_count(c), 6192u);
  EXPECT_EQ(ViTEncoder(c, 0).params().scalar_count(), 6192u);
}

TEST(ParamCount, StandardConfigsMatchFormula) {
  for (const auto& c : {ViTConfig::vit_tiny(), ViTConfig::vit_small(), ViTConfig::vit_base()}) {
    EXPECT_EQ(param_count(c), hand_count(c.image_size, c.patch_size, c.embed_dim, c.depth, c.mlp_ratio));
  }
  EXPECT_EQ(param_count(ViTConfig::vit_tiny()), 5524416u);
}

TEST(ParamCount, LayoutMatchesEncoder) {
  ViTConfig c{16, 4, 2, 8, 2, 4};
  ViTEncoder enc(c, 3);
  const auto layout = parameter_layout(c);
  ASSERT_EQ(layout.size(), enc.params().size());
  for (std::size_t i = 0; i < layout.size(); ++i) {
    EXPECT_EQ(layout[i].name, enc.params().items()[i].name);
    EXPECT_EQ(layout[i].shape, enc.params().items()[i].value.shape());
    EXPECT_EQ(layout[i].decay, enc.params().items()[i].decay);
  }
  EXPECT_EQ(param_count(c), enc.params().scalar_count());
}

TEST(ViTEncoder, SeededInit) {
  ViTConfig c{16, 4, 1, 8, 2, 4};
  EXPECT_TRUE(ViTEncoder(c, 5).params().bit_equal(ViTEncoder(c, 5).params()));
  EXPECT_FALSE(ViTEncoder(c, 5).params().bit_equal(ViTEncoder(c, 6).params()));
  const ViTEncoder enc(c, 5);
  EXPECT_EQ(enc.params().get("blocks.0.norm1.weight").value[0], 1.0);
  EXPECT_EQ(enc.params().get("cls_token").value[0], 0.0);
}

TEST(Embed, ZeroEverythingGivesZeros) {
  ViTConfig c{16, 4, 0, 8, 2, 4};
  ViTEncoder enc(c, 0);
  for (auto& p : enc.params().items()) p.value = Tensor(p.value.shape());
  const Tensor out = enc.embed(Tensor({3, 16, 16}));
  EXPECT_EQ(out.shape(), (Shape{17, 8}));
  for (double v : out.storage()) EXPECT_EQ(v, 0.0);
}

TEST(Embed, ClassTokenIsAdditive) {
  ViTConfig c{16, 4, 0, 8, 2, 4};
  ViTEncoder enc(c, 1);
  for (double& v : enc.params().get("cls_token").value.storage()) v = 0.75;
  const Tensor out = enc.embed(Tensor({3, 16, 16}));
  const Tensor& pos = enc.params().get("pos_embed").value;
  for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(out(0, j), pos(0, j) + 0.75);
}

TEST(Embed, MatchesPerPatchOracle) {
  Rng rng(7);
  ViTConfig c{16, 4, 0, 8, 2, 4};
  ViTEncoder enc(c, 2);
  scramble(enc, rng);
  const Tensor img = test::random_image(rng, 16);
  const Tensor out = enc.embed(img);
  const auto patches = oracle::patches(img, 4);
  const auto w = oracle::to_mat(enc.params().get("patch_embed.weight").value);
  const auto& b = enc.params().get("patch_embed.bias").value.storage();
  const Tensor& pos = enc.params().get("pos_embed").value;
  for (std::size_t n = 0; n < 16; ++n) {
    for (std::size_t j = 0; j < 8; ++j) {
      double s = b[j];
      for (std::size_t k = 0; k < 48; ++k) s += patches[n][k] * w[k][j];
      EXPECT_NEAR(out(n + 1, j), s + pos(n + 1, j), 1e-12);
    }
  }
}

TEST(Encode, DepthZeroIsFinalNormOfEmbedding) {
  Rng rng(8);
  ViTConfig c{16, 4, 0, 8, 2, 4};
  ViTEncoder enc(c, 3);
  scramble(enc, rng);
  const Tensor img = test::random_image(rng, 16);
  const Tensor emb = enc.embed(img);
  const Tensor out = enc.encode(img).tokens;
  const auto& g = enc.params().get("norm.weight").value.storage();
  const auto& b = enc.params().get("norm.bias").value.storage();
  for (std::size_t n = 0; n < emb.rows(); ++n) {
    const auto want = layer_norm(emb.row(n), g, b);
    for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(out(n, j), want[j], 1e-14);
  }
}

TEST(Encode, TinyConfigMatchesNaiveTransformer) {
  Rng rng(9);
  ViTConfig c{16, 4, 2, 8, 2, 4};
  for (int rep = 0; rep < 3; ++rep) {
    ViTEncoder enc(c, 10 + rep);
    scramble(enc, rng);
    const Tensor img = test::random_image(rng, 16);
    const Tensor got = enc.encode(img).tokens;
    const auto want = oracle::vit_encode(c, enc.params(), img);
    ASSERT_EQ(got.rows(), 17u);
    for (std::size_t n = 0; n < 17; ++n)
      for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(got(n, j), want[n][j], 1e-10);
  }
}

TEST(Encode, TapeForwardMatchesEncode) {
  Rng rng(10);
  ViTConfig c{16, 4, 2, 8, 2, 4};
  ViTEncoder enc(c, 4);
  scramble(enc, rng);
  const Tensor img = test::random_image(rng, 16);
  Tape tape;
  const Tensor on_tape = tape.value(enc.forward(tape, img));
  EXPECT_TRUE(on_tape.bit_equal(enc.encode(img).tokens));
}

TEST(Encode, WrongImageShape) {
  const ViTEncoder enc(ViTConfig{}, 0);
  EXPECT_THROW(enc.encode(Tensor({3, 8, 8})), ShapeError);
}

TEST(Encode, OracleCheckOverRandomConfigs) {
  const auto r = oracle::run_encoder_oracle_check(11, 20);
  EXPECT_EQ(r.instances, 20u);
  EXPECT_LT(r.max_rel_error, 1e-10);
}
