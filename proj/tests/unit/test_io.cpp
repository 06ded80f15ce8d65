#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "dmt/binary_io.hpp"
#include "dmt/checkpoint.hpp"
#include "dmt/config.hpp"
#include "dmt/dataset.hpp"
#include "dmt/errors.hpp"
#include "dmt/trainer.hpp"
#include "support.hpp"

using namespace dmt;

namespace {

CheckpointError::Kind parse_error_kind(const std::vector<std::uint8_t>& bytes) {
  try {
    parse_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "checkpoint parsed without error";
  return CheckpointError::Kind::kCorrupt;
}

Checkpoint sample_checkpoint() {
  Rng rng(1);
  Checkpoint c;
  c.kind = "test";
  c.step = 42;
  c.seed = 7;
  c.config_text = "a=1\nb=two\n";
  c.attributes["note"] = "hello";
  c.tensors.push_back({"x", test::random_tensor(rng, {10}), DType::kF64});
  c.tensors.push_back({"y", test::random_tensor(rng, {2, 3}), DType::kF32});
  return c;
}

}  // namespace

TEST(Dataset, RoundTripAndPixelScale) {
  const auto dir = test::scratch_dir("dataset-rt");
  const Dataset d = make_synthetic_dataset(5, 3);
  write_dataset(dir / "d.dmtd", d);
  const Dataset r = read_dataset(dir / "d.dmtd");
  EXPECT_EQ(r.labels, d.labels);
  EXPECT_EQ(r.pixels, d.pixels);
  EXPECT_EQ(r.height, 16);
  const Tensor img = r.image(2);
  EXPECT_EQ(img.shape(), (Shape{3, 16, 16}));
  // Stored interleaved (y, x, c); the tensor is channel-major.
  EXPECT_EQ(img.at(1, 3, 4), r.pixels[2 * r.record_bytes() + (3 * 16 + 4) * 3 + 1] / 255.0);
}

TEST(Dataset, FileLayout) {
  const auto dir = test::scratch_dir("dataset-layout");
  generate_dataset_files(dir, 1, 2, 0);
  const auto bytes = read_file_bytes((dir / "train.dmtd").string());
  ASSERT_EQ(bytes.size(), 4u + 4 + 4 + 2 + 2 + (1 + 16 * 16 * 3));
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "DMTD");
  EXPECT_EQ(io::get_le(bytes.data() + 4, 4), 1u);
  EXPECT_EQ(io::get_le(bytes.data() + 8, 4), 1u);
  EXPECT_EQ(io::get_le(bytes.data() + 12, 2), 16u);
  EXPECT_EQ(read_dataset(dir / "test.dmtd").size(), 2u);
}

TEST(Dataset, SameSeedSameBytes) {
  const auto a = test::scratch_dir("dataset-a"), b = test::scratch_dir("dataset-b");
  generate_dataset_files(a, 64, 16, 5);
  generate_dataset_files(b, 64, 16, 5);
  EXPECT_EQ(read_file_bytes((a / "train.dmtd").string()), read_file_bytes((b / "train.dmtd").string()));
  EXPECT_EQ(read_file_bytes((a / "test.dmtd").string()), read_file_bytes((b / "test.dmtd").string()));
  EXPECT_THROW(generate_dataset_files(a, 0, 1, 0), InvalidArgument);
}

TEST(Dataset, ClassHistogramWithinThreeSigma) {
  const Dataset d = make_synthetic_dataset(2048, 11);
  std::array<int, 4> counts{};
  for (auto l : d.labels) ++counts.at(l);
  const double mean = 2048 / 4.0, sigma = std::sqrt(2048 * 0.25 * 0.75);
  for (int c : counts) EXPECT_LT(std::abs(c - mean), 3 * sigma) << c;
  EXPECT_EQ(d.num_classes(), 4u);
}

TEST(Dataset, RejectsBadFiles) {
  const auto dir = test::scratch_dir("dataset-bad");
  write_dataset(dir / "d.dmtd", make_synthetic_dataset(3, 0));
  auto bytes = read_file_bytes((dir / "d.dmtd").string());
  bytes.pop_back();
  write_file_bytes((dir / "short.dmtd").string(), bytes);
  EXPECT_THROW(read_dataset(dir / "short.dmtd"), IoError);
  bytes[0] = 'X';
  write_file_bytes((dir / "magic.dmtd").string(), bytes);
  EXPECT_THROW(read_dataset(dir / "magic.dmtd"), IoError);
  EXPECT_THROW(read_dataset(dir / "missing.dmtd"), IoError);
}

TEST(Checkpoint, RoundTripBitExact) {
  const Checkpoint c = sample_checkpoint();
  const Checkpoint r = parse_checkpoint(serialize_checkpoint(c));
  EXPECT_EQ(r.kind, c.kind);
  EXPECT_EQ(r.step, 42u);
  EXPECT_EQ(r.seed, 7u);
  EXPECT_EQ(r.config_text, c.config_text);
  EXPECT_EQ(r.attributes, c.attributes);
  ASSERT_EQ(r.tensors.size(), 2u);
  EXPECT_TRUE(r.get("x").value.bit_equal(c.get("x").value));
  EXPECT_EQ(r.get("y").dtype, DType::kF32);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(r.get("y").value[i], static_cast<double>(static_cast<float>(c.get("y").value[i])));
  }
  // A second trip is stable byte for byte.
  EXPECT_EQ(serialize_checkpoint(r), serialize_checkpoint(parse_checkpoint(serialize_checkpoint(r))));
}

TEST(Checkpoint, HeaderLayout) {
  const auto bytes = serialize_checkpoint(sample_checkpoint());
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "DMTC");
  EXPECT_EQ(io::get_le(bytes.data() + 4, 4), kCheckpointVersion);
  const auto meta_len = io::get_le(bytes.data() + 8, 8);
  EXPECT_EQ(bytes[16], '{');
  EXPECT_EQ(bytes.size(), 16 + meta_len + 10 * 8 + 6 * 4);
}

TEST(Checkpoint, DistinctErrors) {
  const auto good = serialize_checkpoint(sample_checkpoint());
  using K = CheckpointError::Kind;

  auto magic = good;
  magic[1] ^= 0x01;
  EXPECT_EQ(parse_error_kind(magic), K::kMagicMismatch);

  auto version = good;
  version[4] = 2;
  EXPECT_EQ(parse_error_kind(version), K::kVersionMismatch);

  // Last tensor is f32: drop one element from its payload.
  auto short_payload = good;
  short_payload.resize(good.size() - 4);
  EXPECT_EQ(parse_error_kind(short_payload), K::kTruncated);

  auto long_payload = good;
  long_payload.push_back(0);
  EXPECT_EQ(parse_error_kind(long_payload), K::kShapeMetadata);

  auto header = good;
  header.resize(10);
  EXPECT_EQ(parse_error_kind(header), K::kTruncated);

  auto json = good;
  json[16] = '[';
  EXPECT_EQ(parse_error_kind(json), K::kCorrupt);
}

TEST(Checkpoint, TenDeclaredNinePresent) {
  Checkpoint c;
  c.kind = "test";
  c.tensors.push_back({"x", Tensor({10}), DType::kF64});
  auto bytes = serialize_checkpoint(c);
  bytes.resize(bytes.size() - 8);
  EXPECT_EQ(parse_error_kind(bytes), CheckpointError::Kind::kTruncated);
}

TEST(Checkpoint, FileRoundTripAndMissingFile) {
  const auto dir = test::scratch_dir("ckpt-file");
  save_checkpoint(dir / "c.dmtc", sample_checkpoint());
  EXPECT_EQ(load_checkpoint(dir / "c.dmtc").step, 42u);
  EXPECT_THROW(load_checkpoint(dir / "none.dmtc"), IoError);
}

TEST(Checkpoint, ParameterPrefixes) {
  ParameterSet ps;
  ps.add("a", Tensor({2}, {1, 2}));
  ps.add("b", Tensor({1}, {3}), false);
  Checkpoint c;
  append_parameters(c, ps, "enc.");
  c.tensors.push_back({"other", Tensor({1}), DType::kF64});
  const ParameterSet back = extract_parameters(parse_checkpoint(serialize_checkpoint(c)), "enc.");
  EXPECT_TRUE(back.bit_equal(ps));
  EXPECT_EQ(back.size(), 2u);
}

TEST(Config, ParseRules) {
  const auto kv = KeyValueConfig::parse("# comment\n\n a.b = 1.5 \nname=x y\nflag=true\n");
  EXPECT_EQ(kv.get("a.b"), "1.5");
  EXPECT_EQ(kv.get("name"), "x y");
  EXPECT_DOUBLE_EQ(kv.get_double("a.b", 0.0), 1.5);
  EXPECT_TRUE(kv.get_bool("flag", false));
  EXPECT_EQ(kv.get_size("missing", 9), 9u);
  EXPECT_THROW(kv.get("missing"), ConfigError);
  EXPECT_THROW(KeyValueConfig::parse("a=1\na=2\n"), ConfigError);
  EXPECT_THROW(KeyValueConfig::parse("novalue\n"), ConfigError);
  EXPECT_THROW(KeyValueConfig::parse("=3\n"), ConfigError);
  EXPECT_THROW(KeyValueConfig::parse("n=-1\n").get_size("n", 0), ConfigError);
  EXPECT_THROW(KeyValueConfig::parse("x=nan\n").get_double("x", 0), ConfigError);
  EXPECT_THROW(kv.reject_unknown({"a.b", "name"}), ConfigError);
  EXPECT_NO_THROW(kv.reject_unknown({"a.b", "name", "flag"}));
}

TEST(Config, FormatDoubleRoundTrips) {
  for (double v : {0.1, 1.5e-4, 2.0 / 3.0, 1e300, -0.0, 123456789.0, std::numeric_limits<double>::min()}) {
    const std::string s = format_double(v);
    EXPECT_EQ(std::stod(s), v) << s;
  }
  EXPECT_EQ(format_double(1.5e-4), "0.00015");
}

TEST(Config, TrainConfigRoundTrip) {
  TrainConfig c = reference_train_config();
  c.teachers = {"a.dmtc", "b.dmtc"};
  c.dataset = "data";
  c.schedule.base_lr = 1.0 / 3.0;
  c.augment.seed = 99;
  c.loss_mode = LossMode::kMse;
  const TrainConfig back = TrainConfig::parse(c.to_text());
  EXPECT_EQ(back, c);
  EXPECT_EQ(back.to_text(), c.to_text());
  EXPECT_THROW(TrainConfig::parse(c.to_text() + "mystery=1\n"), ConfigError);
  EXPECT_THROW(TrainConfig::parse("batch_size=0\n"), ConfigError);
}

TEST(Config, VitSectionRoundTrip) {
  KeyValueConfig kv;
  write_vit_config(kv, "student", ViTConfig::vit_small());
  EXPECT_EQ(read_vit_config(kv, "student"), ViTConfig::vit_small());
  EXPECT_EQ(vit_config_keys("student").size(), kv.entries().size());
}
