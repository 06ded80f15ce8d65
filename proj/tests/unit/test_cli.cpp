#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "dmt/binary_io.hpp"
#include "dmt/teacher_bank.hpp"
#include "dmt/trainer.hpp"
#include "dmt_cli/cli.hpp"
#include "support.hpp"

using namespace dmt;

namespace {

struct CliRun {
  int code;
  std::string out, err;
};

CliRun dmt_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "dmt");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

}  // namespace

TEST(Cli, UsageAndHelp) {
  const CliRun none = dmt_cli({});
  EXPECT_EQ(none.code, cli::kExitUsage);
  EXPECT_TRUE(contains(none.err, "distill"));
  EXPECT_EQ(dmt_cli({"--help"}).code, cli::kExitOk);
  EXPECT_EQ(dmt_cli({"distill", "--help"}).code, cli::kExitOk);
  const CliRun bad = dmt_cli({"gen-data", "--out", "x", "--bogus"});
  EXPECT_EQ(bad.code, cli::kExitUsage);
  EXPECT_TRUE(contains(bad.err, "bogus"));
  EXPECT_EQ(dmt_cli({"gen-data"}).code, cli::kExitUsage);
}

TEST(Cli, GradcheckTiny) {
  const CliRun r = dmt_cli({"gradcheck", "--tiny"});
  EXPECT_EQ(r.code, cli::kExitOk) << r.out;
  EXPECT_TRUE(contains(r.out, "all gradient checks passed"));
}

TEST(Cli, GenDataIsReproducible) {
  const auto a = test::scratch_dir("cli-data-a"), b = test::scratch_dir("cli-data-b");
  for (const auto& dir : {a, b}) {
    ASSERT_EQ(dmt_cli({"gen-data", "--out", dir.string(), "--train", "40", "--test", "20", "--seed", "3"}).code,
              cli::kExitOk);
  }
  EXPECT_EQ(read_file_bytes((a / "train.dmtd").string()), read_file_bytes((b / "train.dmtd").string()));
  EXPECT_EQ(read_dataset(a / "test.dmtd").size(), 20u);
}

TEST(Cli, InspectCheckpoint) {
  const auto dir = test::scratch_dir("cli-inspect");
  const ViTConfig cfg{16, 4, 1, 8, 2, 2};
  save_teacher(dir / "t.dmtc", ViTEncoder(cfg, 1), "toy-random");
  const CliRun r = dmt_cli({"inspect-ckpt", (dir / "t.dmtc").string()});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_TRUE(contains(r.out, "kind teacher"));
  EXPECT_TRUE(contains(r.out, "f64"));
  EXPECT_TRUE(contains(r.out, "(param_count " + std::to_string(param_count(cfg)) + ", match)"));

  auto bytes = read_file_bytes((dir / "t.dmtc").string());
  bytes.resize(bytes.size() / 2);
  write_file_bytes((dir / "half.dmtc").string(), bytes);
  const CliRun broken = dmt_cli({"inspect-ckpt", (dir / "half.dmtc").string()});
  EXPECT_EQ(broken.code, cli::kExitFailure);
  EXPECT_TRUE(contains(broken.err, "[truncated]")) << broken.err;
  EXPECT_EQ(dmt_cli({"inspect-ckpt", (dir / "missing.dmtc").string()}).code, cli::kExitFailure);
}

TEST(Cli, DistillEvalAndSweeps) {
  const auto dir = test::scratch_dir("cli-distill");
  ASSERT_EQ(dmt_cli({"gen-data", "--out", (dir / "data").string(), "--train", "32", "--test", "16"}).code,
            cli::kExitOk);
  const ViTConfig tcfg{16, 4, 1, 16, 2, 2};
  save_teacher(dir / "a.dmtc", ViTEncoder(tcfg, 1), "a");
  save_teacher(dir / "b.dmtc", ViTEncoder(tcfg, 2), "b");

  TrainConfig cfg;
  cfg.student = ViTConfig{16, 4, 1, 8, 2, 2};
  cfg.epochs = 1;
  cfg.batch_size = 16;
  cfg.probe_epochs = 10;
  cfg.dataset = (dir / "data").string();
  cfg.teachers = {(dir / "a.dmtc").string(), (dir / "b.dmtc").string()};
  {
    std::ofstream f(dir / "run.cfg");
    f << cfg.to_text();
  }

  const CliRun d = dmt_cli({"distill", "--config", (dir / "run.cfg").string(), "--out", (dir / "run").string(),
                         "--quiet"});
  ASSERT_EQ(d.code, cli::kExitOk) << d.err;
  const CliRun e = dmt_cli({"eval", "--ckpt", (dir / "run" / "final.dmtc").string(), "--data", (dir / "data").string(),
                         "--probe-epochs", "5"});
  EXPECT_EQ(e.code, cli::kExitOk) << e.err;
  EXPECT_TRUE(contains(e.out, " test "));

  const CliRun l = dmt_cli({"sweep-losses", "--config", (dir / "run.cfg").string(), "--quiet", "--out",
                         (dir / "losses.json").string()});
  ASSERT_EQ(l.code, cli::kExitOk) << l.err;
  EXPECT_TRUE(contains(l.out, "Distillation losses"));
  const CliRun t = dmt_cli({"sweep-teachers", "--config", (dir / "run.cfg").string(), "--quiet", "--subsets", "0;1;0,1"});
  ASSERT_EQ(t.code, cli::kExitOk) << t.err;
  EXPECT_TRUE(contains(t.out, "a+b"));
  EXPECT_EQ(dmt_cli({"sweep-teachers", "--config", (dir / "run.cfg").string(), "--subsets", "0;x"}).code,
            cli::kExitFailure);

  const CliRun wrong = dmt_cli({"distill", "--config", (dir / "run.cfg").string(), "--loss-mode", "kl"});
  EXPECT_EQ(wrong.code, cli::kExitFailure);
  EXPECT_EQ(dmt_cli({"distill", "--config", (dir / "none.cfg").string()}).code, cli::kExitFailure);
}
