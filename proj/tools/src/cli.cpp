#include "dmt_cli/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dmt/checkpoint.hpp"
#include "dmt/config.hpp"
#include "dmt/dataset.hpp"
#include "dmt/errors.hpp"
#include "dmt/grad_suite.hpp"
#include "dmt/probe.hpp"
#include "dmt/rng.hpp"
#include "dmt/sweep.hpp"
#include "dmt/teacher_bank.hpp"
#include "dmt/trainer.hpp"

namespace dmt::cli {

namespace {

namespace fs = std::filesystem;

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

struct Options {
  std::uint64_t seed = 0;
  bool seed_given = false;

  // gen-data
  std::string out;
  std::size_t n_train = 2048;
  std::size_t n_test = 512;

  // make-teachers
  std::string data;
  std::vector<std::string> flavors{"masked-reconstruction", "instance-contrastive", "random-frozen"};
  std::size_t teacher_epochs = ToyTeacherBudget{}.epochs;
  std::size_t teacher_samples = ToyTeacherBudget{}.samples;
  std::size_t teacher_dim = 32;

  // distill / sweeps
  std::string config;
  std::string teachers;
  std::string loss_mode;
  std::size_t epochs = 0;
  bool epochs_given = false;
  std::string subsets;
  bool quiet = false;

  // eval
  std::string ckpt;
  std::size_t probe_epochs = 200;

  // gradcheck
  bool tiny = false;
};

TrainConfig load_run_config(const Options& o) {
  TrainConfig c = TrainConfig::load(o.config);
  if (o.seed_given) c.seed = o.seed;
  if (!o.out.empty()) c.output_dir = o.out;
  if (!o.data.empty()) c.dataset = o.data;
  if (!o.teachers.empty()) c.teachers = split(o.teachers, ',');
  if (!o.loss_mode.empty()) c.loss_mode = parse_loss_mode(o.loss_mode);
  if (o.epochs_given) c.epochs = o.epochs;
  c.validate();
  return c;
}

EpochCallback progress(std::ostream& out, const TrainConfig& c, bool quiet, const std::string& tag = "") {
  if (quiet) return {};
  const bool mse = c.loss_mode == LossMode::kMse;
  return [&out, c, mse, tag](const EpochMetrics& m) {
    out << tag << "epoch " << m.epoch << "/" << c.epochs << " loss " << fmt("%.6f", m.loss)
        << (mse ? " mse_token " : " tfd ") << fmt("%.6f", m.token_term) << (mse ? " mse_spatial " : " sfd ")
        << fmt("%.6f", m.spatial_term) << " lr " << fmt("%.3e", m.lr) << "\n";
    out.flush();
  };
}

int cmd_gen_data(const Options& o, std::ostream& out) {
  generate_dataset_files(o.out, o.n_train, o.n_test, o.seed);
  out << "wrote " << (fs::path(o.out) / "train.dmtd").string() << " (" << o.n_train << " records) and "
      << (fs::path(o.out) / "test.dmtd").string() << " (" << o.n_test << " records), seed " << o.seed << "\n";
  return kExitOk;
}

int cmd_make_teachers(const Options& o, std::ostream& out) {
  const Dataset train = load_dataset_dir(o.data).train;
  ViTConfig cfg = toy_teacher_config();
  cfg.embed_dim = o.teacher_dim;
  cfg.image_size = train.height;
  cfg.validate();
  ToyTeacherBudget budget;
  budget.epochs = o.teacher_epochs;
  budget.samples = o.teacher_samples;
  std::error_code ec;
  fs::create_directories(o.out, ec);
  if (ec) throw IoError("cannot create directory " + o.out + ": " + ec.message());
  std::vector<std::string> written;
  for (std::size_t m = 0; m < o.flavors.size(); ++m) {
    const TeacherFlavor flavor = parse_teacher_flavor(o.flavors[m]);
    const ToyTeacher t = make_toy_teacher(sample_seed(o.seed, 0, m), flavor, cfg, train, budget);
    const fs::path path = fs::path(o.out) / (t.label + ".dmtc");
    save_teacher(path, t.encoder, t.label);
    out << t.label << " (" << to_string(flavor) << "): ";
    if (flavor == TeacherFlavor::kRandomFrozen) {
      out << "untrained";
    } else {
      out << "objective " << fmt("%.6f", t.report.initial_loss) << " -> " << fmt("%.6f", t.report.final_loss);
    }
    out << ", wrote " << path.string() << "\n";
    written.push_back(path.string());
  }
  std::string list;
  for (const auto& w : written) list += (list.empty() ? "" : ",") + w;
  out << "teachers=" << list << "\n";
  return kExitOk;
}

int cmd_distill(const Options& o, std::ostream& out) {
  const TrainConfig c = load_run_config(o);
  const TrainResult r = train(c, progress(out, c, o.quiet));
  if (!r.metrics.empty()) out << "final loss " << fmt("%.6f", r.metrics.back().loss) << "\n";
  if (r.probe) {
    out << "linear probe: train " << fmt("%.4f", r.probe->train_accuracy) << " test "
        << fmt("%.4f", r.probe->test_accuracy) << "\n";
  }
  if (!c.output_dir.empty()) out << "wrote " << (fs::path(c.output_dir) / "final.dmtc").string() << "\n";
  return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(o.ckpt);
  const DatasetSplit data = load_dataset_dir(o.data);
  ProbeOptions opts;
  opts.epochs = o.probe_epochs;
  ProbeResult r;
  if (ckpt.kind == "teacher") {
    r = linear_probe(load_teacher(o.ckpt), data.train, data.test, opts);
  } else {
    r = linear_probe(student_from_checkpoint(ckpt).encoder, data.train, data.test, opts);
  }
  out << "kind " << ckpt.kind << " step " << ckpt.step << "\n";
  out << "linear probe (" << o.probe_epochs << " epochs): train " << fmt("%.4f", r.train_accuracy) << " test "
      << fmt("%.4f", r.test_accuracy) << "\n";
  return kExitOk;
}

std::vector<std::vector<std::size_t>> parse_subsets(const std::string& text, std::size_t m) {
  if (text.empty()) return all_teacher_subsets(m);
  std::vector<std::vector<std::size_t>> out;
  for (const auto& group : split(text, ';')) {
    std::vector<std::size_t> s;
    for (const auto& idx : split(group, ',')) {
      std::size_t pos = 0;
      const unsigned long v = std::stoul(idx, &pos);
      if (pos != idx.size()) throw InvalidArgument("--subsets: bad index '" + idx + "'");
      s.push_back(v);
    }
    out.push_back(std::move(s));
  }
  return out;
}

void emit_table(const ComparisonTable& table, const Options& o, std::ostream& out) {
  out << table.to_text();
  if (!o.out.empty()) {
    write_text(o.out, table.to_json() + "\n");
    out << "wrote " << o.out << "\n";
  }
}

int cmd_sweep_teachers(const Options& o, std::ostream& out) {
  Options run = o;
  run.out.clear();
  TrainConfig c = load_run_config(run);
  std::vector<fs::path> paths(c.teachers.begin(), c.teachers.end());
  const TeacherBank bank = load_bank(paths);
  const DatasetSplit data = load_dataset_dir(c.dataset);
  const auto table = sweep_teacher_combinations(c, bank, data, parse_subsets(o.subsets, bank.size()),
                                                progress(out, c, o.quiet, "  "));
  emit_table(table, o, out);
  return kExitOk;
}

int cmd_sweep_losses(const Options& o, std::ostream& out) {
  Options run = o;
  run.out.clear();
  TrainConfig c = load_run_config(run);
  std::vector<fs::path> paths(c.teachers.begin(), c.teachers.end());
  const TeacherBank bank = load_bank(paths);
  const DatasetSplit data = load_dataset_dir(c.dataset);
  emit_table(sweep_loss_modes(c, bank, data, progress(out, c, o.quiet, "  ")), o, out);
  return kExitOk;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  bool ok = true;
  for (const auto& r : run_gradient_suites(o.seed)) {
    out << r.component << ": max relative error " << fmt("%.3e", r.report.max_rel_error) << " over "
        << r.report.entries_checked << " entries " << (r.report.passed ? "PASS" : "FAIL") << "\n";
    ok = ok && r.report.passed;
  }
  out << (ok ? "all gradient checks passed" : "gradient check FAILED") << "\n";
  return ok ? kExitOk : kExitFailure;
}

int cmd_inspect(const Options& o, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(o.ckpt);
  out << "file " << o.ckpt << "\n";
  out << "format version " << kCheckpointVersion << "\n";
  out << "kind " << ckpt.kind << "\n";
  out << "step " << ckpt.step << "\n";
  out << "seed " << ckpt.seed << "\n";
  for (const auto& [k, v] : ckpt.attributes) out << k << " " << v << "\n";
  std::size_t w = 4;
  for (const auto& t : ckpt.tensors) w = std::max(w, t.name.size());
  out << "tensors " << ckpt.tensors.size() << "\n";
  for (const auto& t : ckpt.tensors) {
    std::string name = t.name;
    name.resize(w, ' ');
    out << "  " << name << "  " << to_string(t.dtype) << "  " << shape_to_string(t.value.shape()) << "\n";
  }
  std::size_t model = 0, encoder = 0;
  for (const auto& t : ckpt.tensors) {
    if (t.name.rfind("optim.", 0) == 0) continue;
    model += t.value.numel();
    if (ckpt.kind == "teacher" || t.name.rfind("student.", 0) == 0) encoder += t.value.numel();
  }
  out << "total scalars " << ckpt.scalar_count() << "\n";
  out << "parameters " << model << "\n";
  if (ckpt.kind == "teacher" || ckpt.kind == "student") {
    ViTConfig cfg;
    if (ckpt.kind == "teacher") {
      cfg = read_vit_config(KeyValueConfig::parse(ckpt.config_text), "encoder");
    } else {
      cfg = TrainConfig::parse(ckpt.config_text).student;
    }
    const std::size_t expected = param_count(cfg);
    out << "encoder parameters " << encoder << " (param_count " << expected << ", "
        << (encoder == expected ? "match" : "MISMATCH") << ")\n";
    if (encoder != expected) {
      throw CheckpointError(CheckpointError::Kind::kShapeMetadata,
                            "encoder parameter count disagrees with the config");
    }
  }
  return kExitOk;
}

void add_seed(CLI::App* sub, Options& o) {
  sub->add_option("--seed", o.seed, "Random seed")->each([&o](const std::string&) { o.seed_given = true; });
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Multi-teacher feature distillation toolkit", "dmt"};
  app.require_subcommand(1, 1);
  app.fallthrough(false);

  auto* gen = app.add_subcommand("gen-data", "Write the synthetic train/test dataset files");
  gen->add_option("--out", o.out, "Output directory")->required();
  gen->add_option("--train", o.n_train, "Training records")->check(CLI::PositiveNumber);
  gen->add_option("--test", o.n_test, "Test records")->check(CLI::PositiveNumber);
  add_seed(gen, o);

  auto* mk = app.add_subcommand("make-teachers", "Train and save the toy teacher encoders");
  mk->add_option("--data", o.data, "Dataset directory")->required();
  mk->add_option("--out", o.out, "Output directory")->required();
  mk->add_option("--flavors", o.flavors, "Teacher flavors")->delimiter(',');
  mk->add_option("--epochs", o.teacher_epochs, "Training epochs per teacher");
  mk->add_option("--samples", o.teacher_samples, "Training images per teacher (0 = all)");
  mk->add_option("--embed-dim", o.teacher_dim, "Teacher width D")->check(CLI::PositiveNumber);
  add_seed(mk, o);

  auto* distill = app.add_subcommand("distill", "Distill a student from a teacher bank");
  distill->add_option("--config", o.config, "Run config file (key=value)")->required();
  distill->add_option("--out", o.out, "Output directory (overrides output_dir)");
  distill->add_option("--data", o.data, "Dataset directory (overrides dataset)");
  distill->add_option("--teachers", o.teachers, "Comma-separated teacher checkpoints (overrides teachers)");
  distill->add_option("--loss-mode", o.loss_mode, "tfd+sfd, tfd, sfd or mse (overrides loss_mode)");
  distill->add_option("--epochs", o.epochs, "Epochs (overrides epochs)")->each([&o](const std::string&) {
    o.epochs_given = true;
  });
  distill->add_flag("--quiet", o.quiet, "No per-epoch output");
  add_seed(distill, o);

  auto* eval = app.add_subcommand("eval", "Linear-probe an encoder checkpoint");
  eval->add_option("--ckpt", o.ckpt, "Student or teacher checkpoint")->required();
  eval->add_option("--data", o.data, "Dataset directory")->required();
  eval->add_option("--probe-epochs", o.probe_epochs, "Probe optimizer steps")->check(CLI::PositiveNumber);
  add_seed(eval, o);

  CLI::App* sweeps[2] = {
      app.add_subcommand("sweep-teachers", "Compare teacher subsets at a fixed budget"),
      app.add_subcommand("sweep-losses", "Compare tfd, sfd, tfd+sfd and mse at a fixed budget"),
  };
  for (auto* s : sweeps) {
    s->add_option("--config", o.config, "Run config file (key=value)")->required();
    s->add_option("--out", o.out, "Write the table as JSON to this file");
    s->add_option("--data", o.data, "Dataset directory (overrides dataset)");
    s->add_option("--teachers", o.teachers, "Comma-separated teacher checkpoints (overrides teachers)");
    s->add_option("--epochs", o.epochs, "Epochs per run (overrides epochs)")->each([&o](const std::string&) {
      o.epochs_given = true;
    });
    s->add_flag("--quiet", o.quiet, "No per-epoch output");
    add_seed(s, o);
  }
  sweeps[0]->add_option("--subsets", o.subsets, "Teacher index groups, e.g. \"0;1;2;0,1,2\" (default: all)");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  grad->add_flag("--tiny", o.tiny, "Use the tiny configuration")->required();
  add_seed(grad, o);

  auto* inspect = app.add_subcommand("inspect-ckpt", "Print a checkpoint summary");
  inspect->add_option("path", o.ckpt, "Checkpoint file")->required();
  add_seed(inspect, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << "dmt 0.1.0\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (argc > 1) err << "error: " << e.what() << "\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(o, out);
    if (mk->parsed()) return cmd_make_teachers(o, out);
    if (distill->parsed()) return cmd_distill(o, out);
    if (eval->parsed()) return cmd_eval(o, out);
    if (sweeps[0]->parsed()) return cmd_sweep_teachers(o, out);
    if (sweeps[1]->parsed()) return cmd_sweep_losses(o, out);
    if (grad->parsed()) return cmd_gradcheck(o, out);
    if (inspect->parsed()) return cmd_inspect(o, out);
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << " [" << to_string(e.kind()) << "]\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace dmt::cli
