#include "dmt/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dmt/binary_io.hpp"
#include "dmt/errors.hpp"
#include "dmt/rng.hpp"
#include "dmt/tape.hpp"

namespace dmt {

namespace {

constexpr std::uint64_t kAdapterSalt = 0x61646170746572ULL;
constexpr std::uint64_t kShuffleSalt = 0x73687566666c65ULL;
constexpr std::uint64_t kViewSalt = 0x7669657773ULL;

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    const auto e = item.find_last_not_of(" \t");
    out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::string join_list(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += ",";
    out += items[i];
  }
  return out;
}

std::set<std::string> train_config_keys() {
  std::set<std::string> keys = vit_config_keys("student");
  for (const char* k :
       {"teachers", "epochs", "batch_size", "schedule.base_lr", "schedule.warmup_epochs", "schedule.floor_lr",
        "augment.scale_min", "augment.scale_max", "augment.aspect_min", "augment.aspect_max", "augment.flip_prob",
        "augment.brightness", "augment.contrast", "augment.saturation", "augment.seed", "optim.beta1",
        "optim.beta2", "optim.eps", "optim.weight_decay", "loss_mode", "seed", "dataset", "output_dir",
        "train_samples", "save_every", "probe_epochs"}) {
    keys.insert(k);
  }
  return keys;
}

}  // namespace

void TrainConfig::validate() const {
  student.validate();
  augment.validate();
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(schedule.base_lr >= 0.0) || !(schedule.floor_lr >= 0.0) || schedule.floor_lr > schedule.base_lr) {
    throw ConfigError("schedule: need 0 <= floor_lr <= base_lr");
  }
  if (!(optim.beta1 >= 0.0 && optim.beta1 < 1.0) || !(optim.beta2 >= 0.0 && optim.beta2 < 1.0)) {
    throw ConfigError("optim: betas must lie in [0, 1)");
  }
  if (!(optim.eps > 0.0)) throw ConfigError("optim.eps must be > 0");
  if (!(optim.weight_decay >= 0.0)) throw ConfigError("optim.weight_decay must be >= 0");
}

std::string TrainConfig::to_text() const {
  KeyValueConfig kv;
  write_vit_config(kv, "student", student);
  kv.set("teachers", join_list(teachers));
  kv.set("epochs", epochs);
  kv.set("batch_size", batch_size);
  kv.set("schedule.base_lr", schedule.base_lr);
  kv.set("schedule.warmup_epochs", schedule.warmup_epochs);
  kv.set("schedule.floor_lr", schedule.floor_lr);
  kv.set("augment.scale_min", augment.scale_min);
  kv.set("augment.scale_max", augment.scale_max);
  kv.set("augment.aspect_min", augment.aspect_min);
  kv.set("augment.aspect_max", augment.aspect_max);
  kv.set("augment.flip_prob", augment.flip_prob);
  kv.set("augment.brightness", augment.brightness);
  kv.set("augment.contrast", augment.contrast);
  kv.set("augment.saturation", augment.saturation);
  kv.set("augment.seed", augment.seed);
  kv.set("optim.beta1", optim.beta1);
  kv.set("optim.beta2", optim.beta2);
  kv.set("optim.eps", optim.eps);
  kv.set("optim.weight_decay", optim.weight_decay);
  kv.set("loss_mode", to_string(loss_mode));
  kv.set("seed", seed);
  kv.set("dataset", dataset);
  kv.set("output_dir", output_dir);
  kv.set("train_samples", train_samples);
  kv.set("save_every", save_every);
  kv.set("probe_epochs", probe_epochs);
  return kv.to_text();
}

TrainConfig TrainConfig::parse(const std::string& text) {
  const KeyValueConfig kv = KeyValueConfig::parse(text);
  kv.reject_unknown(train_config_keys());
  TrainConfig c;
  c.student = read_vit_config(kv, "student", c.student);
  c.teachers = split_list(kv.get("teachers", ""));
  c.epochs = kv.get_size("epochs", c.epochs);
  c.batch_size = kv.get_size("batch_size", c.batch_size);
  c.schedule.base_lr = kv.get_double("schedule.base_lr", c.schedule.base_lr);
  c.schedule.warmup_epochs = kv.get_size("schedule.warmup_epochs", c.schedule.warmup_epochs);
  c.schedule.floor_lr = kv.get_double("schedule.floor_lr", c.schedule.floor_lr);
  c.augment.scale_min = kv.get_double("augment.scale_min", c.augment.scale_min);
  c.augment.scale_max = kv.get_double("augment.scale_max", c.augment.scale_max);
  c.augment.aspect_min = kv.get_double("augment.aspect_min", c.augment.aspect_min);
  c.augment.aspect_max = kv.get_double("augment.aspect_max", c.augment.aspect_max);
  c.augment.flip_prob = kv.get_double("augment.flip_prob", c.augment.flip_prob);
  c.augment.brightness = kv.get_double("augment.brightness", c.augment.brightness);
  c.augment.contrast = kv.get_double("augment.contrast", c.augment.contrast);
  c.augment.saturation = kv.get_double("augment.saturation", c.augment.saturation);
  c.augment.seed = kv.get_u64("augment.seed", c.augment.seed);
  c.optim.beta1 = kv.get_double("optim.beta1", c.optim.beta1);
  c.optim.beta2 = kv.get_double("optim.beta2", c.optim.beta2);
  c.optim.eps = kv.get_double("optim.eps", c.optim.eps);
  c.optim.weight_decay = kv.get_double("optim.weight_decay", c.optim.weight_decay);
  try {
    c.loss_mode = parse_loss_mode(kv.get("loss_mode", to_string(c.loss_mode)));
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  c.seed = kv.get_u64("seed", c.seed);
  c.dataset = kv.get("dataset", c.dataset);
  c.output_dir = kv.get("output_dir", c.output_dir);
  c.train_samples = kv.get_size("train_samples", c.train_samples);
  c.save_every = kv.get_size("save_every", c.save_every);
  c.probe_epochs = kv.get_size("probe_epochs", c.probe_epochs);
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

TrainConfig reference_train_config() {
  TrainConfig c;
  c.student.image_size = 16;
  c.student.patch_size = 4;
  c.student.embed_dim = 16;
  c.student.depth = 2;
  c.student.num_heads = 2;
  c.student.mlp_ratio = 4;
  c.epochs = 50;
  c.batch_size = 64;
  c.schedule.base_lr = 2e-3;
  c.schedule.warmup_epochs = 3;
  c.schedule.floor_lr = 0.0;
  return c;
}

StudentState StudentState::initialize(const TrainConfig& config, std::size_t teacher_dim) {
  config.student.validate();
  StudentState s{ViTEncoder(config.student, mix_seed(config.seed)),
                 Adapter(config.student.embed_dim, teacher_dim, mix_seed(config.seed ^ kAdapterSalt)),
                 AdamWState{config.optim, {}, {}, 0}, 0, 0};
  return s;
}

std::vector<ParameterSet*> StudentState::trainable() { return {&encoder.params(), &adapter.params()}; }

namespace {

void check_compatible(const TeacherBank& bank, const StudentState& student) {
  if (bank.empty()) throw InvalidArgument("distill: teacher bank is empty");
  const auto& sc = student.encoder.config();
  if (sc.image_size != bank.image_size() || sc.patch_size != bank.patch_size()) {
    throw ShapeError("distill: student takes " + std::to_string(sc.image_size) + "px images with " +
                     std::to_string(sc.patch_size) + "px patches, teachers use " + std::to_string(bank.image_size()) +
                     "/" + std::to_string(bank.patch_size()));
  }
  if (student.adapter.in_dim() != sc.embed_dim || student.adapter.out_dim() != bank.embed_dim()) {
    throw ShapeError("distill: adapter maps " + std::to_string(student.adapter.in_dim()) + " -> " +
                     std::to_string(student.adapter.out_dim()) + ", need " + std::to_string(sc.embed_dim) + " -> " +
                     std::to_string(bank.embed_dim()));
  }
}

FusedTarget target_for(const TeacherBank& bank, const Tensor& teacher_view) {
  const auto tokens = bank.forward_all(teacher_view);
  const std::size_t g = bank.image_size() / bank.patch_size();
  return make_fused_target(tokens, g, g);
}

}  // namespace

StepLosses distill_step(std::span<const ViewPair> views, const TeacherBank& bank, StudentState& student, double lr,
                        LossMode mode, std::size_t batch_index) {
  if (views.empty()) throw InvalidArgument("distill_step: empty batch");
  check_compatible(bank, student);
  for (auto* p : student.trainable()) p->zero_grad();
  const double inv_b = 1.0 / static_cast<double>(views.size());
  StepLosses out;
  auto abort_batch = [&](std::size_t b, const std::string& detail) {
    for (auto* p : student.trainable()) p->zero_grad();
    throw NonFiniteLoss(batch_index, "non-finite loss in batch " + std::to_string(batch_index) + ", sample " +
                                         std::to_string(b) + " (" + detail + ")");
  };
  for (std::size_t b = 0; b < views.size(); ++b) {
    Tape tape;
    DistillLoss loss;
    double total = 0.0;
    try {
      const FusedTarget target = target_for(bank, views[b].teacher_view);
      const Var tokens = student.encoder.forward(tape, views[b].student_view);
      const Var projected = adapter_project(tape, tokens, student.adapter);
      loss = distill_loss(tape, projected, target, mode);
      total = tape.value(loss.total).item();
    } catch (const NumericError& e) {
      abort_batch(b, e.what());
    }
    if (!std::isfinite(total)) {
      abort_batch(b, "token term " + std::to_string(loss.token_term) + ", spatial term " +
                         std::to_string(loss.spatial_term));
    }
    tape.backward(loss.total, inv_b);
    out.total += total;
    out.token_term += loss.token_term;
    out.spatial_term += loss.spatial_term;
  }
  out.total *= inv_b;
  out.token_term *= inv_b;
  out.spatial_term *= inv_b;
  adamw_step(student.trainable(), student.optimizer, lr);
  ++student.step;
  return out;
}

StepLosses distill_step(std::span<const Tensor> images, std::span<const std::uint64_t> view_seeds,
                        const AugmentConfig& augment, const TeacherBank& bank, StudentState& student, double lr,
                        LossMode mode, std::size_t batch_index) {
  if (images.size() != view_seeds.size()) throw InvalidArgument("distill_step: one view seed per image required");
  std::vector<ViewPair> views;
  views.reserve(images.size());
  for (std::size_t b = 0; b < images.size(); ++b) {
    Rng rng(view_seeds[b]);
    views.push_back(make_views(images[b], rng, augment, student.encoder.config().image_size));
  }
  return distill_step(views, bank, student, lr, mode, batch_index);
}

StepLosses evaluate_loss(std::span<const ViewPair> views, const TeacherBank& bank, const StudentState& student,
                         LossMode mode) {
  if (views.empty()) throw InvalidArgument("evaluate_loss: empty batch");
  check_compatible(bank, student);
  StepLosses out;
  for (const auto& v : views) {
    const FusedTarget target = target_for(bank, v.teacher_view);
    Tape tape(GradMode::kNoGrad);
    const Tensor projected = adapter_project(student.encoder.encode(v.student_view).tokens, student.adapter);
    const DistillLoss loss = distill_loss(tape, tape.constant(projected), target, mode);
    out.total += tape.value(loss.total).item();
    out.token_term += loss.token_term;
    out.spatial_term += loss.spatial_term;
  }
  const double inv_b = 1.0 / static_cast<double>(views.size());
  out.total *= inv_b;
  out.token_term *= inv_b;
  out.spatial_term *= inv_b;
  return out;
}

std::string metrics_json(const EpochMetrics& m, LossMode mode) {
  nlohmann::ordered_json j;
  j["epoch"] = m.epoch;
  j["loss"] = m.loss;
  if (mode == LossMode::kMse) {
    j["mse_token"] = m.token_term;
    j["mse_spatial"] = m.spatial_term;
  } else {
    j["tfd"] = m.token_term;
    j["sfd"] = m.spatial_term;
  }
  j["lr"] = m.lr;
  return j.dump();
}

namespace {

std::string student_prefix() { return "student."; }

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
}

class LineWriter {
 public:
  explicit LineWriter(const std::filesystem::path& path) : path_(path), out_(path, std::ios::trunc) {
    if (!out_) throw IoError("cannot open " + path.string() + " for writing");
  }
  void write(const std::string& line) {
    out_ << line << '\n';
    out_.flush();
    if (!out_) throw IoError("write failed: " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

std::string epoch_checkpoint_name(std::size_t epoch) {
  std::string digits = std::to_string(epoch);
  if (digits.size() < 4) digits.insert(0, 4 - digits.size(), '0');
  return "checkpoint-epoch" + digits + ".dmtc";
}

}  // namespace

TrainResult train(const TrainConfig& config, const TeacherBank& bank, const DatasetSplit& data,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (bank.empty()) throw InvalidArgument("train: no teachers");
  if (data.train.size() == 0) throw InvalidArgument("train: empty training set");
  if (data.train.height != config.student.image_size || data.train.width != config.student.image_size) {
    throw ShapeError("train: dataset images are " + std::to_string(data.train.height) + "x" +
                     std::to_string(data.train.width) + ", student expects " +
                     std::to_string(config.student.image_size));
  }

  const std::size_t n =
      config.train_samples == 0 ? data.train.size() : std::min(config.train_samples, data.train.size());
  std::vector<Tensor> images;
  images.reserve(n);
  for (std::size_t i = 0; i < n; ++i) images.push_back(data.train.image(i));

  TrainResult result{StudentState::initialize(config, bank.embed_dim()), {}, std::nullopt};
  StudentState& student = result.student;
  check_compatible(bank, student);

  const bool write = !config.output_dir.empty();
  const std::filesystem::path out_dir(config.output_dir);
  std::optional<LineWriter> metrics_out, timing_out;
  if (write) {
    ensure_dir(out_dir);
    metrics_out.emplace(out_dir / "metrics.jsonl");
    timing_out.emplace(out_dir / "timing.jsonl");
  }

  const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  ScheduleConfig sched = config.schedule;
  sched.total_epochs = std::max<std::size_t>(config.epochs, 1);
  sched.steps_per_epoch = steps_per_epoch;
  // A run shorter than its warmup still needs at least one decay step.
  sched.warmup_epochs = std::min(sched.warmup_epochs, sched.total_epochs - 1);

  const std::uint64_t shuffle_seed = mix_seed(config.seed ^ kShuffleSalt);
  const std::uint64_t view_seed = mix_seed(config.seed ^ kViewSalt) ^ config.augment.seed;

  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(sample_seed(shuffle_seed, epoch, 0));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.uniform_int(i)]);

    EpochMetrics m;
    m.epoch = epoch + 1;
    for (std::size_t begin = 0, batch = 0; begin < n; begin += config.batch_size, ++batch) {
      const std::size_t end = std::min(n, begin + config.batch_size);
      std::vector<Tensor> batch_images;
      std::vector<std::uint64_t> seeds;
      for (std::size_t k = begin; k < end; ++k) {
        batch_images.push_back(images[order[k]]);
        seeds.push_back(sample_seed(view_seed, epoch, order[k]));
      }
      m.lr = lr_at(student.step, sched);
      const StepLosses l = distill_step(batch_images, seeds, config.augment, bank, student, m.lr, config.loss_mode,
                                        epoch * steps_per_epoch + batch);
      const double w = static_cast<double>(end - begin);
      m.loss += l.total * w;
      m.token_term += l.token_term * w;
      m.spatial_term += l.spatial_term * w;
    }
    m.loss /= static_cast<double>(n);
    m.token_term /= static_cast<double>(n);
    m.spatial_term /= static_cast<double>(n);
    student.epoch = epoch + 1;
    m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.metrics.push_back(m);

    if (write) {
      metrics_out->write(metrics_json(m, config.loss_mode));
      nlohmann::ordered_json t;
      t["epoch"] = m.epoch;
      t["wall_seconds"] = m.wall_seconds;
      timing_out->write(t.dump());
      if (config.save_every > 0 && m.epoch % config.save_every == 0) {
        save_student(out_dir / epoch_checkpoint_name(m.epoch), config, student);
      }
    }
    if (on_epoch) on_epoch(m);
  }

  if (write) save_student(out_dir / "final.dmtc", config, student);

  if (config.probe_epochs > 0 && data.test.size() > 0) {
    ProbeOptions opts;
    opts.epochs = config.probe_epochs;
    result.probe = linear_probe(student.encoder, data.train, data.test, opts);
    if (write) {
      nlohmann::ordered_json j;
      j["probe_epochs"] = config.probe_epochs;
      j["train_accuracy"] = result.probe->train_accuracy;
      j["test_accuracy"] = result.probe->test_accuracy;
      const std::string text = j.dump(2) + "\n";
      write_file_bytes((out_dir / "probe.json").string(), std::vector<std::uint8_t>(text.begin(), text.end()));
    }
  }
  return result;
}

TrainResult train(const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (config.teachers.empty()) throw ConfigError("train: config lists no teachers");
  if (config.dataset.empty()) throw ConfigError("train: config names no dataset");
  std::vector<std::filesystem::path> paths(config.teachers.begin(), config.teachers.end());
  const TeacherBank bank = load_bank(paths);
  const DatasetSplit data = load_dataset_dir(config.dataset);
  return train(config, bank, data, on_epoch);
}

Checkpoint make_student_checkpoint(const TrainConfig& config, const StudentState& student) {
  Checkpoint ckpt;
  ckpt.kind = "student";
  ckpt.step = student.step;
  ckpt.seed = config.seed;
  ckpt.config_text = config.to_text();
  ckpt.attributes["epoch"] = std::to_string(student.epoch);
  ckpt.attributes["optimizer_step"] = std::to_string(student.optimizer.step);
  append_parameters(ckpt, student.encoder.params(), student_prefix());
  append_parameters(ckpt, student.adapter.params(), "");
  std::vector<std::string> names;
  for (const auto& p : student.encoder.params().items()) names.push_back(student_prefix() + p.name);
  for (const auto& p : student.adapter.params().items()) names.push_back(p.name);
  const auto& opt = student.optimizer;
  if (!opt.m.empty()) {
    if (opt.m.size() != names.size() || opt.v.size() != names.size()) {
      throw InvalidArgument("student checkpoint: optimizer moments do not match the parameter list");
    }
    for (std::size_t i = 0; i < names.size(); ++i) ckpt.tensors.push_back({"optim.m." + names[i], opt.m[i]});
    for (std::size_t i = 0; i < names.size(); ++i) ckpt.tensors.push_back({"optim.v." + names[i], opt.v[i]});
  }
  return ckpt;
}

void save_student(const std::filesystem::path& path, const TrainConfig& config, const StudentState& student) {
  save_checkpoint(path, make_student_checkpoint(config, student));
}

StudentState student_from_checkpoint(const Checkpoint& ckpt, TrainConfig* config_out) {
  using Kind = CheckpointError::Kind;
  if (ckpt.kind != "student") {
    throw CheckpointError(Kind::kWrongKind, "expected a student checkpoint, found kind '" + ckpt.kind + "'");
  }
  TrainConfig config;
  try {
    config = TrainConfig::parse(ckpt.config_text);
  } catch (const ConfigError& e) {
    throw CheckpointError(Kind::kCorrupt, std::string("student checkpoint: bad config: ") + e.what());
  }
  auto attr = [&](const std::string& key) -> std::uint64_t {
    const auto it = ckpt.attributes.find(key);
    if (it == ckpt.attributes.end()) throw CheckpointError(Kind::kCorrupt, "student checkpoint: missing " + key);
    try {
      return std::stoull(it->second);
    } catch (const std::exception&) {
      throw CheckpointError(Kind::kCorrupt, "student checkpoint: bad " + key + " '" + it->second + "'");
    }
  };

  ParameterSet encoder_params, adapter_params;
  std::vector<Tensor> m, v;
  for (const auto& t : ckpt.tensors) {
    if (t.name.rfind(student_prefix(), 0) == 0) {
      encoder_params.add(t.name.substr(student_prefix().size()), t.value);
    } else if (t.name.rfind("adapter.", 0) == 0) {
      adapter_params.add(t.name, t.value);
    } else if (t.name.rfind("optim.m.", 0) == 0) {
      m.push_back(t.value);
    } else if (t.name.rfind("optim.v.", 0) == 0) {
      v.push_back(t.value);
    } else {
      throw CheckpointError(Kind::kShapeMetadata, "student checkpoint: unexpected tensor " + t.name);
    }
  }
  try {
    StudentState s{ViTEncoder(config.student, std::move(encoder_params)), Adapter(std::move(adapter_params)),
                   AdamWState{config.optim, std::move(m), std::move(v), 0}, ckpt.step, 0};
    s.optimizer.step = static_cast<std::int64_t>(attr("optimizer_step"));
    s.epoch = attr("epoch");
    const std::size_t n_params = s.encoder.params().size() + s.adapter.params().size();
    if (!s.optimizer.m.empty() && (s.optimizer.m.size() != n_params || s.optimizer.v.size() != n_params)) {
      throw CheckpointError(Kind::kShapeMetadata, "student checkpoint: optimizer moments do not match parameters");
    }
    if (config_out != nullptr) *config_out = config;
    return s;
  } catch (const ShapeError& e) {
    throw CheckpointError(Kind::kShapeMetadata, std::string("student checkpoint: ") + e.what());
  }
}

StudentState load_student(const std::filesystem::path& path, TrainConfig* config_out) {
  try {
    return student_from_checkpoint(load_checkpoint(path), config_out);
  } catch (const CheckpointError& e) {
    throw CheckpointError(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace dmt
