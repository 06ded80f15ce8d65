#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dmt/augment.hpp"
#include "dmt/checkpoint.hpp"
#include "dmt/config.hpp"
#include "dmt/dataset.hpp"
#include "dmt/fusion.hpp"
#include "dmt/optim.hpp"
#include "dmt/probe.hpp"
#include "dmt/teacher_bank.hpp"
#include "dmt/vit.hpp"

namespace dmt {

/// Everything a distillation run needs. Text form is KeyValueConfig with
/// keys named after the fields (student.embed_dim, schedule.base_lr, ...);
/// `teachers` is a comma-separated path list.
struct TrainConfig {
  ViTConfig student;
  std::vector<std::string> teachers;
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  /// total_epochs and steps_per_epoch are derived from `epochs`, the batch
  /// size and the dataset at train time; only the other fields are read.
  ScheduleConfig schedule;
  AugmentConfig augment;
  AdamWHyper optim;
  LossMode loss_mode = LossMode::kTfdSfd;
  std::uint64_t seed = 0;
  std::string dataset;     // directory holding train.dmtd and test.dmtd
  std::string output_dir;  // empty: nothing is written
  std::size_t train_samples = 0;  // use the first n training images; 0 = all
  std::size_t save_every = 10;    // epochs between checkpoints; 0 = final only
  std::size_t probe_epochs = 200;  // 0 skips the final linear probe

  /// Throws ConfigError on out-of-range values.
  void validate() const;
  std::string to_text() const;
  /// Unknown keys are rejected.
  static TrainConfig parse(const std::string& text);
  static TrainConfig load(const std::filesystem::path& path);
  bool operator==(const TrainConfig&) const = default;
};

/// Student settings of the desk-scale reference run: 16x16 input, p=4,
/// D'=16, two blocks, two heads; 50 epochs over the 2048-image set.
TrainConfig reference_train_config();

/// Trainable half of a run.
struct StudentState {
  ViTEncoder encoder;
  Adapter adapter;
  AdamWState optimizer;
  std::uint64_t step = 0;   // optimizer steps taken
  std::size_t epoch = 0;    // completed epochs

  /// Fresh student for `config`, adapter D' -> teacher_dim. Encoder and
  /// adapter draw from independent streams of config.seed.
  static StudentState initialize(const TrainConfig& config, std::size_t teacher_dim);
  std::vector<ParameterSet*> trainable();
};

/// Mean per-sample losses of one step (sample order ascending).
struct StepLosses {
  double total = 0.0;
  double token_term = 0.0;    // TFD, or the MSE token term
  double spatial_term = 0.0;  // SFD, or the MSE spatial term
};

/// One optimizer step on prepared view pairs: teacher views -> fused target,
/// student view -> encoder -> adapter -> loss. Gradients reach only the
/// student and adapter. A non-finite loss throws NonFiniteLoss carrying
/// `batch_index` before any parameter changes.
StepLosses distill_step(std::span<const ViewPair> views, const TeacherBank& bank, StudentState& student, double lr,
                        LossMode mode, std::size_t batch_index = 0);

/// Builds each sample's ViewPair from its own seeded stream, then steps.
StepLosses distill_step(std::span<const Tensor> images, std::span<const std::uint64_t> view_seeds,
                        const AugmentConfig& augment, const TeacherBank& bank, StudentState& student, double lr,
                        LossMode mode, std::size_t batch_index = 0);

/// Loss of the current student on prepared views without updating it.
StepLosses evaluate_loss(std::span<const ViewPair> views, const TeacherBank& bank, const StudentState& student,
                         LossMode mode);

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;
  double token_term = 0.0;
  double spatial_term = 0.0;
  double lr = 0.0;  // learning rate of the epoch's last step
  double wall_seconds = 0.0;
};

/// One NDJSON line without a trailing newline. Wall time is not included so
/// the stream is reproducible; it goes to timing.jsonl instead.
std::string metrics_json(const EpochMetrics& m, LossMode mode);

struct TrainResult {
  StudentState student;
  std::vector<EpochMetrics> metrics;
  std::optional<ProbeResult> probe;
};

/// Per-epoch callback, e.g. for progress output.
using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Runs config.epochs epochs. With an output directory it writes
/// metrics.jsonl, timing.jsonl, checkpoint-epochNNNN.dmtc every save_every
/// epochs, final.dmtc and, when probing, probe.json.
TrainResult train(const TrainConfig& config, const TeacherBank& bank, const DatasetSplit& data,
                  const EpochCallback& on_epoch = {});
/// Loads the teachers and dataset named in the config first.
TrainResult train(const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Student checkpoint: kind "student", the config text echoed, tensors
/// student.*, adapter.*, optim.m.* and optim.v.*, all f64.
Checkpoint make_student_checkpoint(const TrainConfig& config, const StudentState& student);
void save_student(const std::filesystem::path& path, const TrainConfig& config, const StudentState& student);
/// Restores config and state; `config_out` may be null.
StudentState load_student(const std::filesystem::path& path, TrainConfig* config_out = nullptr);
StudentState student_from_checkpoint(const Checkpoint& ckpt, TrainConfig* config_out = nullptr);

}  // namespace dmt
