#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "dmt/dataset.hpp"
#include "dmt/teacher_bank.hpp"
#include "dmt/trainer.hpp"

namespace dmt {

struct ComparisonRow {
  std::string name;
  double probe_accuracy = 0.0;  // test split, in [0, 1]
  double final_loss = 0.0;      // last-epoch mean total loss
  std::optional<double> delta;  // accuracy minus the reference, percentage points
  bool baseline = false;
};

struct ComparisonTable {
  std::string title;
  std::string budget;       // run budget, printed under the title
  std::string delta_basis;  // what `delta` is measured against
  std::vector<ComparisonRow> rows;
  std::vector<std::string> notes;

  /// Fixed-width text table; deltas print as "(+1.7)".
  std::string to_text() const;
  std::string to_json() const;
  const ComparisonRow& row(const std::string& name) const;
};

/// "(+1.7)" / "(-0.4)" / "(+0.0)": one decimal, sign always shown.
std::string format_delta(double points);

/// Human-readable budget line for a config, e.g.
/// "desk-scale budget: 50 epochs x 2048 images, batch 64, seed 0".
std::string describe_budget(const TrainConfig& config, std::size_t train_images);

/// Trains one student per subset of bank indices with the same config.
/// Rows are named by joining teacher labels with '+'. Deltas are taken
/// against the best single-teacher row (when any subset is a singleton);
/// the row using every teacher of the bank is flagged as the baseline.
ComparisonTable sweep_teacher_combinations(const TrainConfig& config, const TeacherBank& bank,
                                           const DatasetSplit& data,
                                           const std::vector<std::vector<std::size_t>>& subsets,
                                           const EpochCallback& on_epoch = {});

/// All non-empty subsets of {0..m-1}: singletons first, then pairs, ...
std::vector<std::vector<std::size_t>> all_teacher_subsets(std::size_t m);

/// Runs tfd, sfd, tfd+sfd and mse with the same config. Deltas are taken
/// against the tfd+sfd row, which is the baseline. Whether tfd+sfd reaches
/// max(tfd, sfd) is recorded as a note, not enforced.
ComparisonTable sweep_loss_modes(const TrainConfig& config, const TeacherBank& bank, const DatasetSplit& data,
                                 const EpochCallback& on_epoch = {});

}  // namespace dmt
