#include "dmt/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "dmt/errors.hpp"

namespace dmt {

std::string format_delta(double points) {
  // Round first so that -0.04 prints as (+0.0), not (-0.0).
  double r = std::round(points * 10.0) / 10.0;
  if (r == 0.0) r = 0.0;
  char buf[32];
  std::snprintf(buf, sizeof buf, "(%+.1f)", r);
  return buf;
}

std::string describe_budget(const TrainConfig& config, std::size_t train_images) {
  return "desk-scale budget: " + std::to_string(config.epochs) + " epochs x " + std::to_string(train_images) +
         " images, batch " + std::to_string(config.batch_size) + ", seed " + std::to_string(config.seed);
}

const ComparisonRow& ComparisonTable::row(const std::string& name) const {
  for (const auto& r : rows) {
    if (r.name == name) return r;
  }
  throw InvalidArgument("comparison table has no row " + name);
}

std::string ComparisonTable::to_text() const {
  std::size_t w = 8;
  for (const auto& r : rows) w = std::max(w, r.name.size());
  std::string out = title + "\n" + budget + "\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-*s  %9s  %8s  %11s\n", static_cast<int>(w), "setting", "probe acc", "delta",
                "final loss");
  out += line;
  out += std::string(w + 36, '-') + "\n";
  for (const auto& r : rows) {
    const std::string delta = r.delta ? format_delta(*r.delta) : "-";
    std::snprintf(line, sizeof line, "%-*s  %9.1f  %8s  %11.6f%s\n", static_cast<int>(w), r.name.c_str(),
                  100.0 * r.probe_accuracy, delta.c_str(), r.final_loss, r.baseline ? "  [baseline]" : "");
    out += line;
  }
  if (!delta_basis.empty()) out += "delta: " + delta_basis + "\n";
  for (const auto& n : notes) out += "note: " + n + "\n";
  return out;
}

std::string ComparisonTable::to_json() const {
  nlohmann::ordered_json j;
  j["title"] = title;
  j["budget"] = budget;
  j["delta_basis"] = delta_basis;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json row;
    row["name"] = r.name;
    row["probe_accuracy"] = r.probe_accuracy;
    row["final_loss"] = r.final_loss;
    row["delta"] = r.delta ? nlohmann::ordered_json(*r.delta) : nlohmann::ordered_json(nullptr);
    row["delta_text"] = r.delta ? format_delta(*r.delta) : "";
    row["baseline"] = r.baseline;
    j["rows"].push_back(std::move(row));
  }
  j["notes"] = notes;
  return j.dump(2);
}

namespace {

ComparisonRow run_row(const std::string& name, const TrainConfig& config, const TeacherBank& bank,
                      const DatasetSplit& data, const EpochCallback& on_epoch) {
  const TrainResult r = train(config, bank, data, on_epoch);
  ComparisonRow row;
  row.name = name;
  row.final_loss = r.metrics.empty() ? 0.0 : r.metrics.back().loss;
  if (!r.probe) throw ConfigError("sweep: probe_epochs must be > 0 and the test split non-empty");
  row.probe_accuracy = r.probe->test_accuracy;
  return row;
}

std::size_t images_used(const TrainConfig& config, const DatasetSplit& data) {
  return config.train_samples == 0 ? data.train.size() : std::min(config.train_samples, data.train.size());
}

// Sweeps never write run artifacts; the caller decides what to persist.
TrainConfig sweep_config(const TrainConfig& config) {
  TrainConfig c = config;
  c.output_dir.clear();
  return c;
}

}  // namespace

std::vector<std::vector<std::size_t>> all_teacher_subsets(std::size_t m) {
  if (m == 0 || m > 16) throw InvalidArgument("all_teacher_subsets: need 1 <= m <= 16");
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t k = 1; k <= m; ++k) {
    for (std::uint32_t mask = 1; mask < (1u << m); ++mask) {
      if (static_cast<std::size_t>(__builtin_popcount(mask)) != k) continue;
      std::vector<std::size_t> s;
      for (std::size_t i = 0; i < m; ++i) {
        if (mask & (1u << i)) s.push_back(i);
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

ComparisonTable sweep_teacher_combinations(const TrainConfig& config, const TeacherBank& bank,
                                           const DatasetSplit& data,
                                           const std::vector<std::vector<std::size_t>>& subsets,
                                           const EpochCallback& on_epoch) {
  if (subsets.empty()) throw InvalidArgument("sweep: no teacher subsets");
  const TrainConfig cfg = sweep_config(config);
  ComparisonTable table;
  table.title = "Teacher combinations";
  table.budget = describe_budget(cfg, images_used(cfg, data));
  std::optional<double> best_single;
  for (const auto& subset : subsets) {
    if (subset.empty()) throw InvalidArgument("sweep: empty teacher subset");
    std::string name;
    for (std::size_t i = 0; i < subset.size(); ++i) {
      if (subset[i] >= bank.size()) throw InvalidArgument("sweep: teacher index out of range");
      name += (i > 0 ? "+" : "") + bank.label(subset[i]);
    }
    ComparisonRow row = run_row(name, cfg, bank.subset(subset), data, on_epoch);
    std::vector<std::size_t> sorted = subset;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    row.baseline = sorted.size() == bank.size();
    if (subset.size() == 1) best_single = std::max(best_single.value_or(row.probe_accuracy), row.probe_accuracy);
    table.rows.push_back(std::move(row));
  }
  if (best_single) {
    table.delta_basis = "probe accuracy minus the best single teacher, percentage points";
    for (auto& r : table.rows) r.delta = 100.0 * (r.probe_accuracy - *best_single);
  }
  return table;
}

ComparisonTable sweep_loss_modes(const TrainConfig& config, const TeacherBank& bank, const DatasetSplit& data,
                                 const EpochCallback& on_epoch) {
  ComparisonTable table;
  table.title = "Distillation losses";
  TrainConfig cfg = sweep_config(config);
  table.budget = describe_budget(cfg, images_used(cfg, data));
  for (LossMode mode : {LossMode::kTfd, LossMode::kSfd, LossMode::kTfdSfd, LossMode::kMse}) {
    cfg.loss_mode = mode;
    ComparisonRow row = run_row(to_string(mode), cfg, bank, data, on_epoch);
    row.baseline = mode == LossMode::kTfdSfd;
    table.rows.push_back(std::move(row));
  }
  const double base = table.row("tfd+sfd").probe_accuracy;
  table.delta_basis = "probe accuracy minus tfd+sfd, percentage points";
  for (auto& r : table.rows) r.delta = 100.0 * (r.probe_accuracy - base);
  const double best_part = std::max(table.row("tfd").probe_accuracy, table.row("sfd").probe_accuracy);
  table.notes.push_back(std::string("tfd+sfd >= max(tfd, sfd) on probe accuracy: ") +
                        (base >= best_part ? "holds" : "does not hold") + " at this budget (reported only)");
  return table;
}

}  // namespace dmt
