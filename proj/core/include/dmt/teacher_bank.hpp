#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dmt/dataset.hpp"
#include "dmt/tensor.hpp"
#include "dmt/vit.hpp"

namespace dmt {

/// M frozen encoders that share image size, patch size and width, so their
/// token grids line up for fusion.
class TeacherBank {
 public:
  TeacherBank() = default;

  /// Freezes `teacher`. Throws ShapeError if its (image, patch, width)
  /// differs from the teachers already in the bank.
  void add(ViTEncoder teacher, std::string label);

  std::size_t size() const { return teachers_.size(); }
  bool empty() const { return teachers_.empty(); }
  const ViTEncoder& teacher(std::size_t i) const { return teachers_.at(i); }
  const std::string& label(std::size_t i) const { return labels_.at(i); }
  const std::vector<std::string>& labels() const { return labels_; }
  std::size_t embed_dim() const;
  std::size_t image_size() const;
  std::size_t patch_size() const;

  /// Tokens of every teacher for one view, in bank order. No gradients.
  std::vector<Tensor> forward_all(const Tensor& view) const;
  /// Batched form: result[m][b] = teacher m on views[b].
  std::vector<std::vector<Tensor>> forward_all(std::span<const Tensor> views) const;

  /// Bank restricted to the given teacher indices (in the order given).
  TeacherBank subset(std::span<const std::size_t> indices) const;

  /// Combined hash of all teacher parameters.
  std::uint64_t hash() const;

 private:
  std::vector<ViTEncoder> teachers_;
  std::vector<std::string> labels_;
};

enum class TeacherFlavor { kMaskedReconstruction, kInstanceContrastive, kRandomFrozen };

std::string to_string(TeacherFlavor flavor);
/// Accepts "masked-reconstruction", "instance-contrastive", "random-frozen".
TeacherFlavor parse_teacher_flavor(const std::string& text);
/// Short provenance label: toy-mim, toy-contrastive, toy-random.
std::string flavor_label(TeacherFlavor flavor);

/// Encoder shape used for toy teachers on the 16x16 synthetic set.
ViTConfig toy_teacher_config();

struct ToyTeacherBudget {
  std::size_t epochs = 20;
  std::size_t samples = 1024;  // first n training images; 0 = all
  std::size_t batch_size = 32;
  double base_lr = 3e-4;
  std::size_t warmup_epochs = 2;
  double weight_decay = 0.05;
  double mask_ratio = 0.75;   // masked reconstruction
  double temperature = 0.1;   // instance contrastive
};

struct ToyTeacherReport {
  std::vector<double> epoch_losses;  // mean training loss per epoch
  double initial_loss = 0.0;         // objective at init on the evaluation set
  double final_loss = 0.0;           // same evaluation after training
};

struct ToyTeacher {
  ViTEncoder encoder;
  std::string label;
  TeacherFlavor flavor;
  ToyTeacherReport report;
};

/// Trains a small encoder with a caricature of one pretraining family and
/// returns it frozen, head removed.
///   masked-reconstruction: random patches are zeroed in the input; a
///     linear head on each patch token regresses the original pixels; MSE
///     over masked patches only.
///   instance-contrastive: two augmented views per image; InfoNCE over the
///     L2-normalized class tokens of the batch, symmetric.
///   random-frozen: the seeded initialization, untrained.
/// The encoder is initialized from `seed` in every flavor.
ToyTeacher make_toy_teacher(std::uint64_t seed, TeacherFlavor flavor, const ViTConfig& config,
                            const Dataset& data, const ToyTeacherBudget& budget = {});

/// Teacher checkpoint: kind "teacher", encoder config in the config text,
/// label and flavor as attributes, parameters stored f64.
void save_teacher(const std::filesystem::path& path, const ViTEncoder& encoder, const std::string& label);
ViTEncoder load_teacher(const std::filesystem::path& path, std::string* label = nullptr);
/// Loads and freezes every teacher. Mixed widths raise CheckpointError
/// kDimMismatch, mixed image or patch sizes kResolutionMismatch.
TeacherBank load_bank(std::span<const std::filesystem::path> paths);

}  // namespace dmt
