#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dmt/parameter.hpp"
#include "dmt/tape.hpp"
#include "dmt/tensor.hpp"

namespace dmt {

/// Channel-major spatial view of the patch tokens: D x H' x W'.
struct FeatureMap {
  Tensor data;

  std::size_t channels() const { return data.shape()[0]; }
  std::size_t height() const { return data.shape()[1]; }
  std::size_t width() const { return data.shape()[2]; }

  /// D x N view with each channel flattened row-major over the grid.
  Tensor channel_matrix() const { return data.reshaped({channels(), height() * width()}); }
};

/// Elementwise sum of the teacher token matrices (no averaging). Each
/// element adds its M contributions in ascending value order, so the result
/// is bit-identical for every ordering of `teachers`.
Tensor fuse_tokens(std::span<const Tensor> teachers);

/// Drops the class token and lays the rest out as F[c][r][w] =
/// tokens[1 + r * width + w][c]. Requires height * width == rows - 1.
FeatureMap tokens_to_feature_map(const Tensor& tokens, std::size_t height, std::size_t width);

/// Inverse of tokens_to_feature_map for the patch rows: N x D.
Tensor feature_map_to_tokens(const FeatureMap& map);

/// Channel-wise sum of teacher maps with the same summation rule as
/// fuse_tokens.
FeatureMap fuse_features(std::span<const FeatureMap> teachers);

/// Affine projection from the student width D' to the teacher width D.
class Adapter {
 public:
  Adapter(std::size_t in_dim, std::size_t out_dim, std::uint64_t seed);
  /// Identity weight and zero bias; requires in_dim == out_dim.
  static Adapter identity(std::size_t dim);

  std::size_t in_dim() const { return weight().value.shape()[0]; }
  std::size_t out_dim() const { return weight().value.shape()[1]; }

  Parameter& weight() { return params_.items()[0]; }
  const Parameter& weight() const { return params_.items()[0]; }
  Parameter& bias() { return params_.items()[1]; }
  const Parameter& bias() const { return params_.items()[1]; }

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  explicit Adapter(ParameterSet params);

 private:
  ParameterSet params_;
};

Var adapter_project(Tape& tape, Var student_tokens, Adapter& adapter);
Tensor adapter_project(const Tensor& student_tokens, const Adapter& adapter);

/// (N+1) x D tokens -> D x N channel matrix (class token dropped), i.e. the
/// flattened FeatureMap, on the tape.
Var tokens_to_channels(Tape& tape, Var tokens);

/// Token fusion distillation: mean over all N+1 tokens (class token
/// included) of KL(softmax(student_n) || softmax(fused_n)) over channels.
Var tfd_loss(Tape& tape, Var student_tokens, const Tensor& fused_tokens);
double tfd_loss(const Tensor& student_tokens, const Tensor& fused_tokens);

/// Spatial fusion distillation: mean over the D channels of
/// KL(softmax(student_c) || softmax(fused_c)) over the N grid cells.
Var sfd_loss(Tape& tape, Var student_channels, const Tensor& fused_channels);
double sfd_loss(const FeatureMap& student_map, const FeatureMap& fused_map);

/// L = L_tfd + L_sfd, no weighting.
double total_loss(const Tensor& student_tokens, const Tensor& fused_tokens, const FeatureMap& student_map,
                  const FeatureMap& fused_map);

/// Ablation: KL terms replaced by mean squared error of the raw embeddings.
/// Token term (1/(N+1)) sum_n mean_j (s - t)^2, spatial term
/// (1/D) sum_c mean_n (s - t)^2.
struct MseTerms {
  double token = 0.0;
  double spatial = 0.0;
  double total() const { return token + spatial; }
};
MseTerms mse_loss_terms(const Tensor& student_tokens, const Tensor& fused_tokens, const FeatureMap& student_map,
                        const FeatureMap& fused_map);
double mse_loss_variant(const Tensor& student_tokens, const Tensor& fused_tokens, const FeatureMap& student_map,
                        const FeatureMap& fused_map);
Var mse_token_term(Tape& tape, Var student_tokens, const Tensor& fused_tokens);
Var mse_spatial_term(Tape& tape, Var student_channels, const Tensor& fused_channels);

enum class LossMode { kTfdSfd, kTfd, kSfd, kMse };

std::string to_string(LossMode mode);
/// Accepts "tfd+sfd", "tfd", "sfd", "mse".
LossMode parse_loss_mode(const std::string& text);

/// Fused teacher knowledge for one sample.
struct FusedTarget {
  Tensor tokens;    // (N+1) x D
  FeatureMap map;   // D x H' x W'
  std::size_t teacher_count = 0;
};

FusedTarget make_fused_target(std::span<const Tensor> teacher_tokens, std::size_t grid_height,
                              std::size_t grid_width);

/// Loss of one sample on the tape. `token_term` / `spatial_term` are the two
/// reported components (TFD and SFD, or the MSE token/spatial terms); a term
/// that the mode excludes is exactly 0 and absent from the graph.
struct DistillLoss {
  Var total;
  double token_term = 0.0;
  double spatial_term = 0.0;
};

DistillLoss distill_loss(Tape& tape, Var projected_student_tokens, const FusedTarget& target, LossMode mode);

}  // namespace dmt
