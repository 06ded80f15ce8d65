#include "dmt/fusion.hpp"

#include <algorithm>

#include "dmt/errors.hpp"
#include "dmt/ops.hpp"
#include "dmt/rng.hpp"

namespace dmt {

namespace {

// Elementwise sum with per-element ascending-value ordering.
Tensor canonical_sum(std::span<const Tensor* const> inputs, const char* op) {
  if (inputs.empty()) throw InvalidArgument(std::string(op) + ": no teachers");
  const Tensor& first = *inputs[0];
  for (const Tensor* t : inputs) require_same_shape(first, *t, op);
  Tensor out(first.shape());
  std::vector<double> column(inputs.size());
  for (std::size_t i = 0; i < first.numel(); ++i) {
    for (std::size_t m = 0; m < inputs.size(); ++m) column[m] = (*inputs[m])[i];
    std::sort(column.begin(), column.end());
    double acc = column[0];
    for (std::size_t m = 1; m < column.size(); ++m) acc += column[m];
    out[i] = acc;
  }
  return out;
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_to_string(t.shape()));
}

}  // namespace

Tensor fuse_tokens(std::span<const Tensor> teachers) {
  std::vector<const Tensor*> ptrs;
  for (const auto& t : teachers) {
    require_matrix(t, "fuse_tokens");
    ptrs.push_back(&t);
  }
  return canonical_sum(ptrs, "fuse_tokens");
}

FeatureMap tokens_to_feature_map(const Tensor& tokens, std::size_t height, std::size_t width) {
  require_matrix(tokens, "tokens_to_feature_map");
  if (height == 0 || width == 0 || tokens.rows() != height * width + 1) {
    throw ShapeError("tokens_to_feature_map: " + std::to_string(tokens.rows()) + " tokens do not form a " +
                     std::to_string(height) + "x" + std::to_string(width) + " grid plus class token");
  }
  const std::size_t d = tokens.cols();
  Tensor map({d, height, width});
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t w = 0; w < width; ++w) {
      const auto row = tokens.row(1 + r * width + w);
      for (std::size_t c = 0; c < d; ++c) map.at(c, r, w) = row[c];
    }
  }
  return FeatureMap{std::move(map)};
}

Tensor feature_map_to_tokens(const FeatureMap& map) {
  const std::size_t d = map.channels(), h = map.height(), w = map.width();
  Tensor tokens({h * w, d});
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < d; ++c) tokens(r * w + x, c) = map.data.at(c, r, x);
    }
  }
  return tokens;
}

FeatureMap fuse_features(std::span<const FeatureMap> teachers) {
  std::vector<const Tensor*> ptrs;
  for (const auto& t : teachers) {
    if (t.data.rank() != 3) throw ShapeError("fuse_features: feature maps must be D x H' x W'");
    ptrs.push_back(&t.data);
  }
  return FeatureMap{canonical_sum(ptrs, "fuse_features")};
}

Adapter::Adapter(std::size_t in_dim, std::size_t out_dim, std::uint64_t seed) {
  if (in_dim == 0 || out_dim == 0) throw InvalidArgument("adapter: dimensions must be positive");
  Rng rng(seed);
  Tensor w({in_dim, out_dim});
  for (auto& v : w.storage()) v = rng.normal(0.0, 0.02);
  params_.add("adapter.weight", std::move(w), true);
  params_.add("adapter.bias", Tensor({out_dim}), false);
}

Adapter::Adapter(ParameterSet params) : params_(std::move(params)) {
  if (params_.size() != 2 || params_.items()[0].name != "adapter.weight" || params_.items()[1].name != "adapter.bias") {
    throw ShapeError("adapter: expected parameters adapter.weight and adapter.bias");
  }
  const auto& w = params_.items()[0].value;
  const auto& b = params_.items()[1].value;
  if (w.rank() != 2 || b.rank() != 1 || b.shape()[0] != w.shape()[1]) {
    throw ShapeError("adapter: inconsistent weight " + shape_to_string(w.shape()) + " and bias " +
                     shape_to_string(b.shape()));
  }
  params_.items()[0].decay = true;
  params_.items()[1].decay = false;
}

Adapter Adapter::identity(std::size_t dim) {
  Adapter a(dim, dim, 0);
  auto& w = a.weight().value;
  std::fill(w.storage().begin(), w.storage().end(), 0.0);
  for (std::size_t i = 0; i < dim; ++i) w(i, i) = 1.0;
  return a;
}

Var adapter_project(Tape& tape, Var student_tokens, Adapter& adapter) {
  const Tensor& s = tape.value(student_tokens);
  if (s.rank() != 2 || s.cols() != adapter.in_dim()) {
    throw ShapeError("adapter_project: tokens " + shape_to_string(s.shape()) + " do not match adapter input " +
                     std::to_string(adapter.in_dim()));
  }
  const bool trainable = !adapter.params().frozen();
  return ops::linear(tape, student_tokens, tape.parameter(adapter.weight(), !trainable),
                     tape.parameter(adapter.bias(), !trainable));
}

Tensor adapter_project(const Tensor& student_tokens, const Adapter& adapter) {
  Tape tape(GradMode::kNoGrad);
  auto& a = const_cast<Adapter&>(adapter);
  return tape.value(adapter_project(tape, tape.constant_ref(student_tokens), a));
}

Var tokens_to_channels(Tape& tape, Var tokens) {
  const Tensor& t = tape.value(tokens);
  require_matrix(t, "tokens_to_channels");
  if (t.rows() < 2) throw ShapeError("tokens_to_channels: need at least one patch token");
  return ops::transpose(tape, ops::slice_rows(tape, tokens, 1, t.rows() - 1));
}

Var tfd_loss(Tape& tape, Var student_tokens, const Tensor& fused_tokens) {
  const Tensor& s = tape.value(student_tokens);
  if (s.shape() != fused_tokens.shape()) {
    throw ShapeError("tfd_loss: student " + shape_to_string(s.shape()) + " vs fused " +
                     shape_to_string(fused_tokens.shape()));
  }
  return ops::kl_softmax_rows(tape, student_tokens, fused_tokens);
}

double tfd_loss(const Tensor& student_tokens, const Tensor& fused_tokens) {
  Tape tape(GradMode::kNoGrad);
  return tape.value(tfd_loss(tape, tape.constant_ref(student_tokens), fused_tokens)).item();
}

Var sfd_loss(Tape& tape, Var student_channels, const Tensor& fused_channels) {
  const Tensor& s = tape.value(student_channels);
  if (s.shape() != fused_channels.shape()) {
    throw ShapeError("sfd_loss: student " + shape_to_string(s.shape()) + " vs fused " +
                     shape_to_string(fused_channels.shape()));
  }
  return ops::kl_softmax_rows(tape, student_channels, fused_channels);
}

double sfd_loss(const FeatureMap& student_map, const FeatureMap& fused_map) {
  if (student_map.data.shape() != fused_map.data.shape()) {
    throw ShapeError("sfd_loss: student map " + shape_to_string(student_map.data.shape()) + " vs fused " +
                     shape_to_string(fused_map.data.shape()));
  }
  const Tensor s = student_map.channel_matrix();
  const Tensor f = fused_map.channel_matrix();
  Tape tape(GradMode::kNoGrad);
  return tape.value(sfd_loss(tape, tape.constant_ref(s), f)).item();
}

double total_loss(const Tensor& student_tokens, const Tensor& fused_tokens, const FeatureMap& student_map,
                  const FeatureMap& fused_map) {
  const double tfd = tfd_loss(student_tokens, fused_tokens);
  const double sfd = sfd_loss(student_map, fused_map);
  return tfd + sfd;
}

Var mse_token_term(Tape& tape, Var student_tokens, const Tensor& fused_tokens) {
  require_same_shape(tape.value(student_tokens), fused_tokens, "mse_token_term");
  const Var diff = ops::sub(tape, student_tokens, tape.constant(fused_tokens));
  return ops::mean(tape, ops::mul(tape, diff, diff));
}

Var mse_spatial_term(Tape& tape, Var student_channels, const Tensor& fused_channels) {
  require_same_shape(tape.value(student_channels), fused_channels, "mse_spatial_term");
  const Var diff = ops::sub(tape, student_channels, tape.constant(fused_channels));
  return ops::mean(tape, ops::mul(tape, diff, diff));
}

MseTerms mse_loss_terms(const Tensor& student_tokens, const Tensor& fused_tokens, const FeatureMap& student_map,
                        const FeatureMap& fused_map) {
  require_same_shape(student_map.data, fused_map.data, "mse_loss_variant");
  Tape tape(GradMode::kNoGrad);
  MseTerms terms;
  terms.token = tape.value(mse_token_term(tape, tape.constant_ref(student_tokens), fused_tokens)).item();
  const Tensor s = student_map.channel_matrix();
  const Tensor f = fused_map.channel_matrix();
  terms.spatial = tape.value(mse_spatial_term(tape, tape.constant_ref(s), f)).item();
  return terms;
}

double mse_loss_variant(const Tensor& student_tokens, const Tensor& fused_tokens, const FeatureMap& student_map,
                        const FeatureMap& fused_map) {
  return mse_loss_terms(student_tokens, fused_tokens, student_map, fused_map).total();
}

std::string to_string(LossMode mode) {
  switch (mode) {
    case LossMode::kTfdSfd: return "tfd+sfd";
    case LossMode::kTfd: return "tfd";
    case LossMode::kSfd: return "sfd";
    case LossMode::kMse: return "mse";
  }
  return "unknown";
}

LossMode parse_loss_mode(const std::string& text) {
  if (text == "tfd+sfd") return LossMode::kTfdSfd;
  if (text == "tfd") return LossMode::kTfd;
  if (text == "sfd") return LossMode::kSfd;
  if (text == "mse") return LossMode::kMse;
  throw ConfigError("unknown loss mode '" + text + "' (expected tfd+sfd, tfd, sfd or mse)");
}

FusedTarget make_fused_target(std::span<const Tensor> teacher_tokens, std::size_t grid_height,
                              std::size_t grid_width) {
  FusedTarget target;
  target.tokens = fuse_tokens(teacher_tokens);
  target.map = tokens_to_feature_map(target.tokens, grid_height, grid_width);
  target.teacher_count = teacher_tokens.size();
  return target;
}

DistillLoss distill_loss(Tape& tape, Var student, const FusedTarget& target, LossMode mode) {
  DistillLoss loss;
  const bool use_tokens = mode != LossMode::kSfd;
  const bool use_spatial = mode != LossMode::kTfd;
  Var token_term, spatial_term;
  if (use_tokens) {
    token_term = mode == LossMode::kMse ? mse_token_term(tape, student, target.tokens)
                                        : tfd_loss(tape, student, target.tokens);
    loss.token_term = tape.value(token_term).item();
  }
  if (use_spatial) {
    const Var channels = tokens_to_channels(tape, student);
    const Tensor fused_channels = target.map.channel_matrix();
    spatial_term = mode == LossMode::kMse ? mse_spatial_term(tape, channels, fused_channels)
                                          : sfd_loss(tape, channels, fused_channels);
    loss.spatial_term = tape.value(spatial_term).item();
  }
  if (use_tokens && use_spatial) {
    loss.total = ops::add(tape, token_term, spatial_term);
  } else {
    loss.total = use_tokens ? token_term : spatial_term;
  }
  return loss;
}

}  // namespace dmt
