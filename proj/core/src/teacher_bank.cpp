#include "dmt/teacher_bank.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dmt/augment.hpp"
#include "dmt/checkpoint.hpp"
#include "dmt/config.hpp"
#include "dmt/errors.hpp"
#include "dmt/ops.hpp"
#include "dmt/optim.hpp"
#include "dmt/rng.hpp"

namespace dmt {

void TeacherBank::add(ViTEncoder teacher, std::string label) {
  if (!teachers_.empty()) {
    const auto& a = teachers_.front().config();
    const auto& b = teacher.config();
    if (a.embed_dim != b.embed_dim || a.image_size != b.image_size || a.patch_size != b.patch_size) {
      throw ShapeError("teacher bank: teacher '" + label + "' (image " + std::to_string(b.image_size) + ", patch " +
                       std::to_string(b.patch_size) + ", D " + std::to_string(b.embed_dim) +
                       ") does not match the bank (image " + std::to_string(a.image_size) + ", patch " +
                       std::to_string(a.patch_size) + ", D " + std::to_string(a.embed_dim) + ")");
    }
  }
  teacher.freeze();
  teachers_.push_back(std::move(teacher));
  labels_.push_back(std::move(label));
}

namespace {

const ViTConfig& first_config(const std::vector<ViTEncoder>& teachers) {
  if (teachers.empty()) throw InvalidArgument("teacher bank is empty");
  return teachers.front().config();
}

}  // namespace

std::size_t TeacherBank::embed_dim() const { return first_config(teachers_).embed_dim; }
std::size_t TeacherBank::image_size() const { return first_config(teachers_).image_size; }
std::size_t TeacherBank::patch_size() const { return first_config(teachers_).patch_size; }

std::vector<Tensor> TeacherBank::forward_all(const Tensor& view) const {
  const auto& cfg = first_config(teachers_);
  const Shape expected{3, cfg.image_size, cfg.image_size};
  if (view.shape() != expected) {
    throw ShapeError("teacher bank: view is " + shape_to_string(view.shape()) + ", teachers expect " +
                     shape_to_string(expected));
  }
  std::vector<Tensor> out;
  out.reserve(teachers_.size());
  for (const auto& t : teachers_) out.push_back(t.encode(view).tokens);
  return out;
}

std::vector<std::vector<Tensor>> TeacherBank::forward_all(std::span<const Tensor> views) const {
  std::vector<std::vector<Tensor>> out(teachers_.size());
  for (const auto& view : views) {
    auto tokens = forward_all(view);
    for (std::size_t m = 0; m < tokens.size(); ++m) out[m].push_back(std::move(tokens[m]));
  }
  return out;
}

TeacherBank TeacherBank::subset(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw InvalidArgument("teacher bank: empty subset");
  TeacherBank out;
  for (std::size_t i : indices) {
    if (i >= teachers_.size()) {
      throw InvalidArgument("teacher bank: index " + std::to_string(i) + " out of range (bank has " +
                            std::to_string(teachers_.size()) + ")");
    }
    out.add(teachers_[i], labels_[i]);
  }
  return out;
}

std::uint64_t TeacherBank::hash() const {
  std::uint64_t h = fnv1a(nullptr, 0);
  for (const auto& t : teachers_) {
    const std::uint64_t th = t.params().hash();
    h = fnv1a(&th, sizeof th, h);
  }
  return h;
}

std::string to_string(TeacherFlavor flavor) {
  switch (flavor) {
    case TeacherFlavor::kMaskedReconstruction: return "masked-reconstruction";
    case TeacherFlavor::kInstanceContrastive: return "instance-contrastive";
    case TeacherFlavor::kRandomFrozen: return "random-frozen";
  }
  return "unknown";
}

TeacherFlavor parse_teacher_flavor(const std::string& text) {
  if (text == "masked-reconstruction") return TeacherFlavor::kMaskedReconstruction;
  if (text == "instance-contrastive") return TeacherFlavor::kInstanceContrastive;
  if (text == "random-frozen") return TeacherFlavor::kRandomFrozen;
  throw ConfigError("unknown teacher flavor '" + text +
                        "' (expected masked-reconstruction, instance-contrastive or random-frozen)");
}

std::string flavor_label(TeacherFlavor flavor) {
  switch (flavor) {
    case TeacherFlavor::kMaskedReconstruction: return "toy-mim";
    case TeacherFlavor::kInstanceContrastive: return "toy-contrastive";
    case TeacherFlavor::kRandomFrozen: return "toy-random";
  }
  return "unknown";
}

ViTConfig toy_teacher_config() {
  ViTConfig c;
  c.image_size = 16;
  c.patch_size = 4;
  c.depth = 2;
  c.embed_dim = 32;
  c.num_heads = 2;
  c.mlp_ratio = 4;
  return c;
}

namespace {

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_int(i)]);
  return idx;
}

// Masked-patch regression for one image. Returns the per-sample loss node.
struct MaskedSample {
  Tensor masked_image;
  Tensor target;  // N x 3p^2 original patches
  Tensor mask;    // N x 3p^2, 1 on masked rows
  double count = 0.0;
};

MaskedSample mask_image(const Tensor& image, const ViTConfig& cfg, double ratio, Rng& rng) {
  const std::size_t n = cfg.num_patches();
  const auto n_masked = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(ratio * static_cast<double>(n))));
  const auto order = shuffled(n, rng);
  MaskedSample s;
  s.target = patchify(image, cfg.patch_size);
  Tensor patches = s.target;
  s.mask = Tensor({n, cfg.patch_dim()});
  for (std::size_t k = 0; k < n_masked; ++k) {
    const std::size_t r = order[k];
    for (std::size_t j = 0; j < cfg.patch_dim(); ++j) {
      patches(r, j) = 0.0;
      s.mask(r, j) = 1.0;
    }
  }
  s.masked_image = unpatchify(patches, cfg.image_size, cfg.image_size, cfg.patch_size);
  s.count = static_cast<double>(n_masked * cfg.patch_dim());
  return s;
}

Var reconstruction_loss(Tape& tape, ViTEncoder& enc, ParameterSet& head, const MaskedSample& s) {
  const auto& cfg = enc.config();
  const Var tokens = enc.forward(tape, s.masked_image);
  const Var patches = ops::slice_rows(tape, tokens, 1, cfg.num_patches());
  const Var pred = ops::linear(tape, patches, tape.parameter(head.get("head.weight")),
                               tape.parameter(head.get("head.bias")));
  const Var diff = ops::sub(tape, pred, tape.constant_ref(s.target));
  const Var sq = ops::mul(tape, ops::mul(tape, diff, diff), tape.constant_ref(s.mask));
  return ops::scale(tape, ops::sum(tape, sq), 1.0 / s.count);
}

Tensor identity_matrix(std::size_t n) {
  Tensor eye({n, n});
  for (std::size_t i = 0; i < n; ++i) eye(i, i) = 1.0;
  return eye;
}

// Symmetric InfoNCE over the class tokens of two view batches.
Var contrastive_loss(Tape& tape, ViTEncoder& enc, const std::vector<Tensor>& a, const std::vector<Tensor>& b,
                     double temperature) {
  std::vector<Var> za, zb;
  for (const auto& v : a) za.push_back(ops::slice_rows(tape, enc.forward(tape, v), 0, 1));
  for (const auto& v : b) zb.push_back(ops::slice_rows(tape, enc.forward(tape, v), 0, 1));
  const Var qa = ops::l2_normalize_rows(tape, ops::concat_rows(tape, za));
  const Var qb = ops::l2_normalize_rows(tape, ops::concat_rows(tape, zb));
  const Var logits = ops::scale(tape, ops::matmul_nt(tape, qa, qb), 1.0 / temperature);
  const Var id = tape.constant(identity_matrix(a.size()));
  const Var ab = ops::sum(tape, ops::mul(tape, ops::log_softmax_rows(tape, logits), id));
  const Var ba = ops::sum(tape, ops::mul(tape, ops::log_softmax_rows(tape, ops::transpose(tape, logits)), id));
  return ops::scale(tape, ops::add(tape, ab, ba), -0.5 / static_cast<double>(a.size()));
}

AugmentConfig contrastive_augment() {
  AugmentConfig aug;
  aug.scale_min = 0.3;
  return aug;
}

}  // namespace

ToyTeacher make_toy_teacher(std::uint64_t seed, TeacherFlavor flavor, const ViTConfig& config, const Dataset& data,
                            const ToyTeacherBudget& budget) {
  config.validate();
  ViTEncoder enc(config, seed);
  ToyTeacher out{enc, flavor_label(flavor), flavor, {}};
  if (flavor == TeacherFlavor::kRandomFrozen) {
    out.encoder.freeze();
    return out;
  }
  if (data.size() == 0) throw InvalidArgument("toy teacher: empty dataset");
  if (data.height != config.image_size || data.width != config.image_size) {
    throw ShapeError("toy teacher: dataset images are " + std::to_string(data.height) + "x" +
                     std::to_string(data.width) + ", encoder expects " + std::to_string(config.image_size));
  }
  if (budget.batch_size == 0) throw InvalidArgument("toy teacher: batch_size must be >= 1");
  if (flavor == TeacherFlavor::kInstanceContrastive && budget.batch_size < 2) {
    throw InvalidArgument("toy teacher: contrastive training needs batch_size >= 2");
  }

  const std::size_t n = budget.samples == 0 ? data.size() : std::min(budget.samples, data.size());
  std::vector<Tensor> images;
  images.reserve(n);
  for (std::size_t i = 0; i < n; ++i) images.push_back(data.image(i));

  ParameterSet head;
  if (flavor == TeacherFlavor::kMaskedReconstruction) {
    Rng hrng(mix_seed(seed ^ 0x68656164ULL));
    Tensor w({config.embed_dim, config.patch_dim()});
    for (auto& x : w.data()) x = hrng.normal(0.0, 0.02);
    head.add("head.weight", std::move(w), true);
    head.add("head.bias", Tensor({config.patch_dim()}), false);
  }

  const std::size_t steps_per_epoch = (n + budget.batch_size - 1) / budget.batch_size;
  ScheduleConfig sched;
  sched.base_lr = budget.base_lr;
  sched.warmup_epochs = std::min(budget.warmup_epochs, std::max<std::size_t>(budget.epochs, 1) - 1);
  sched.total_epochs = budget.epochs;
  sched.steps_per_epoch = steps_per_epoch;
  AdamWState opt;
  opt.hyper.weight_decay = budget.weight_decay;
  std::vector<ParameterSet*> trainable{&enc.params()};
  if (head.size() > 0) trainable.push_back(&head);

  const AugmentConfig aug = contrastive_augment();
  const std::uint64_t eval_seed = mix_seed(seed ^ 0x6576616cULL);

  // Objective on a fixed evaluation draw, no gradients.
  auto evaluate = [&]() {
    Rng rng(eval_seed);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < n; begin += budget.batch_size) {
      const std::size_t end = std::min(n, begin + budget.batch_size);
      if (flavor == TeacherFlavor::kMaskedReconstruction) {
        double sum = 0.0;
        for (std::size_t i = begin; i < end; ++i) {
          Tape tape(GradMode::kNoGrad);
          const auto s = mask_image(images[i], config, budget.mask_ratio, rng);
          sum += tape.value(reconstruction_loss(tape, enc, head, s)).item();
        }
        total += sum / static_cast<double>(end - begin);
      } else {
        if (end - begin < 2) continue;
        std::vector<Tensor> a, b;
        for (std::size_t i = begin; i < end; ++i) {
          a.push_back(make_views(images[i], rng, aug, config.image_size).student_view);
          b.push_back(make_views(images[i], rng, aug, config.image_size).student_view);
        }
        Tape tape(GradMode::kNoGrad);
        total += tape.value(contrastive_loss(tape, enc, a, b, budget.temperature)).item();
      }
      ++batches;
    }
    return total / static_cast<double>(std::max<std::size_t>(batches, 1));
  };

  out.report.initial_loss = evaluate();
  Rng rng(mix_seed(seed ^ 0x747261696eULL));
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < budget.epochs; ++epoch) {
    const auto order = shuffled(n, rng);
    double epoch_sum = 0.0;
    std::size_t epoch_batches = 0;
    for (std::size_t begin = 0; begin < n; begin += budget.batch_size, ++step) {
      const std::size_t end = std::min(n, begin + budget.batch_size);
      const std::size_t bsz = end - begin;
      enc.params().zero_grad();
      head.zero_grad();
      double loss = 0.0;
      if (flavor == TeacherFlavor::kMaskedReconstruction) {
        for (std::size_t k = begin; k < end; ++k) {
          Tape tape;
          const auto s = mask_image(images[order[k]], config, budget.mask_ratio, rng);
          const Var l = reconstruction_loss(tape, enc, head, s);
          loss += tape.value(l).item();
          tape.backward(l, 1.0 / static_cast<double>(bsz));
        }
        loss /= static_cast<double>(bsz);
      } else {
        if (bsz < 2) continue;  // a lone trailing sample has no negatives
        std::vector<Tensor> a, b;
        for (std::size_t k = begin; k < end; ++k) {
          a.push_back(make_views(images[order[k]], rng, aug, config.image_size).student_view);
          b.push_back(make_views(images[order[k]], rng, aug, config.image_size).student_view);
        }
        Tape tape;
        const Var l = contrastive_loss(tape, enc, a, b, budget.temperature);
        loss = tape.value(l).item();
        tape.backward(l);
      }
      if (!std::isfinite(loss)) throw NumericError("toy teacher: non-finite loss at step " + std::to_string(step));
      adamw_step(trainable, opt, lr_at(step, sched));
      epoch_sum += loss;
      ++epoch_batches;
    }
    out.report.epoch_losses.push_back(epoch_sum / static_cast<double>(std::max<std::size_t>(epoch_batches, 1)));
  }
  out.report.final_loss = evaluate();
  enc.params().zero_grad();
  enc.freeze();
  out.encoder = std::move(enc);
  return out;
}

void save_teacher(const std::filesystem::path& path, const ViTEncoder& encoder, const std::string& label) {
  Checkpoint ckpt;
  ckpt.kind = "teacher";
  KeyValueConfig kv;
  write_vit_config(kv, "encoder", encoder.config());
  ckpt.config_text = kv.to_text();
  ckpt.attributes["label"] = label;
  append_parameters(ckpt, encoder.params(), "");
  save_checkpoint(path, ckpt);
}

ViTEncoder load_teacher(const std::filesystem::path& path, std::string* label) {
  const Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.kind != "teacher") {
    throw CheckpointError(CheckpointError::Kind::kWrongKind,
                          path.string() + ": expected a teacher checkpoint, found kind '" + ckpt.kind + "'");
  }
  ViTConfig cfg;
  try {
    cfg = read_vit_config(KeyValueConfig::parse(ckpt.config_text), "encoder");
  } catch (const ConfigError& e) {
    throw CheckpointError(CheckpointError::Kind::kCorrupt, path.string() + ": bad encoder config: " + e.what());
  }
  try {
    ViTEncoder enc(cfg, extract_parameters(ckpt, ""));
    enc.freeze();
    if (label != nullptr) {
      const auto it = ckpt.attributes.find("label");
      *label = it == ckpt.attributes.end() ? path.stem().string() : it->second;
    }
    return enc;
  } catch (const ShapeError& e) {
    throw CheckpointError(CheckpointError::Kind::kShapeMetadata, path.string() + ": " + e.what());
  }
}

TeacherBank load_bank(std::span<const std::filesystem::path> paths) {
  if (paths.empty()) throw InvalidArgument("load_bank: no teacher paths given");
  TeacherBank bank;
  for (const auto& p : paths) {
    std::string label;
    ViTEncoder enc = load_teacher(p, &label);
    if (!bank.empty()) {
      const auto& c = enc.config();
      if (c.image_size != bank.image_size() || c.patch_size != bank.patch_size()) {
        throw CheckpointError(CheckpointError::Kind::kResolutionMismatch,
                              p.string() + ": teacher takes " + std::to_string(c.image_size) + "px images with " +
                                  std::to_string(c.patch_size) + "px patches, bank uses " +
                                  std::to_string(bank.image_size()) + "/" + std::to_string(bank.patch_size()));
      }
      if (c.embed_dim != bank.embed_dim()) {
        throw CheckpointError(CheckpointError::Kind::kDimMismatch,
                              p.string() + ": teacher width D=" + std::to_string(c.embed_dim) +
                                  " differs from the bank's D=" + std::to_string(bank.embed_dim()));
      }
    }
    bank.add(std::move(enc), std::move(label));
  }
  return bank;
}

}  // namespace dmt
