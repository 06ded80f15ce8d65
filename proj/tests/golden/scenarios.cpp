#include "scenarios.hpp"

#include <cstdio>
#include <string>

#include "dmt/augment.hpp"
#include "dmt/dataset.hpp"
#include "dmt/teacher_bank.hpp"
#include "dmt/trainer.hpp"

namespace dmt::golden {

namespace {

std::string hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

std::uint64_t tensor_hash(const Tensor& t) { return fnv1a(t.storage().data(), t.numel() * sizeof(double)); }

std::string jitter_text(const JitterFactors& f) {
  std::string s = hex(f.brightness) + " " + hex(f.contrast) + " " + hex(f.saturation);
  for (auto op : f.order) s += " " + std::to_string(static_cast<int>(op));
  return s;
}

}  // namespace

Tensor ramp_image() {
  Tensor img({3, 8, 8});
  for (std::size_t i = 0; i < img.numel(); ++i) img[i] = static_cast<double>(i) / 191.0;
  return img;
}

KeyValueConfig compute() {
  KeyValueConfig kv;
  const Tensor img = ramp_image();

  Rng rng(0);
  const ViewPair views = make_views(img, rng, AugmentConfig{}, 8);
  const CropBox& b = views.record.crop;
  kv.set("views.crop", std::to_string(b.top) + " " + std::to_string(b.left) + " " + std::to_string(b.height) + " " +
                           std::to_string(b.width));
  kv.set("views.flipped", views.record.flipped);
  kv.set("views.student_jitter", jitter_text(views.record.student_jitter));
  kv.set("views.teacher_hash", tensor_hash(views.teacher_view));
  kv.set("views.student_hash", tensor_hash(views.student_view));

  Rng jrng(0);
  JitterFactors factors;
  const Tensor jittered = color_jitter(img, jrng, 0.4, 0.4, 0.4, &factors);
  kv.set("jitter.factors", jitter_text(factors));
  kv.set("jitter.hash", tensor_hash(jittered));

  // Tiny distillation step: two random teachers (D=16), student D'=8.
  ViTConfig tcfg{16, 4, 2, 16, 2, 4};
  TeacherBank bank;
  bank.add(ViTEncoder(tcfg, 101), "a");
  bank.add(ViTEncoder(tcfg, 102), "b");
  TrainConfig cfg;
  cfg.student = ViTConfig{16, 4, 2, 8, 2, 4};
  cfg.seed = 0;
  StudentState student = StudentState::initialize(cfg, 16);
  const Dataset data = make_synthetic_dataset(4, 0);
  std::vector<Tensor> images;
  for (std::size_t i = 0; i < data.size(); ++i) images.push_back(data.image(i));
  const std::vector<std::uint64_t> seeds{0, 1, 2, 3};
  const StepLosses l = distill_step(images, seeds, cfg.augment, bank, student, 1e-3, LossMode::kTfdSfd);
  kv.set("step.total", hex(l.total));
  kv.set("step.tfd", hex(l.token_term));
  kv.set("step.sfd", hex(l.spatial_term));
  kv.set("step.student_hash", student.encoder.params().hash());
  return kv;
}

}  // namespace dmt::golden
