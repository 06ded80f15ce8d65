#include "dmt/augment.hpp"

#include <algorithm>
#include <cmath>

#include "dmt/errors.hpp"

namespace dmt {

void AugmentConfig::validate() const {
  if (!(scale_min > 0.0 && scale_min <= scale_max && scale_max <= 1.0)) {
    throw ConfigError("augment: need 0 < scale_min <= scale_max <= 1");
  }
  if (!(aspect_min > 0.0 && aspect_min <= aspect_max)) throw ConfigError("augment: invalid aspect range");
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ConfigError("augment: flip_prob must be in [0, 1]");
  if (!(brightness >= 0.0 && contrast >= 0.0 && saturation >= 0.0)) {
    throw ConfigError("augment: jitter strengths must be non-negative");
  }
}

static void require_image(const Tensor& image, const char* op) {
  if (image.rank() != 3 || image.shape()[0] != 3) {
    throw ShapeError(std::string(op) + ": expected a 3 x H x W image, got " + shape_to_string(image.shape()));
  }
}

CropBox sample_crop_box(std::size_t height, std::size_t width, Rng& rng, double scale_min, double scale_max,
                        double aspect_min, double aspect_max) {
  if (height < 2 || width < 2) throw InvalidArgument("random_resized_crop: source smaller than 2x2");
  const double area = static_cast<double>(height * width);
  const double log_lo = std::log(aspect_min), log_hi = std::log(aspect_max);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * rng.uniform(scale_min, scale_max);
    const double aspect = std::exp(rng.uniform(log_lo, log_hi));
    const long w = std::lround(std::sqrt(target * aspect));
    const long h = std::lround(std::sqrt(target / aspect));
    if (w > 0 && h > 0 && static_cast<std::size_t>(w) <= width && static_cast<std::size_t>(h) <= height) {
      CropBox box;
      box.height = static_cast<std::size_t>(h);
      box.width = static_cast<std::size_t>(w);
      box.top = static_cast<std::size_t>(rng.uniform_int(std::int64_t{0}, static_cast<std::int64_t>(height - box.height)));
      box.left = static_cast<std::size_t>(rng.uniform_int(std::int64_t{0}, static_cast<std::int64_t>(width - box.width)));
      return box;
    }
  }
  const double in_ratio = static_cast<double>(width) / static_cast<double>(height);
  CropBox box{0, 0, height, width};
  if (in_ratio < aspect_min) {
    box.height = static_cast<std::size_t>(std::max(1L, std::lround(static_cast<double>(width) / aspect_min)));
  } else if (in_ratio > aspect_max) {
    box.width = static_cast<std::size_t>(std::max(1L, std::lround(static_cast<double>(height) * aspect_max)));
  }
  box.top = (height - box.height) / 2;
  box.left = (width - box.width) / 2;
  return box;
}

Tensor crop_and_resize(const Tensor& image, const CropBox& box, std::size_t out_size) {
  require_image(image, "crop_and_resize");
  const std::size_t h = image.shape()[1], w = image.shape()[2];
  if (box.height == 0 || box.width == 0 || box.top + box.height > h || box.left + box.width > w) {
    throw InvalidArgument("crop_and_resize: crop box outside the image");
  }
  if (out_size == 0) throw InvalidArgument("crop_and_resize: output size must be positive");
  Tensor out({3, out_size, out_size});
  const double sy = static_cast<double>(box.height) / static_cast<double>(out_size);
  const double sx = static_cast<double>(box.width) / static_cast<double>(out_size);
  for (std::size_t oy = 0; oy < out_size; ++oy) {
    const double fy = std::clamp((static_cast<double>(oy) + 0.5) * sy - 0.5, 0.0, static_cast<double>(box.height - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, box.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t ox = 0; ox < out_size; ++ox) {
      const double fx = std::clamp((static_cast<double>(ox) + 0.5) * sx - 0.5, 0.0, static_cast<double>(box.width - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, box.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double v00 = image.at(c, box.top + y0, box.left + x0);
        const double v01 = image.at(c, box.top + y0, box.left + x1);
        const double v10 = image.at(c, box.top + y1, box.left + x0);
        const double v11 = image.at(c, box.top + y1, box.left + x1);
        out.at(c, oy, ox) = (1.0 - wy) * ((1.0 - wx) * v00 + wx * v01) + wy * ((1.0 - wx) * v10 + wx * v11);
      }
    }
  }
  return out;
}

Tensor random_resized_crop(const Tensor& image, Rng& rng, double scale_min, double scale_max, std::size_t out_size,
                           CropBox* box_out, double aspect_min, double aspect_max) {
  require_image(image, "random_resized_crop");
  if (!(scale_min > 0.0 && scale_min <= scale_max && scale_max <= 1.0)) {
    throw InvalidArgument("random_resized_crop: invalid scale range");
  }
  const CropBox box =
      sample_crop_box(image.shape()[1], image.shape()[2], rng, scale_min, scale_max, aspect_min, aspect_max);
  if (box_out) *box_out = box;
  return crop_and_resize(image, box, out_size);
}

Tensor horizontal_flip(const Tensor& image, bool flip) {
  require_image(image, "horizontal_flip");
  if (!flip) return image;
  const std::size_t h = image.shape()[1], w = image.shape()[2];
  Tensor out(image.shape());
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) out.at(c, y, x) = image.at(c, y, w - 1 - x);
    }
  }
  return out;
}

JitterFactors sample_jitter(Rng& rng, double brightness, double contrast, double saturation) {
  auto draw = [&](double s) { return rng.uniform(std::max(0.0, 1.0 - s), 1.0 + s); };
  JitterFactors f;
  f.brightness = draw(brightness);
  f.contrast = draw(contrast);
  f.saturation = draw(saturation);
  for (std::size_t i = f.order.size() - 1; i > 0; --i) {
    const std::size_t j = rng.uniform_int(static_cast<std::uint64_t>(i + 1));
    std::swap(f.order[i], f.order[j]);
  }
  return f;
}

namespace {

constexpr double kLumaR = 0.299, kLumaG = 0.587, kLumaB = 0.114;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

void adjust_brightness(Tensor& img, double f) {
  for (auto& v : img.storage()) v = clamp01(v * f);
}

void adjust_contrast(Tensor& img, double f) {
  const std::size_t plane = img.shape()[1] * img.shape()[2];
  double mean = 0.0;
  for (std::size_t i = 0; i < plane; ++i) {
    mean += kLumaR * img[i] + kLumaG * img[plane + i] + kLumaB * img[2 * plane + i];
  }
  mean /= static_cast<double>(plane);
  for (auto& v : img.storage()) v = clamp01((v - mean) * f + mean);
}

void adjust_saturation(Tensor& img, double f) {
  const std::size_t plane = img.shape()[1] * img.shape()[2];
  for (std::size_t i = 0; i < plane; ++i) {
    const double gray = kLumaR * img[i] + kLumaG * img[plane + i] + kLumaB * img[2 * plane + i];
    for (std::size_t c = 0; c < 3; ++c) {
      double& v = img[c * plane + i];
      v = clamp01((v - gray) * f + gray);
    }
  }
}

}  // namespace

Tensor apply_jitter(const Tensor& image, const JitterFactors& factors) {
  require_image(image, "color_jitter");
  Tensor out = image;
  for (JitterOp op : factors.order) {
    switch (op) {
      case JitterOp::kBrightness:
        if (factors.brightness != 1.0) adjust_brightness(out, factors.brightness);
        break;
      case JitterOp::kContrast:
        if (factors.contrast != 1.0) adjust_contrast(out, factors.contrast);
        break;
      case JitterOp::kSaturation:
        if (factors.saturation != 1.0) adjust_saturation(out, factors.saturation);
        break;
    }
  }
  return out;
}

Tensor color_jitter(const Tensor& image, Rng& rng, double brightness, double contrast, double saturation,
                    JitterFactors* factors_out) {
  const JitterFactors f = sample_jitter(rng, brightness, contrast, saturation);
  if (factors_out) *factors_out = f;
  return apply_jitter(image, f);
}

ViewPair make_views(const Tensor& image, Rng& rng, const AugmentConfig& config, std::size_t out_size) {
  config.validate();
  require_image(image, "make_views");
  ViewPair pair;
  pair.record.crop = sample_crop_box(image.shape()[1], image.shape()[2], rng, config.scale_min, config.scale_max,
                                     config.aspect_min, config.aspect_max);
  pair.record.flipped = rng.bernoulli(config.flip_prob);
  pair.teacher_view = horizontal_flip(crop_and_resize(image, pair.record.crop, out_size), pair.record.flipped);
  pair.record.student_jitter = sample_jitter(rng, config.brightness, config.contrast, config.saturation);
  pair.student_view = apply_jitter(pair.teacher_view, pair.record.student_jitter);
  return pair;
}

}  // namespace dmt
