#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

#include "dmt/rng.hpp"
#include "dmt/tensor.hpp"

namespace dmt {

struct AugmentConfig {
  double scale_min = 0.2;
  double scale_max = 1.0;
  double aspect_min = 3.0 / 4.0;
  double aspect_max = 4.0 / 3.0;
  double flip_prob = 0.5;
  double brightness = 0.4;
  double contrast = 0.4;
  double saturation = 0.4;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const AugmentConfig&) const = default;
};

/// Crop window in source pixel coordinates.
struct CropBox {
  std::size_t top = 0;
  std::size_t left = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  bool operator==(const CropBox&) const = default;
};

enum class JitterOp : std::uint8_t { kBrightness, kContrast, kSaturation };

struct JitterFactors {
  double brightness = 1.0;
  double contrast = 1.0;
  double saturation = 1.0;
  std::array<JitterOp, 3> order{JitterOp::kBrightness, JitterOp::kContrast, JitterOp::kSaturation};

  bool is_identity() const { return brightness == 1.0 && contrast == 1.0 && saturation == 1.0; }
  bool operator==(const JitterFactors&) const = default;
};

struct TransformRecord {
  CropBox crop;
  bool flipped = false;
  JitterFactors teacher_jitter;  // always identity
  JitterFactors student_jitter;
};

/// Teacher (weak) and student (strong) views of one image. Both share the
/// crop box and flip; only the student view is color-jittered.
struct ViewPair {
  Tensor teacher_view;
  Tensor student_view;
  TransformRecord record;
};

/// Area fraction ~ U[scale], log-aspect ~ U[log aspect range]; up to ten
/// attempts, then a center crop with the aspect clamped to the range.
CropBox sample_crop_box(std::size_t height, std::size_t width, Rng& rng, double scale_min, double scale_max,
                        double aspect_min, double aspect_max);

/// Bilinear resize of image[crop] to out_size x out_size. Sampling uses
/// half-pixel centers (no corner alignment): src = (dst + 0.5) * in / out
/// - 0.5, clamped to [0, in - 1].
Tensor crop_and_resize(const Tensor& image, const CropBox& box, std::size_t out_size);

Tensor random_resized_crop(const Tensor& image, Rng& rng, double scale_min, double scale_max,
                           std::size_t out_size, CropBox* box_out = nullptr, double aspect_min = 3.0 / 4.0,
                           double aspect_max = 4.0 / 3.0);

/// Reverses the width axis when `flip` is set.
Tensor horizontal_flip(const Tensor& image, bool flip);

/// Draws factors from U[max(0, 1 - s), 1 + s] and a random operation order.
JitterFactors sample_jitter(Rng& rng, double brightness, double contrast, double saturation);

/// Applies the three adjustments in `factors.order`, clamping to [0, 1]
/// after each. A factor of exactly 1 leaves the image untouched.
///   brightness: x * f
///   contrast:   (x - m) * f + m, m = mean grayscale of the image
///   saturation: (x - g) * f + g, g = grayscale of the pixel
/// Grayscale is 0.299 R + 0.587 G + 0.114 B.
Tensor apply_jitter(const Tensor& image, const JitterFactors& factors);

Tensor color_jitter(const Tensor& image, Rng& rng, double brightness, double contrast, double saturation,
                    JitterFactors* factors_out = nullptr);

ViewPair make_views(const Tensor& image, Rng& rng, const AugmentConfig& config, std::size_t out_size);

}  // namespace dmt
