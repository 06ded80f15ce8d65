#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "dmt/tensor.hpp"

namespace dmt {

/// Labeled 8-bit RGB images stored interleaved (H x W x 3 per record).
struct Dataset {
  std::uint16_t height = 0;
  std::uint16_t width = 0;
  std::vector<std::uint8_t> labels;
  std::vector<std::uint8_t> pixels;

  std::size_t size() const { return labels.size(); }
  std::size_t record_bytes() const { return static_cast<std::size_t>(height) * width * 3; }

  /// Record i as a 3 x H x W tensor with values byte / 255.
  Tensor image(std::size_t i) const;
  std::size_t num_classes() const;
};

/// Binary layout (little-endian): "DMTD", u32 version = 1, u32 count,
/// u16 height, u16 width, then per record u8 label + H*W*3 RGB bytes.
void write_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& path);

constexpr std::size_t kSyntheticClasses = 4;

/// Procedural oriented gratings: the label picks one of four orientations
/// (0, 45, 90, 135 degrees); frequency, phase, a light and a dark tinted
/// color and pixel noise vary per sample. Labels are drawn uniformly at random.
Dataset make_synthetic_dataset(std::size_t count, std::uint64_t seed, std::uint16_t size = 16);

/// Writes <dir>/train.dmtd and <dir>/test.dmtd.
void generate_dataset_files(const std::filesystem::path& dir, std::size_t n_train, std::size_t n_test,
                            std::uint64_t seed);

struct DatasetSplit {
  Dataset train;
  Dataset test;
};
DatasetSplit load_dataset_dir(const std::filesystem::path& dir);

}  // namespace dmt
