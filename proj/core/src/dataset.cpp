#include "dmt/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include "dmt/binary_io.hpp"
#include "dmt/errors.hpp"
#include "dmt/rng.hpp"

namespace dmt {

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path + " for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path);
  return bytes;
}

void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

Tensor Dataset::image(std::size_t i) const {
  if (i >= size()) throw InvalidArgument("dataset: record " + std::to_string(i) + " out of range");
  const std::size_t hw = static_cast<std::size_t>(height) * width;
  Tensor img({3, height, width});
  const std::uint8_t* rec = pixels.data() + i * record_bytes();
  for (std::size_t p = 0; p < hw; ++p) {
    for (std::size_t c = 0; c < 3; ++c) img[c * hw + p] = static_cast<double>(rec[p * 3 + c]) / 255.0;
  }
  return img;
}

std::size_t Dataset::num_classes() const {
  if (labels.empty()) return 0;
  return static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
}

namespace {
constexpr char kMagic[4] = {'D', 'M', 'T', 'D'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 4 + 4 + 2 + 2;
}  // namespace

void write_dataset(const std::filesystem::path& path, const Dataset& data) {
  if (data.pixels.size() != data.size() * data.record_bytes()) {
    throw InvalidArgument("write_dataset: pixel buffer does not match record count");
  }
  std::vector<std::uint8_t> bytes(kMagic, kMagic + 4);
  io::put_u32(bytes, kVersion);
  io::put_u32(bytes, static_cast<std::uint32_t>(data.size()));
  io::put_u16(bytes, data.height);
  io::put_u16(bytes, data.width);
  bytes.reserve(bytes.size() + data.size() * (1 + data.record_bytes()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    bytes.push_back(data.labels[i]);
    const auto* rec = data.pixels.data() + i * data.record_bytes();
    bytes.insert(bytes.end(), rec, rec + data.record_bytes());
  }
  write_file_bytes(path.string(), bytes);
}

Dataset read_dataset(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path.string());
  const std::string where = path.string();
  if (bytes.size() < kHeaderBytes) throw IoError(where + ": truncated dataset header");
  if (!std::equal(kMagic, kMagic + 4, bytes.begin())) throw IoError(where + ": not a dataset file (bad magic)");
  const auto version = static_cast<std::uint32_t>(io::get_le(&bytes[4], 4));
  if (version != kVersion) throw IoError(where + ": unsupported dataset version " + std::to_string(version));
  Dataset data;
  const auto count = static_cast<std::size_t>(io::get_le(&bytes[8], 4));
  data.height = static_cast<std::uint16_t>(io::get_le(&bytes[12], 2));
  data.width = static_cast<std::uint16_t>(io::get_le(&bytes[14], 2));
  const std::size_t stride = 1 + data.record_bytes();
  if (bytes.size() != kHeaderBytes + count * stride) {
    throw IoError(where + ": expected " + std::to_string(count) + " records of " + std::to_string(stride) +
                  " bytes, file size does not match");
  }
  data.labels.reserve(count);
  data.pixels.reserve(count * data.record_bytes());
  for (std::size_t i = 0; i < count; ++i) {
    const auto* rec = bytes.data() + kHeaderBytes + i * stride;
    data.labels.push_back(rec[0]);
    data.pixels.insert(data.pixels.end(), rec + 1, rec + stride);
  }
  return data;
}

Dataset make_synthetic_dataset(std::size_t count, std::uint64_t seed, std::uint16_t size) {
  constexpr double kTint = 0.1;
  if (count == 0) throw InvalidArgument("synthetic dataset: count must be >= 1");
  Rng rng(seed);
  Dataset data;
  data.height = size;
  data.width = size;
  data.labels.reserve(count);
  data.pixels.reserve(count * data.record_bytes());
  for (std::size_t i = 0; i < count; ++i) {
    const auto label = static_cast<std::uint8_t>(rng.uniform_int(kSyntheticClasses));
    const double angle = static_cast<double>(label) * std::numbers::pi / 4.0;
    const double freq = rng.uniform(0.12, 0.3);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    // Foreground is always the brighter stripe and the tint is mild, so
    // color alone does not separate images and orientation has to carry it.
    const double fg_level = rng.uniform(0.6, 1.0);
    const double bg_level = rng.uniform(0.0, 0.4);
    double fg[3], bg[3];
    for (auto& c : fg) c = std::clamp(fg_level + rng.uniform(-kTint, kTint), 0.0, 1.0);
    for (auto& c : bg) c = std::clamp(bg_level + rng.uniform(-kTint, kTint), 0.0, 1.0);
    const double ca = std::cos(angle), sa = std::sin(angle);
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const double t = static_cast<double>(x) * ca + static_cast<double>(y) * sa;
        const double s = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * freq * t + phase);
        for (int c = 0; c < 3; ++c) {
          const double v = std::clamp(s * fg[c] + (1.0 - s) * bg[c] + rng.normal(0.0, 0.05), 0.0, 1.0);
          data.pixels.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
        }
      }
    }
    data.labels.push_back(label);
  }
  return data;
}

void generate_dataset_files(const std::filesystem::path& dir, std::size_t n_train, std::size_t n_test,
                            std::uint64_t seed) {
  if (n_train == 0 || n_test == 0) throw InvalidArgument("gen-data: counts must be >= 1");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  write_dataset(dir / "train.dmtd", make_synthetic_dataset(n_train, mix_seed(seed)));
  write_dataset(dir / "test.dmtd", make_synthetic_dataset(n_test, mix_seed(seed + 1)));
}

DatasetSplit load_dataset_dir(const std::filesystem::path& dir) {
  return DatasetSplit{read_dataset(dir / "train.dmtd"), read_dataset(dir / "test.dmtd")};
}

}  // namespace dmt
