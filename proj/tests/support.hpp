#pragma once

#include <filesystem>
#include <string>

#include "dmt/rng.hpp"
#include "dmt/tensor.hpp"

namespace dmt::test {

inline Tensor random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.storage()) v = rng.normal(0.0, scale);
  return t;
}

inline Tensor random_image(Rng& rng, std::size_t size) {
  Tensor t({3, size, size});
  for (double& v : t.storage()) v = rng.uniform();
  return t;
}

// Fresh, empty directory under the system temp dir, unique per test name.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("dmt-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace dmt::test
