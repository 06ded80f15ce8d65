#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dmt/parameter.hpp"
#include "dmt/tensor.hpp"

namespace dmt {

enum class DType { kF32, kF64 };

std::string to_string(DType dtype);

struct NamedTensor {
  std::string name;
  Tensor value;
  DType dtype = DType::kF64;
};

/// Checkpoint file contents.
///
/// On disk: "DMTC", u32 version (1), u64 metadata length, UTF-8 JSON
/// metadata, then the raw little-endian tensor payloads. The metadata holds
/// the fields below plus an ordered list of {name, shape, dtype, offset}
/// with offsets counted from the first payload byte. f32 tensors are
/// widened to f64 on load.
struct Checkpoint {
  std::string kind;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
  std::string config_text;
  std::map<std::string, std::string> attributes;
  std::vector<NamedTensor> tensors;

  const NamedTensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::size_t scalar_count() const;
};

constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
/// Throws CheckpointError with a kind naming the failed check.
Checkpoint parse_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Appends every parameter of `params` as `<prefix><name>`.
void append_parameters(Checkpoint& ckpt, const ParameterSet& params, const std::string& prefix,
                       DType dtype = DType::kF64);
/// Collects the tensors named `<prefix>*` (prefix stripped) in file order.
/// Decay flags are not stored; callers that rebuild a model re-derive them
/// from its layout.
ParameterSet extract_parameters(const Checkpoint& ckpt, const std::string& prefix);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dmt
