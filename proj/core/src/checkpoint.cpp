#include "dmt/checkpoint.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "dmt/binary_io.hpp"
#include "dmt/errors.hpp"

namespace dmt {

using json = nlohmann::ordered_json;
using Kind = CheckpointError::Kind;

std::string to_string(DType dtype) { return dtype == DType::kF32 ? "f32" : "f64"; }

const NamedTensor& Checkpoint::get(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw InvalidArgument("checkpoint has no tensor named " + name);
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return true;
  }
  return false;
}

std::size_t Checkpoint::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.value.numel();
  return n;
}

namespace {

constexpr char kMagic[4] = {'D', 'M', 'T', 'C'};
constexpr std::size_t kPreamble = 4 + 4 + 8;

std::size_t element_bytes(DType dtype) { return dtype == DType::kF32 ? 4 : 8; }

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  json meta;
  meta["format_version"] = kCheckpointVersion;
  meta["kind"] = ckpt.kind;
  meta["step"] = ckpt.step;
  meta["seed"] = ckpt.seed;
  meta["config"] = ckpt.config_text;
  meta["attributes"] = json::object();
  for (const auto& [k, v] : ckpt.attributes) meta["attributes"][k] = v;
  json entries = json::array();
  std::uint64_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    entries.push_back({{"name", t.name}, {"shape", t.value.shape()}, {"dtype", to_string(t.dtype)}, {"offset", offset}});
    offset += t.value.numel() * element_bytes(t.dtype);
  }
  meta["tensors"] = std::move(entries);
  const std::string text = meta.dump();

  std::vector<std::uint8_t> bytes(kMagic, kMagic + 4);
  io::put_u32(bytes, kCheckpointVersion);
  io::put_u64(bytes, text.size());
  bytes.insert(bytes.end(), text.begin(), text.end());
  bytes.reserve(bytes.size() + offset);
  for (const auto& t : ckpt.tensors) {
    for (double v : t.value.storage()) {
      if (t.dtype == DType::kF32) {
        io::put_f32(bytes, static_cast<float>(v));
      } else {
        io::put_f64(bytes, v);
      }
    }
  }
  return bytes;
}

Checkpoint parse_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4) throw CheckpointError(Kind::kTruncated, "checkpoint: file shorter than the magic bytes");
  if (!std::equal(kMagic, kMagic + 4, bytes.begin())) {
    throw CheckpointError(Kind::kMagicMismatch, "checkpoint: magic bytes are not DMTC");
  }
  if (bytes.size() < kPreamble) throw CheckpointError(Kind::kTruncated, "checkpoint: truncated header");
  const auto version = static_cast<std::uint32_t>(io::get_le(&bytes[4], 4));
  if (version != kCheckpointVersion) {
    throw CheckpointError(Kind::kVersionMismatch, "checkpoint: unsupported format version " + std::to_string(version));
  }
  const std::uint64_t meta_len = io::get_le(&bytes[8], 8);
  if (meta_len > bytes.size() - kPreamble) {
    throw CheckpointError(Kind::kTruncated, "checkpoint: metadata extends past end of file");
  }
  json meta;
  try {
    meta = json::parse(bytes.begin() + kPreamble, bytes.begin() + static_cast<std::ptrdiff_t>(kPreamble + meta_len));
  } catch (const json::exception& e) {
    throw CheckpointError(Kind::kCorrupt, std::string("checkpoint: metadata is not valid JSON: ") + e.what());
  }

  Checkpoint ckpt;
  std::vector<std::uint64_t> offsets;
  try {
    if (meta.at("format_version").get<std::uint32_t>() != kCheckpointVersion) {
      throw CheckpointError(Kind::kVersionMismatch, "checkpoint: metadata format_version disagrees with header");
    }
    ckpt.kind = meta.at("kind").get<std::string>();
    ckpt.step = meta.at("step").get<std::uint64_t>();
    ckpt.seed = meta.at("seed").get<std::uint64_t>();
    ckpt.config_text = meta.at("config").get<std::string>();
    for (const auto& [k, v] : meta.at("attributes").items()) ckpt.attributes[k] = v.get<std::string>();
    for (const auto& entry : meta.at("tensors")) {
      NamedTensor t;
      t.name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      const auto dtype = entry.at("dtype").get<std::string>();
      if (dtype == "f32") {
        t.dtype = DType::kF32;
      } else if (dtype == "f64") {
        t.dtype = DType::kF64;
      } else {
        throw CheckpointError(Kind::kShapeMetadata, "checkpoint: tensor " + t.name + " has unknown dtype " + dtype);
      }
      if (shape.empty() || std::find(shape.begin(), shape.end(), 0) != shape.end()) {
        throw CheckpointError(Kind::kShapeMetadata, "checkpoint: tensor " + t.name + " has an empty extent");
      }
      t.value = Tensor(shape);
      offsets.push_back(entry.at("offset").get<std::uint64_t>());
      ckpt.tensors.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    throw CheckpointError(Kind::kCorrupt, std::string("checkpoint: malformed metadata: ") + e.what());
  }

  const std::size_t payload_begin = kPreamble + meta_len;
  const std::size_t payload_size = bytes.size() - payload_begin;
  std::uint64_t expected = 0;
  for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) {
    auto& t = ckpt.tensors[i];
    if (offsets[i] != expected) {
      throw CheckpointError(Kind::kShapeMetadata, "checkpoint: tensor " + t.name + " declared at offset " +
                                                      std::to_string(offsets[i]) + ", expected " +
                                                      std::to_string(expected));
    }
    const std::uint64_t size = t.value.numel() * element_bytes(t.dtype);
    if (expected + size > payload_size) {
      throw CheckpointError(Kind::kTruncated, "checkpoint: payload of " + t.name + " is truncated (" +
                                                  std::to_string(payload_size) + " payload bytes, need " +
                                                  std::to_string(expected + size) + ")");
    }
    const std::uint8_t* src = bytes.data() + payload_begin + expected;
    for (std::size_t k = 0; k < t.value.numel(); ++k) {
      t.value[k] = t.dtype == DType::kF32 ? static_cast<double>(io::get_f32(src + 4 * k)) : io::get_f64(src + 8 * k);
    }
    if (!t.value.all_finite()) throw CheckpointError(Kind::kCorrupt, "checkpoint: non-finite value in " + t.name);
    expected += size;
  }
  if (expected != payload_size) {
    throw CheckpointError(Kind::kShapeMetadata, "checkpoint: " + std::to_string(payload_size - expected) +
                                                    " payload bytes not described by the metadata");
  }
  return ckpt;
}

void append_parameters(Checkpoint& ckpt, const ParameterSet& params, const std::string& prefix, DType dtype) {
  for (const auto& p : params.items()) ckpt.tensors.push_back({prefix + p.name, p.value, dtype});
}

ParameterSet extract_parameters(const Checkpoint& ckpt, const std::string& prefix) {
  ParameterSet out;
  for (const auto& t : ckpt.tensors) {
    if (t.name.compare(0, prefix.size(), prefix) == 0) out.add(t.name.substr(prefix.size()), t.value);
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_bytes(path.string(), serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(read_file_bytes(path.string())); }

}  // namespace dmt
