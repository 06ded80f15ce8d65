#include "dmt/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dmt/errors.hpp"

namespace dmt {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text) {
  KeyValueConfig kv;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    if (kv.has(key)) throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key " + key);
    kv.entries_.emplace_back(key, std::string(trim(line.substr(eq + 1))));
  }
  return kv;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string KeyValueConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
  return out;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = value;
      return;
    }
  }
  entries_.emplace_back(key, value);
}

void KeyValueConfig::set(const std::string& key, double value) { set(key, format_double(value)); }
void KeyValueConfig::set(const std::string& key, bool value) { set(key, std::string(value ? "true" : "false")); }

bool KeyValueConfig::has(const std::string& key) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == key; });
}

std::string KeyValueConfig::get(const std::string& key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  throw ConfigError("missing config key " + key);
}

std::string KeyValueConfig::get(const std::string& key, const std::string& fallback) const {
  return has(key) ? get(key) : fallback;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get(key);
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError("config key " + key + ": '" + v + "' is not a finite number");
  }
  return out;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get(key);
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("config key " + key + ": '" + v + "' is not a non-negative integer");
  }
  return out;
}

std::size_t KeyValueConfig::get_size(const std::string& key, std::size_t fallback) const {
  return static_cast<std::size_t>(get_u64(key, fallback));
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string v = get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key " + key + ": '" + v + "' is not a boolean");
}

void KeyValueConfig::reject_unknown(const std::set<std::string>& known) const {
  for (const auto& [k, v] : entries_) {
    if (!known.contains(k)) throw ConfigError("unknown config key " + k);
  }
}

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) throw ConfigError("cannot format number");
  return std::string(buf, ptr);
}

void write_vit_config(KeyValueConfig& kv, const std::string& prefix, const ViTConfig& config) {
  kv.set(prefix + ".image_size", config.image_size);
  kv.set(prefix + ".patch_size", config.patch_size);
  kv.set(prefix + ".depth", config.depth);
  kv.set(prefix + ".embed_dim", config.embed_dim);
  kv.set(prefix + ".num_heads", config.num_heads);
  kv.set(prefix + ".mlp_ratio", config.mlp_ratio);
}

ViTConfig read_vit_config(const KeyValueConfig& kv, const std::string& prefix, const ViTConfig& fallback) {
  ViTConfig c;
  c.image_size = kv.get_size(prefix + ".image_size", fallback.image_size);
  c.patch_size = kv.get_size(prefix + ".patch_size", fallback.patch_size);
  c.depth = kv.get_size(prefix + ".depth", fallback.depth);
  c.embed_dim = kv.get_size(prefix + ".embed_dim", fallback.embed_dim);
  c.num_heads = kv.get_size(prefix + ".num_heads", fallback.num_heads);
  c.mlp_ratio = kv.get_size(prefix + ".mlp_ratio", fallback.mlp_ratio);
  c.validate();
  return c;
}

std::set<std::string> vit_config_keys(const std::string& prefix) {
  return {prefix + ".image_size", prefix + ".patch_size", prefix + ".depth",
          prefix + ".embed_dim",  prefix + ".num_heads",  prefix + ".mlp_ratio"};
}

}  // namespace dmt
