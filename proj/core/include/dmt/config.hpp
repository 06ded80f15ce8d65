#pragma once

#include <concepts>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dmt/vit.hpp"

namespace dmt {

/// Flat `key=value` text with dotted section names, e.g.
/// `schedule.base_lr=1.5e-4`. Blank lines and lines starting with '#' are
/// ignored; whitespace around keys and values is trimmed. Entries keep
/// insertion order so to_text() output is stable.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text);
  static KeyValueConfig load(const std::filesystem::path& path);

  std::string to_text() const;

  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, double value);
  void set(const std::string& key, bool value);
  template <std::unsigned_integral T>
    requires(!std::same_as<T, bool>)
  void set(const std::string& key, T value) {
    set(key, std::to_string(value));
  }

  bool has(const std::string& key) const;
  std::string get(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  /// Throws ConfigError naming the first key that is not in `known`.
  void reject_unknown(const std::set<std::string>& known) const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

/// Shortest decimal text that reads back to the identical double.
std::string format_double(double value);

void write_vit_config(KeyValueConfig& kv, const std::string& prefix, const ViTConfig& config);
ViTConfig read_vit_config(const KeyValueConfig& kv, const std::string& prefix, const ViTConfig& fallback = {});
std::set<std::string> vit_config_keys(const std::string& prefix);

}  // namespace dmt
