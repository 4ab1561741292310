#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "mtlink/errors.hpp"

namespace mtlink {

/// Flat key=value configuration. Lines starting with '#' are comments. Every
/// CLI flag maps to one key; values set later (e.g. from the command line)
/// override earlier ones.
class KvConfig {
 public:
  KvConfig() = default;

  static KvConfig from_file(const std::string& path);
  static KvConfig from_string(const std::string& text);

  void set(const std::string& key, const std::string& value) { kv_[key] = value; }
  bool has(const std::string& key) const { return kv_.count(key) != 0; }

  std::optional<std::string> get(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  /// Apply every entry of `other` on top of this config.
  void merge(const KvConfig& other);

  std::string to_string() const;
  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace mtlink
