#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dvelab {

/// Flat `key = value` configuration. `#` starts a comment; blank lines are
/// ignored; later assignments override earlier ones.
class KvConfig {
 public:
  static KvConfig parse(std::string_view text, std::string_view origin = "<string>");
  static KvConfig load(const std::string& path);

  void set(const std::string& key, const std::string& value);
  /// Applies a `key=value` override.
  void apply_override(std::string_view assignment);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& entries() const { return values_; }

  /// Canonical `key = value` rendering, keys sorted.
  std::string render() const;

 private:
  std::map<std::string, std::string> values_;
};

std::vector<std::string> split(std::string_view text, char sep);
std::string trim(std::string_view text);

}  // namespace dvelab
