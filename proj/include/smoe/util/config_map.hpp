#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace smoe {

// Flat `key = value` configuration. `#` starts a comment; blank lines are
// ignored. Consumers pull the keys they understand with the typed getters and
// then call `reject_unknown()`, which fails on anything left untouched.
class ConfigMap {
 public:
  ConfigMap() = default;

  static ConfigMap parse(std::string_view text, std::string_view origin = "<config>");
  static ConfigMap load(const std::string& path);

  // Applies a single `key=value` override (CLI --set).
  void apply_override(std::string_view assignment);
  void set(const std::string& key, const std::string& value);

  bool contains(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Throws ConfigError naming every key that no getter asked for.
  void reject_unknown() const;

  // Marks keys as owned by some other consumer so reject_unknown skips them.
  void mark_used(const std::vector<std::string>& keys) const;

  std::string to_text() const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  const std::string* lookup(const std::string& key) const;

  std::map<std::string, std::string> entries_;
  mutable std::set<std::string> used_;
};

}  // namespace smoe
