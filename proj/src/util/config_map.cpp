#include "smoe/util/config_map.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/core.h>

#include "smoe/error.hpp"

namespace smoe {

namespace {

std::string_view trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

std::pair<std::string, std::string> split_assignment(std::string_view line,
                                                     std::string_view where) {
  const auto eq = line.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError(fmt::format("{}: expected `key = value`, got `{}`", where, line));
  }
  auto key = trim(line.substr(0, eq));
  auto value = trim(line.substr(eq + 1));
  if (key.empty()) throw ConfigError(fmt::format("{}: empty key", where));
  return {std::string(key), std::string(value)};
}

}  // namespace

ConfigMap ConfigMap::parse(std::string_view text, std::string_view origin) {
  ConfigMap out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto [k, v] = split_assignment(line, fmt::format("{}:{}", origin, line_no));
    if (out.entries_.count(k)) {
      throw ConfigError(fmt::format("{}:{}: duplicate key `{}`", origin, line_no, k));
    }
    out.entries_[k] = v;
  }
  return out;
}

ConfigMap ConfigMap::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config file {}", path));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

void ConfigMap::apply_override(std::string_view assignment) {
  auto [k, v] = split_assignment(trim(assignment), "--set");
  entries_[k] = v;
}

void ConfigMap::set(const std::string& key, const std::string& value) { entries_[key] = value; }

bool ConfigMap::contains(const std::string& key) const { return entries_.count(key) > 0; }

const std::string* ConfigMap::lookup(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return nullptr;
  used_.insert(key);
  return &it->second;
}

std::string ConfigMap::get_string(const std::string& key, const std::string& fallback) const {
  const auto* v = lookup(key);
  return v ? *v : fallback;
}

std::int64_t ConfigMap::get_int(const std::string& key, std::int64_t fallback) const {
  const auto* v = lookup(key);
  if (!v) return fallback;
  std::int64_t out = 0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size()) {
    throw ConfigError(fmt::format("key `{}`: `{}` is not an integer", key, *v));
  }
  return out;
}

double ConfigMap::get_double(const std::string& key, double fallback) const {
  const auto* v = lookup(key);
  if (!v) return fallback;
  try {
    std::size_t consumed = 0;
    double out = std::stod(*v, &consumed);
    if (consumed != v->size()) throw std::invalid_argument("trailing");
    return out;
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("key `{}`: `{}` is not a number", key, *v));
  }
}

bool ConfigMap::get_bool(const std::string& key, bool fallback) const {
  const auto* v = lookup(key);
  if (!v) return fallback;
  if (*v == "1" || *v == "true" || *v == "on" || *v == "yes") return true;
  if (*v == "0" || *v == "false" || *v == "off" || *v == "no") return false;
  throw ConfigError(fmt::format("key `{}`: `{}` is not a boolean", key, *v));
}

void ConfigMap::mark_used(const std::vector<std::string>& keys) const {
  for (const auto& k : keys) used_.insert(k);
}

void ConfigMap::reject_unknown() const {
  std::string unknown;
  for (const auto& [k, v] : entries_) {
    if (!used_.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
  }
  if (!unknown.empty()) throw ConfigError("unknown config keys: " + unknown);
}

std::string ConfigMap::to_text() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

}  // namespace smoe
