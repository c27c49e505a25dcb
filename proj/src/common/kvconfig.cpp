#include "dvelab/common/kvconfig.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "dvelab/common/error.hpp"

namespace dvelab {

std::string trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return std::string(text.substr(first, last - first + 1));
}

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    out.push_back(trim(text.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

KvConfig KvConfig::parse(std::string_view text, std::string_view origin) {
  KvConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::ConfigError, std::string(origin) + ":" + std::to_string(lineno) +
                                              ": expected `key = value`");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) {
      throw Error(ErrorCode::ConfigError,
                  std::string(origin) + ":" + std::to_string(lineno) + ": empty key");
    }
    cfg.values_[key] = trim(std::string_view(body).substr(eq + 1));
  }
  return cfg;
}

KvConfig KvConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

void KvConfig::set(const std::string& key, const std::string& value) { values_[key] = value; }

void KvConfig::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || trim(assignment.substr(0, eq)).empty()) {
    throw Error(ErrorCode::ConfigError,
                "override '" + std::string(assignment) + "' is not of the form key=value");
  }
  values_[trim(assignment.substr(0, eq))] = trim(assignment.substr(eq + 1));
}

std::optional<std::string> KvConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string KvConfig::get_string(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* kind) {
  throw Error(ErrorCode::ConfigError,
              "key '" + key + "': cannot parse '" + value + "' as " + kind);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value, const char* kind) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc{} || ptr != last) bad_value(key, value, kind);
  return out;
}

}  // namespace

double KvConfig::get_double(const std::string& key, double fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  return parse_number<double>(key, *v, "a number");
}

long long KvConfig::get_int(const std::string& key, long long fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  // Accept integral values written in float notation such as 1e6.
  if (v->find_first_of(".eE") != std::string::npos) {
    const double d = parse_number<double>(key, *v, "an integer");
    const auto i = static_cast<long long>(d);
    if (static_cast<double>(i) != d) bad_value(key, *v, "an integer");
    return i;
  }
  return parse_number<long long>(key, *v, "an integer");
}

std::uint64_t KvConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  return parse_number<std::uint64_t>(key, *v, "an unsigned 64-bit integer");
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  const auto v = get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  bad_value(key, *v, "a boolean");
}

std::string KvConfig::render() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

}  // namespace dvelab
