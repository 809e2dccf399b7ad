#include "poison/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "poison/error.hpp"

namespace poison {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

}  // namespace

Config Config::from_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return from_string(ss.str(), path.string());
}

Config Config::from_string(const std::string& text, const std::string& origin) {
  Config cfg;
  cfg.raw_ = text;
  cfg.origin_ = origin;
  std::stringstream ss(text);
  std::string line;
  long line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ": line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError(origin + ": line " + std::to_string(line_no) + ": empty key");
    if (cfg.values_.count(key))
      throw ConfigError(origin + ": line " + std::to_string(line_no) + ": duplicate key " + key);
    cfg.values_[key] = value;
  }
  return cfg;
}

bool Config::has(const std::string& key) const { return values_.count(key) > 0; }

void Config::set(const std::string& key, const std::string& value) { values_[key] = value; }

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  consumed_.insert(key);
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::string Config::require_string(const std::string& key) const {
  consumed_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(origin_ + ": missing required key " + key);
  return it->second;
}

int Config::get_int(const std::string& key, int fallback) const {
  std::string v = get_string(key, "");
  if (v.empty()) return fallback;
  char* end = nullptr;
  long parsed = std::strtol(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0')
    throw ConfigError(origin_ + ": key " + key + ": expected integer, got '" + v + "'");
  return static_cast<int>(parsed);
}

double Config::get_double(const std::string& key, double fallback) const {
  std::string v = get_string(key, "");
  if (v.empty()) return fallback;
  char* end = nullptr;
  double parsed = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0')
    throw ConfigError(origin_ + ": key " + key + ": expected number, got '" + v + "'");
  return parsed;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  std::string v = get_string(key, "");
  if (v.empty()) return fallback;
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(origin_ + ": key " + key + ": expected boolean, got '" + v + "'");
}

std::vector<int> Config::get_int_list(const std::string& key, std::vector<int> fallback) const {
  std::string v = get_string(key, "");
  if (v.empty()) return fallback;
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    char* end = nullptr;
    long parsed = std::strtol(item.c_str(), &end, 10);
    if (end == item.c_str() || *end != '\0')
      throw ConfigError(origin_ + ": key " + key + ": bad list entry '" + item + "'");
    out.push_back(static_cast<int>(parsed));
  }
  return out;
}

std::vector<std::pair<int, int>> Config::get_pair_list(const std::string& key) const {
  std::string v = get_string(key, "");
  std::vector<std::pair<int, int>> out;
  if (v.empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    std::size_t colon = item.find(':');
    if (colon == std::string::npos)
      throw ConfigError(origin_ + ": key " + key + ": expected from:to, got '" + item + "'");
    out.emplace_back(std::atoi(item.substr(0, colon).c_str()),
                     std::atoi(item.substr(colon + 1).c_str()));
  }
  return out;
}

void Config::check_all_consumed() const {
  std::string unknown;
  for (const auto& [key, value] : values_) {
    if (!consumed_.count(key)) unknown += (unknown.empty() ? "" : ", ") + key;
  }
  if (!unknown.empty()) throw ConfigError(origin_ + ": unknown config keys: " + unknown);
}

std::uint64_t Config::content_hash() const {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : raw_) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace poison
