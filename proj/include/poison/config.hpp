#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace poison {

// Flat "dotted.key = value" experiment configuration. '#' starts a comment.
// Every key must be consumed by the runner that loads the file; leftovers are
// reported as unknown-key errors so typos cannot silently change a run.
class Config {
 public:
  static Config from_file(const std::filesystem::path& path);
  static Config from_string(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::string require_string(const std::string& key) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback = {}) const;
  std::vector<std::pair<int, int>> get_pair_list(const std::string& key) const;  // "a:b,c:d"

  // Throws ConfigError naming any key never consumed by a getter.
  void check_all_consumed() const;

  // FNV-1a over the raw file text, for the run manifest.
  std::uint64_t content_hash() const;

  // Overrides applied after parsing (CLI flags like --seeds).
  void set(const std::string& key, const std::string& value);

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> consumed_;
  std::string raw_;
  std::string origin_;
};

}  // namespace poison
