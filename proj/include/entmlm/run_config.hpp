#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace entmlm {

/// Flat `key = value` settings with `#` comments. Dotted keys group related
/// settings (`model.num_layers = 2`). Every key that is never read is an
/// error once reject_unknown() is called.
class RunConfig {
 public:
  static RunConfig parse(const std::string& text, const std::string& source = "config");
  static RunConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// Comma-separated list with surrounding blanks trimmed.
  std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const;

  /// Throws ConfigError naming the first key nobody asked for.
  void reject_unknown() const;

 private:
  const std::string* lookup(const std::string& key) const;

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

}  // namespace entmlm
