#pragma once

// Flat key=value configuration text.
//
//   # comment
//   gamma = 0.99
//   hidden = 64,64
//
// Keys are unique; blank lines and text after '#' are ignored. Typed
// getters throw ConfigError naming the key and the offending text.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace drsac {

class KvConfig {
 public:
  static KvConfig parse(const std::string& text, const std::string& origin = "<config>");
  static KvConfig load(const std::string& path);

  /// Adds or replaces an entry (command-line overrides).
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  bool empty() const { return entries_.empty(); }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long get_int(const std::string& key, long fallback) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;

  /// Throws ConfigError listing every key not in `allowed`.
  void require_known(const std::set<std::string>& allowed) const;

  /// Sorted "key = value" lines.
  std::string serialize() const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

/// Shortest text that parses back to the same double.
std::string format_double(double x);

}  // namespace drsac
