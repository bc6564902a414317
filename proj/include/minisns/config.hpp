#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace minisns {

/// Flat key-value config: one "key = value" per line, '#' comments.
class Config {
 public:
  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  std::string require(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int> get_int_list(const std::string& key) const;  // space-separated

  /// FNV-1a over the raw file text, hex; recorded in manifests.
  std::string hash() const;
  const std::string& raw_text() const { return text_; }

 private:
  std::map<std::string, std::string> values_;
  std::string text_;
};

std::string format_double(double v);  // shortest round-trip-stable decimal

}  // namespace minisns
