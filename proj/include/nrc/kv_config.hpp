#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace nrc {

// Flat `key = value` text: one entry per line, `#` starts a comment, and a
// `[section]` line prefixes the keys that follow with `section.`.
class KvMap {
 public:
  static KvMap parse(std::string_view text, const std::string& source = "<text>");
  static KvMap load(const std::filesystem::path& path);

  std::string format() const;
  void save(const std::filesystem::path& path) const;

  bool contains(const std::string& key) const { return entries_.count(key) != 0; }
  void set(const std::string& key, std::string value) { entries_[key] = std::move(value); }
  const std::string& at(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& entries() const noexcept { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

}  // namespace nrc
