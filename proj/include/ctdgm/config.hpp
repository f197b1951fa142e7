#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ctdgm {

// Flat `key = value` document. '#' starts a comment; blank lines are
// ignored; later duplicates overwrite earlier ones.
class KeyValues {
 public:
  KeyValues() = default;

  static KeyValues parse(std::istream& in, const std::string& origin = "<stream>");
  static KeyValues load(const std::filesystem::path& path);

  void set(std::string key, std::string value);
  bool contains(std::string_view key) const;
  std::optional<std::string> get(std::string_view key) const;

  std::string get_string(std::string_view key, std::string fallback) const;
  std::uint64_t get_u64(std::string_view key, std::uint64_t fallback) const;
  double get_double(std::string_view key, double fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;
  // Accepts plain integers or K/M/G (binary) suffixes, e.g. "2M".
  std::uint64_t get_bytes(std::string_view key, std::uint64_t fallback) const;

  const std::map<std::string, std::string, std::less<>>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string, std::less<>> entries_;
};

std::uint64_t parse_u64(std::string_view text, std::string_view what);
double parse_double(std::string_view text, std::string_view what);
bool parse_bool(std::string_view text, std::string_view what);
std::uint64_t parse_bytes(std::string_view text, std::string_view what);
std::vector<double> parse_double_list(std::string_view text, std::string_view what);
std::vector<std::string> split_list(std::string_view text, char sep = ',');
std::string_view trim(std::string_view s);

}  // namespace ctdgm
