#include "ctdgm/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>

#include "ctdgm/error.hpp"

namespace ctdgm {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_list(std::string_view text, char sep) {
  std::vector<std::string> out;
  text = trim(text);
  if (text.empty()) return out;
  std::size_t start = 0;
  while (true) {
    auto pos = text.find(sep, start);
    auto piece = trim(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    out.emplace_back(piece);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::uint64_t parse_u64(std::string_view text, std::string_view what) {
  text = trim(text);
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || p != text.data() + text.size() || text.empty())
    throw ConfigError(std::string(what) + ": expected a non-negative integer, got '" + std::string(text) + "'");
  return v;
}

double parse_double(std::string_view text, std::string_view what) {
  text = trim(text);
  double v = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || p != text.data() + text.size() || text.empty())
    throw ConfigError(std::string(what) + ": expected a number, got '" + std::string(text) + "'");
  return v;
}

bool parse_bool(std::string_view text, std::string_view what) {
  std::string t(trim(text));
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "1" || t == "true" || t == "yes" || t == "on") return true;
  if (t == "0" || t == "false" || t == "no" || t == "off") return false;
  throw ConfigError(std::string(what) + ": expected a boolean, got '" + t + "'");
}

std::uint64_t parse_bytes(std::string_view text, std::string_view what) {
  text = trim(text);
  std::uint64_t mult = 1;
  if (!text.empty()) {
    switch (std::toupper(static_cast<unsigned char>(text.back()))) {
      case 'K': mult = 1ull << 10; break;
      case 'M': mult = 1ull << 20; break;
      case 'G': mult = 1ull << 30; break;
      default: break;
    }
    if (mult != 1) text.remove_suffix(1);
  }
  const auto v = parse_u64(text, what);
  if (v > UINT64_MAX / mult) throw ConfigError(std::string(what) + ": byte count overflows");
  return v * mult;
}

std::vector<double> parse_double_list(std::string_view text, std::string_view what) {
  std::vector<double> out;
  for (const auto& piece : split_list(text)) out.push_back(parse_double(piece, what));
  return out;
}

KeyValues KeyValues::parse(std::istream& in, const std::string& origin) {
  KeyValues kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    auto eq = view.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key=value");
    auto key = trim(view.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
    kv.set(std::string(key), std::string(trim(view.substr(eq + 1))));
  }
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  return parse(in, path.string());
}

void KeyValues::set(std::string key, std::string value) { entries_[std::move(key)] = std::move(value); }

bool KeyValues::contains(std::string_view key) const { return entries_.find(key) != entries_.end(); }

std::optional<std::string> KeyValues::get(std::string_view key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::string KeyValues::get_string(std::string_view key, std::string fallback) const {
  auto v = get(key);
  return v ? *v : std::move(fallback);
}

std::uint64_t KeyValues::get_u64(std::string_view key, std::uint64_t fallback) const {
  auto v = get(key);
  return v ? parse_u64(*v, key) : fallback;
}

double KeyValues::get_double(std::string_view key, double fallback) const {
  auto v = get(key);
  return v ? parse_double(*v, key) : fallback;
}

bool KeyValues::get_bool(std::string_view key, bool fallback) const {
  auto v = get(key);
  return v ? parse_bool(*v, key) : fallback;
}

std::uint64_t KeyValues::get_bytes(std::string_view key, std::uint64_t fallback) const {
  auto v = get(key);
  return v ? parse_bytes(*v, key) : fallback;
}

}  // namespace ctdgm
