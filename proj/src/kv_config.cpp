#include "probetraj/kv_config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>

#include "probetraj/errors.hpp"

namespace probetraj {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const char* want) {
  throw Error(ErrorKind::kValidation, "config key '" + key + "': expected " + want + ", got '" + value + "'");
}

}  // namespace

std::string normalize_key(std::string_view key) {
  std::string out(trim(key));
  for (auto& ch : out) {
    ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (ch == '-') ch = '_';
  }
  return out;
}

KvPairs parse_kv_config(std::string_view text) {
  KvPairs out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorKind::kValidation, "config line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = normalize_key(line.substr(0, eq));
    if (key.empty()) throw Error(ErrorKind::kValidation, "config line " + std::to_string(line_no) + ": empty key");
    std::string value(trim(line.substr(eq + 1)));
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& kv) { return kv.first == key; });
    if (it != out.end()) {
      it->second = std::move(value);
    } else {
      out.emplace_back(std::move(key), std::move(value));
    }
  }
  return out;
}

std::vector<std::string> split_list(std::string_view text) {
  text = trim(text);
  if (text.size() >= 2 && text.front() == '[' && text.back() == ']') text = trim(text.substr(1, text.size() - 2));
  std::vector<std::string> out;
  if (text.empty()) return out;
  while (true) {
    const auto comma = text.find(',');
    out.emplace_back(trim(text.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    text = text.substr(comma + 1);
  }
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const auto* end = value.data() + value.size();
  const auto [p, ec] = std::from_chars(value.data(), end, v);
  if (value.empty() || ec != std::errc() || p != end) bad(key, value, "a non-negative integer");
  return v;
}

std::uint32_t parse_u32(const std::string& key, const std::string& value) {
  const auto v = parse_u64(key, value);
  if (v > std::numeric_limits<std::uint32_t>::max()) bad(key, value, "a 32-bit integer");
  return static_cast<std::uint32_t>(v);
}

double parse_real(const std::string& key, const std::string& value) {
  double v = 0.0;
  std::size_t used = 0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    bad(key, value, "a real number");
  }
  if (used != value.size() || !std::isfinite(v)) bad(key, value, "a finite real number");
  return v;
}

}  // namespace probetraj
