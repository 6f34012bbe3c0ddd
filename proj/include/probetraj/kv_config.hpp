#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace probetraj {

// Flat "key = value" lines; blank lines and '#' comments ignored. Keys are
// lower-cased with '-' folded to '_'. Later duplicates win.
using KvPairs = std::vector<std::pair<std::string, std::string>>;

KvPairs parse_kv_config(std::string_view text);
std::string normalize_key(std::string_view key);

// Comma-separated list with surrounding whitespace trimmed; brackets allowed.
std::vector<std::string> split_list(std::string_view text);

std::uint32_t parse_u32(const std::string& key, const std::string& value);
std::uint64_t parse_u64(const std::string& key, const std::string& value);
double parse_real(const std::string& key, const std::string& value);

}  // namespace probetraj
