#pragma once

#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace probetraj::cli {

inline constexpr std::string_view kToolName = "probetraj";
inline constexpr std::string_view kVersion = "0.1.0";

// args excludes the program name. Exit status: 0 success, 1 bad input or
// usage, 2 internal failure (including a failing selftest).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace probetraj::cli
