#pragma once

// Round-trip float formatting shared by every text output format.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace aoe {

// Shortest decimal that parses back to exactly `v` (never more than 17
// significant digits).
std::string format_double(double v);
std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

std::string_view trim(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char sep);

}  // namespace aoe
