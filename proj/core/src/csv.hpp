#pragma once

// Minimal CSV helpers for the files this library writes itself. Fields with
// commas or quotes are quoted; newlines never appear inside a field.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace nalm::csv {

std::vector<std::string> split(std::string_view line);

// Round-trip formatting ("%.17g"); non-finite values as inf, -inf, nan.
std::string format_double(double v);

// Quotes the field when needed; newlines are replaced by spaces.
std::string quote(std::string_view text);

// Throw NalmError mentioning `what` on malformed input.
double parse_double(std::string_view text, std::string_view what);
std::uint64_t parse_uint(std::string_view text, std::string_view what);

}  // namespace nalm::csv
