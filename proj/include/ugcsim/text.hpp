#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace ugcsim::text {

/// Lowercased word tokens; anything other than ASCII alphanumerics splits.
std::vector<std::string> tokenize(std::string_view s);

/// Whitespace-separated token count; the fallback usage estimate.
std::size_t whitespace_token_count(std::string_view s);

std::string trim(std::string_view s);

/// Trims and collapses every whitespace run to one space.
std::string collapse_whitespace(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Cuts `s` to at most `max_bytes` without splitting a UTF-8 sequence.
std::string truncate_utf8(std::string_view s, std::size_t max_bytes);

/// Fixed-point rendering with trailing zeros removed: 8.10 -> "8.1", 3.0 -> "3".
std::string format_number(double value, int max_decimals = 2);

bool starts_with_ci(std::string_view s, std::string_view prefix);

std::string to_lower(std::string_view s);

}  // namespace ugcsim::text
