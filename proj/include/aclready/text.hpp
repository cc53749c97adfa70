#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace aclready::text {

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
bool iequals(std::string_view a, std::string_view b);
bool ends_with_icase(std::string_view s, std::string_view suffix);

// Collapses every whitespace run to one space and trims the ends.
std::string collapse_whitespace(std::string_view s);

// Lowercase, keep only alphanumerics and single spaces.
std::string normalize_title(std::string_view s);

// Replaces invalid UTF-8 sequences with U+FFFD. Returns the number of
// replacements made through `repairs`.
std::string repair_utf8(std::string_view in, std::size_t& repairs);

std::vector<std::string> split(std::string_view s, char sep);

// Hex-encoded SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

}  // namespace aclready::text
