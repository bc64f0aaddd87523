#pragma once

// UTF-8 helpers. Offsets elsewhere in the project count code points, matching
// the character offsets of the SemEval annotations.

#include <cstddef>
#include <string>
#include <string_view>

namespace xote::text {

// Invalid bytes decode to U+FFFD, one per byte.
std::u32string decode_utf8(std::string_view s);
std::string encode_utf8(std::u32string_view s);
std::string encode_utf8(char32_t c);

std::size_t length(std::string_view utf8);
// Code points [start, end) of a UTF-8 string.
std::string substr(std::string_view utf8, std::size_t start, std::size_t end);

bool is_space(char32_t c);
bool is_punct(char32_t c);

// Lowercases ASCII, Latin-1, Latin Extended-A, Greek and Cyrillic letters.
char32_t to_lower(char32_t c);
std::string to_lower(std::string_view utf8);

}  // namespace xote::text
