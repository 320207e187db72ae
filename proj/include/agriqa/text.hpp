#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace agriqa::text {

// Bytes >= 0x80 (UTF-8 multibyte sequences) count as word characters so
// non-ASCII words survive tokenization intact.
inline bool is_word_byte(unsigned char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}
inline bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }
inline bool is_alpha(unsigned char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
inline bool is_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string to_lower(std::string_view s);
std::string_view trim(std::string_view s);

/// Number of UTF-8 code points (continuation bytes are not counted).
std::size_t utf8_length(std::string_view s);

struct TokenSpan {
    std::string token;  // lowercased
    std::size_t begin = 0;
    std::size_t end = 0;
};

/// The tokenizer shared by the metrics, readability counts and run-on
/// detection: lowercase, split on whitespace and punctuation, keep digits.
std::vector<std::string> tokenize(std::string_view s);

/// Same tokens as tokenize(), with byte offsets into the source text.
std::vector<TokenSpan> tokenize_spans(std::string_view s);

/// Maximal digit runs with an optional fractional part, e.g. "2.5", "0422".
std::vector<std::string> numeric_literals(std::string_view s);

bool is_number(std::string_view s);

}  // namespace agriqa::text
