#include "agriqa/text.hpp"

#include "agriqa/error.hpp"

namespace agriqa {

const char* to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidArgument: return "invalid_argument";
        case ErrorCode::Io: return "io";
        case ErrorCode::Parse: return "parse";
        case ErrorCode::Validation: return "validation";
        case ErrorCode::NoData: return "no_data";
        case ErrorCode::ProviderTimeout: return "provider_timeout";
        case ErrorCode::ProviderStatus: return "provider_status";
        case ErrorCode::ProviderMalformed: return "provider_malformed";
        case ErrorCode::ProviderUnreachable: return "provider_unreachable";
        case ErrorCode::ProviderEmpty: return "provider_empty";
        case ErrorCode::Network: return "network";
        case ErrorCode::Internal: return "internal";
    }
    return "unknown";
}

}  // namespace agriqa

namespace agriqa::text {

std::string to_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

std::string_view trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::size_t utf8_length(std::string_view s) {
    std::size_t n = 0;
    for (unsigned char c : s) {
        if ((c & 0xC0) != 0x80) ++n;
    }
    return n;
}

std::vector<TokenSpan> tokenize_spans(std::string_view s) {
    std::vector<TokenSpan> out;
    std::size_t i = 0;
    while (i < s.size()) {
        if (!is_word_byte(static_cast<unsigned char>(s[i]))) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < s.size() && is_word_byte(static_cast<unsigned char>(s[j]))) ++j;
        out.push_back({to_lower(s.substr(i, j - i)), i, j});
        i = j;
    }
    return out;
}

std::vector<std::string> tokenize(std::string_view s) {
    std::vector<std::string> out;
    for (auto& t : tokenize_spans(s)) out.push_back(std::move(t.token));
    return out;
}

std::vector<std::string> numeric_literals(std::string_view s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        if (!is_digit(static_cast<unsigned char>(s[i]))) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < s.size() && is_digit(static_cast<unsigned char>(s[j]))) ++j;
        if (j + 1 < s.size() && s[j] == '.' && is_digit(static_cast<unsigned char>(s[j + 1]))) {
            ++j;
            while (j < s.size() && is_digit(static_cast<unsigned char>(s[j]))) ++j;
        }
        out.emplace_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

bool is_number(std::string_view s) {
    if (s.empty() || !is_digit(static_cast<unsigned char>(s.front()))) return false;
    std::size_t i = 0;
    while (i < s.size() && is_digit(static_cast<unsigned char>(s[i]))) ++i;
    if (i == s.size()) return true;
    if (s[i] != '.' || i + 1 >= s.size()) return false;
    ++i;
    while (i < s.size() && is_digit(static_cast<unsigned char>(s[i]))) ++i;
    return i == s.size();
}

}  // namespace agriqa::text
