#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace sltk::text {

inline bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline bool is_ascii_alnum(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

inline bool is_ascii_punct(char c) {
    return std::ispunct(static_cast<unsigned char>(c)) != 0;
}

inline std::string_view trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && is_space(s[b]))
        ++b;
    while (e > b && is_space(s[e - 1]))
        --e;
    return s.substr(b, e - b);
}

// Collapses every whitespace run to one space and trims the ends.
inline std::string collapse_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending = false;
    for (char c : s) {
        if (is_space(c)) {
            pending = !out.empty();
            continue;
        }
        if (pending)
            out.push_back(' ');
        pending = false;
        out.push_back(c);
    }
    return out;
}

inline std::vector<std::string> split_whitespace(std::string_view s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && is_space(s[i]))
            ++i;
        std::size_t j = i;
        while (j < s.size() && !is_space(s[j]))
            ++j;
        if (j > i)
            out.emplace_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

inline std::string join(const std::vector<std::string> &parts, std::string_view sep = " ") {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i)
            out.append(sep);
        out.append(parts[i]);
    }
    return out;
}

inline std::string to_upper_ascii(std::string_view s) {
    std::string out(s);
    for (char &c : out)
        c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

/// Shared tokenizer for vocabulary, duplicate detection, spotting and metrics.
///
/// ASCII letters are lowercased, ASCII punctuation is removed except an
/// apostrophe with an alphanumeric character on both sides, and the result is
/// split on whitespace. Non-ASCII bytes pass through untouched.
inline std::vector<std::string> tokenize(std::string_view s) {
    std::vector<std::string> tokens;
    for (const std::string &raw : split_whitespace(s)) {
        std::string tok;
        for (std::size_t i = 0; i < raw.size(); ++i) {
            char c = raw[i];
            if (c == '\'') {
                bool internal = i > 0 && i + 1 < raw.size() && is_ascii_alnum(raw[i - 1]) &&
                                is_ascii_alnum(raw[i + 1]);
                if (internal)
                    tok.push_back(c);
                continue;
            }
            if (is_ascii_punct(c))
                continue;
            tok.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
        if (!tok.empty())
            tokens.push_back(std::move(tok));
    }
    return tokens;
}

inline std::string normalize(std::string_view s) { return join(tokenize(s)); }

} // namespace sltk::text
