#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "sltk/text.hpp"

namespace sltk::corpus {

inline constexpr std::array<std::string_view, 8> kAbbreviations = {"Dr.", "Mr.", "Mrs.", "Ms.",
                                                                   "St.", "U.S.", "e.g.", "i.e."};

namespace detail {

inline bool is_abbreviation(std::string_view token) {
    while (!token.empty() && !text::is_ascii_alnum(token.front()))
        token.remove_prefix(1);
    for (std::string_view a : kAbbreviations)
        if (token == a)
            return true;
    return false;
}

} // namespace detail

/// Rule-based sentence splitter: a boundary sits after '.', '!' or '?' when it
/// is followed by whitespace and then an uppercase ASCII letter, unless the
/// word carrying the mark is a known abbreviation. Sentences are trimmed;
/// interior whitespace is preserved.
inline std::vector<std::string> segment_sentences(std::string_view transcript) {
    std::vector<std::string> out;
    std::size_t start = 0;
    const std::size_t n = transcript.size();
    for (std::size_t i = 0; i < n; ++i) {
        char c = transcript[i];
        if (c != '.' && c != '!' && c != '?')
            continue;
        std::size_t j = i + 1;
        if (j >= n || !text::is_space(transcript[j]))
            continue;
        while (j < n && text::is_space(transcript[j]))
            ++j;
        if (j >= n || transcript[j] < 'A' || transcript[j] > 'Z')
            continue;
        std::size_t w = i;
        while (w > start && !text::is_space(transcript[w - 1]))
            --w;
        if (detail::is_abbreviation(transcript.substr(w, i + 1 - w)))
            continue;
        std::string_view sentence = text::trim(transcript.substr(start, i + 1 - start));
        if (!sentence.empty())
            out.emplace_back(sentence);
        start = i + 1;
    }
    std::string_view tail = text::trim(transcript.substr(start));
    if (!tail.empty())
        out.emplace_back(tail);
    return out;
}

} // namespace sltk::corpus
