#pragma once

#include <algorithm>
#include <cstddef>
#include <string_view>
#include <vector>

namespace sltk::spotting {

/// Unit-cost Levenshtein distance, two-row DP.
inline std::size_t levenshtein(std::string_view a, std::string_view b) {
    if (a.size() < b.size())
        std::swap(a, b);
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j)
        prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

/// Levenshtein distance divided by the longer length; 0 for two empty strings.
inline double normalized_edit_distance(std::string_view a, std::string_view b) {
    const std::size_t longest = std::max(a.size(), b.size());
    if (longest == 0)
        return 0.0;
    return static_cast<double>(levenshtein(a, b)) / static_cast<double>(longest);
}

} // namespace sltk::spotting
