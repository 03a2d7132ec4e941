#pragma once

#include <vector>

#include "sltk/metrics/bleu.hpp"

namespace sltk::metrics {

inline std::size_t lcs_length(const Tokens &a, const Tokens &b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

// LCS F1 in [0, 1]; 0 when either side is empty.
inline double rouge_l_sentence(const Tokens &hyp, const Tokens &ref) {
    if (hyp.empty() || ref.empty())
        return 0.0;
    const double lcs = static_cast<double>(lcs_length(hyp, ref));
    if (lcs == 0.0)
        return 0.0;
    const double p = lcs / static_cast<double>(hyp.size());
    const double r = lcs / static_cast<double>(ref.size());
    return 2.0 * p * r / (p + r);
}

/// Mean sentence-level ROUGE-L F1, scaled to [0, 100].
inline double rouge_l(const std::vector<EvalPair> &pairs) {
    if (pairs.empty())
        throw InputError("rouge_l: no pairs to score");
    double sum = 0.0;
    for (const auto &p : pairs)
        sum += rouge_l_sentence(p.hypothesis, p.reference);
    return 100.0 * sum / static_cast<double>(pairs.size());
}

} // namespace sltk::metrics
