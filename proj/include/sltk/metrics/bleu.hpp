#pragma once

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "sltk/corpus/manifest.hpp"
#include "sltk/error.hpp"

namespace sltk::metrics {

using Tokens = std::vector<std::string>;

struct EvalPair {
    std::string clip_id;
    Tokens hypothesis;
    Tokens reference;
    bool duplicate = false;
    bool has_fingerspelling = false;
    corpus::Source source = corpus::Source::other;
};

/// Sufficient statistics for corpus BLEU up to 4-grams. Summable, so
/// corpus BLEU does not depend on pair order.
struct BleuStats {
    std::array<long, 4> matched{};
    std::array<long, 4> total{};
    long hyp_len = 0;
    long ref_len = 0;

    BleuStats &operator+=(const BleuStats &o) {
        for (int n = 0; n < 4; ++n) {
            matched[n] += o.matched[n];
            total[n] += o.total[n];
        }
        hyp_len += o.hyp_len;
        ref_len += o.ref_len;
        return *this;
    }
};

inline std::map<Tokens, long> ngram_counts(const Tokens &t, std::size_t n) {
    std::map<Tokens, long> counts;
    for (std::size_t i = 0; i + n <= t.size(); ++i)
        ++counts[Tokens(t.begin() + static_cast<long>(i), t.begin() + static_cast<long>(i + n))];
    return counts;
}

inline BleuStats sentence_stats(const Tokens &hyp, const Tokens &ref) {
    BleuStats s;
    s.hyp_len = static_cast<long>(hyp.size());
    s.ref_len = static_cast<long>(ref.size());
    for (std::size_t n = 1; n <= 4; ++n) {
        auto h = ngram_counts(hyp, n);
        auto r = ngram_counts(ref, n);
        for (const auto &[g, c] : h) {
            auto it = r.find(g);
            if (it != r.end())
                s.matched[n - 1] += std::min(c, it->second);
        }
        s.total[n - 1] = hyp.size() >= n ? static_cast<long>(hyp.size() - n + 1) : 0;
    }
    return s;
}

/// Unsmoothed BLEU-max_n from accumulated statistics, scaled to [0, 100].
inline double bleu_from_stats(const BleuStats &s, int max_n) {
    if (max_n < 1 || max_n > 4)
        throw InputError("bleu: max_n must be in 1..4");
    if (s.hyp_len == 0)
        return 0.0;
    double log_p = 0.0;
    for (int n = 0; n < max_n; ++n) {
        if (s.matched[n] == 0 || s.total[n] == 0)
            return 0.0;
        log_p += std::log(static_cast<double>(s.matched[n]) / static_cast<double>(s.total[n]));
    }
    log_p /= max_n;
    const double c = static_cast<double>(s.hyp_len), r = static_cast<double>(s.ref_len);
    const double log_bp = c > r ? 0.0 : 1.0 - r / c;
    return 100.0 * std::exp(log_bp + log_p);
}

inline BleuStats accumulate_stats(const std::vector<EvalPair> &pairs) {
    BleuStats total;
    for (const auto &p : pairs)
        total += sentence_stats(p.hypothesis, p.reference);
    return total;
}

inline double bleu(const std::vector<EvalPair> &pairs, int max_n) {
    if (pairs.empty())
        throw InputError("bleu: no pairs to score");
    return bleu_from_stats(accumulate_stats(pairs), max_n);
}

} // namespace sltk::metrics
