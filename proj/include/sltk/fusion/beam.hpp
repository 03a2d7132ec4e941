#pragma once

#include <algorithm>
#include <cmath>
#include <tuple>
#include <vector>

#include "sltk/corpus/vocab.hpp"
#include "sltk/error.hpp"
#include "sltk/fusion/model.hpp"

namespace sltk::fusion {

struct BeamOptions {
    int beam_width = 5;
    double length_penalty = 1.0; // alpha in score / length^alpha
    int max_len = 64;            // generated tokens before forced termination
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(BeamOptions, beam_width, length_penalty, max_len)

struct Hypothesis {
    std::vector<int> tokens; // BOS first, EOS last
    double score = 0.0;      // summed log-probability
    double normalized = 0.0;
    bool forced = false; // EOS appended at max_len, not generated

    // Generated positions, EOS included.
    std::size_t length() const { return tokens.size() - 1; }
};

inline double normalized_score(double score, std::size_t length, double alpha) {
    return alpha == 0.0 ? score : score / std::pow(static_cast<double>(length), alpha);
}

inline bool generatable(int token) {
    return token != corpus::Vocabulary::kPad && token != corpus::Vocabulary::kBos;
}

/// Beam search in which a finished hypothesis keeps its slot: each step the
/// best `beam_width - finished` expansions survive, ranked by raw
/// log-probability (ties: lower beam index, then lower token id). Finished
/// hypotheses are ranked by score / length^alpha. Hypotheses still open after
/// max_len steps get EOS appended and are flagged forced. With beam_width 1
/// this is exactly greedy decoding.
template <class S>
Hypothesis beam_search(FusionModel<S> &model, const EncodedSource<S> &src, const BeamOptions &opt) {
    if (opt.beam_width < 1)
        throw ConfigError("beam_width must be at least 1");
    if (opt.max_len < 1)
        throw ConfigError("max_len must be at least 1");
    struct Live {
        std::vector<int> tokens;
        double score;
    };
    std::vector<Live> live{{{corpus::Vocabulary::kBos}, 0.0}};
    std::vector<Hypothesis> finished;
    const std::size_t width = static_cast<std::size_t>(opt.beam_width);
    for (int step = 0; step < opt.max_len && !live.empty() && finished.size() < width; ++step) {
        std::vector<std::tuple<double, std::size_t, int>> cand;
        for (std::size_t h = 0; h < live.size(); ++h) {
            const auto lp = model.next_log_probs(src, live[h].tokens);
            for (int tok = 0; tok < lp.cols(); ++tok)
                if (generatable(tok))
                    cand.emplace_back(live[h].score + static_cast<double>(lp(tok)), h, tok);
        }
        std::sort(cand.begin(), cand.end(), [](const auto &a, const auto &b) {
            if (std::get<0>(a) != std::get<0>(b))
                return std::get<0>(a) > std::get<0>(b);
            return std::tie(std::get<1>(a), std::get<2>(a)) < std::tie(std::get<1>(b), std::get<2>(b));
        });
        const std::size_t take = std::min(cand.size(), width - finished.size());
        std::vector<Live> next;
        for (std::size_t i = 0; i < take; ++i) {
            const auto &[score, h, tok] = cand[i];
            std::vector<int> tokens = live[h].tokens;
            tokens.push_back(tok);
            if (tok == corpus::Vocabulary::kEos) {
                Hypothesis hyp{std::move(tokens), score, 0.0, false};
                hyp.normalized = normalized_score(score, hyp.length(), opt.length_penalty);
                finished.push_back(std::move(hyp));
            } else {
                next.push_back({std::move(tokens), score});
            }
        }
        live = std::move(next);
    }
    for (auto &l : live) {
        Hypothesis hyp{std::move(l.tokens), l.score, 0.0, true};
        hyp.tokens.push_back(corpus::Vocabulary::kEos);
        hyp.normalized = normalized_score(hyp.score, hyp.length(), opt.length_penalty);
        finished.push_back(std::move(hyp));
    }
    if (finished.empty())
        throw InvariantError("beam search produced no hypothesis");
    std::size_t best = 0;
    for (std::size_t i = 1; i < finished.size(); ++i)
        if (finished[i].normalized > finished[best].normalized)
            best = i;
    return finished[best];
}

/// Argmax rollout (lowest id wins ties), same termination rules as beam_search.
template <class S>
Hypothesis greedy_decode(FusionModel<S> &model, const EncodedSource<S> &src, int max_len, double alpha = 1.0) {
    Hypothesis hyp{{corpus::Vocabulary::kBos}, 0.0, 0.0, false};
    for (int step = 0; step < max_len; ++step) {
        const auto lp = model.next_log_probs(src, hyp.tokens);
        int arg = -1;
        for (int tok = 0; tok < lp.cols(); ++tok)
            if (generatable(tok) && (arg < 0 || lp(tok) > lp(arg)))
                arg = tok;
        hyp.tokens.push_back(arg);
        hyp.score += static_cast<double>(lp(arg));
        if (arg == corpus::Vocabulary::kEos) {
            hyp.normalized = normalized_score(hyp.score, hyp.length(), alpha);
            return hyp;
        }
    }
    hyp.tokens.push_back(corpus::Vocabulary::kEos);
    hyp.forced = true;
    hyp.normalized = normalized_score(hyp.score, hyp.length(), alpha);
    return hyp;
}

} // namespace sltk::fusion
