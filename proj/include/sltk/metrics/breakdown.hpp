#pragma once

#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sltk/metrics/bleu.hpp"
#include "sltk/metrics/rouge.hpp"

namespace sltk::metrics {

struct Scores {
    std::array<double, 4> bleu{}; // BLEU-1..4
    double rouge_l = 0.0;
};

struct SubsetReport {
    std::string name;
    std::string dimension; // partition the subset belongs to
    std::size_t count = 0;
    std::optional<Scores> scores; // absent for an empty subset
};

struct MetricReport {
    std::vector<SubsetReport> subsets;

    const SubsetReport *find(const std::string &name) const {
        for (const auto &s : subsets)
            if (s.name == name)
                return &s;
        return nullptr;
    }
};

inline Scores score_all(const std::vector<EvalPair> &pairs) {
    Scores s;
    const BleuStats st = accumulate_stats(pairs);
    for (int n = 1; n <= 4; ++n)
        s.bleu[n - 1] = bleu_from_stats(st, n);
    s.rouge_l = rouge_l(pairs);
    return s;
}

/// Full metric set over the whole set and each side of the duplicate,
/// source and fingerspelling partitions.
inline MetricReport breakdown(const std::vector<EvalPair> &pairs) {
    struct Def {
        const char *name;
        const char *dimension;
        std::function<bool(const EvalPair &)> keep;
    };
    using corpus::Source;
    const Def defs[] = {
        {"all", "all", [](const EvalPair &) { return true; }},
        {"duplicate", "duplicate", [](const EvalPair &p) { return p.duplicate; }},
        {"non_duplicate", "duplicate", [](const EvalPair &p) { return !p.duplicate; }},
        {"news", "source", [](const EvalPair &p) { return p.source == Source::news; }},
        {"vlog", "source", [](const EvalPair &p) { return p.source == Source::vlog; }},
        {"other", "source", [](const EvalPair &p) { return p.source == Source::other; }},
        {"with_fs", "fingerspelling", [](const EvalPair &p) { return p.has_fingerspelling; }},
        {"without_fs", "fingerspelling", [](const EvalPair &p) { return !p.has_fingerspelling; }},
    };
    MetricReport report;
    for (const Def &d : defs) {
        std::vector<EvalPair> subset;
        for (const auto &p : pairs)
            if (d.keep(p))
                subset.push_back(p);
        SubsetReport s{d.name, d.dimension, subset.size(), std::nullopt};
        if (!subset.empty())
            s.scores = score_all(subset);
        report.subsets.push_back(std::move(s));
    }
    return report;
}

/// One `subset<TAB>metric<TAB>value` line per entry; empty subsets only carry
/// their zero count.
inline std::string format_report(const MetricReport &r) {
    std::string out;
    char buf[64];
    for (const auto &s : r.subsets) {
        out += s.name + "\tpairs\t" + std::to_string(s.count) + "\n";
        if (!s.scores)
            continue;
        for (int n = 0; n < 4; ++n) {
            std::snprintf(buf, sizeof buf, "%.4f", s.scores->bleu[n]);
            out += s.name + "\tBLEU-" + std::to_string(n + 1) + "\t" + buf + "\n";
        }
        std::snprintf(buf, sizeof buf, "%.4f", s.scores->rouge_l);
        out += s.name + "\tROUGE-L\t" + buf + "\n";
    }
    return out;
}

} // namespace sltk::metrics
