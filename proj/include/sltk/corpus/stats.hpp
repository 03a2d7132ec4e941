#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sltk/corpus/manifest.hpp"
#include "sltk/text.hpp"

namespace sltk::corpus {

struct DuplicatePartition {
    std::vector<ClipRecord> duplicate;
    std::vector<ClipRecord> non_duplicate;

    double duplicate_ratio() const {
        std::size_t n = duplicate.size() + non_duplicate.size();
        return n == 0 ? 0.0 : static_cast<double>(duplicate.size()) / static_cast<double>(n);
    }
};

inline std::set<std::string> normalized_set(const std::vector<ClipRecord> &records) {
    std::set<std::string> out;
    for (const ClipRecord &r : records)
        out.insert(text::normalize(r.text));
    return out;
}

/// An eval record is a duplicate iff its normalized token sequence equals that
/// of some train record. Input order is kept within each side.
inline DuplicatePartition detect_duplicates(const std::vector<ClipRecord> &eval,
                                            const std::vector<ClipRecord> &train) {
    const auto seen = normalized_set(train);
    DuplicatePartition p;
    for (const ClipRecord &r : eval)
        (seen.count(text::normalize(r.text)) ? p.duplicate : p.non_duplicate).push_back(r);
    return p;
}

struct CorpusStats {
    std::size_t num_records = 0;
    std::map<std::size_t, std::size_t> length_histogram; // words per sentence -> records
    std::map<std::string, double> signer_share;          // over records with a known signer
    std::size_t unknown_signer = 0;
    std::map<Source, std::size_t> source_counts;
    std::optional<std::size_t> duplicates; // vs a reference split, when given
    double total_hours = 0.0;
};

inline CorpusStats corpus_stats(const std::vector<ClipRecord> &records,
                                const std::vector<ClipRecord> *reference = nullptr) {
    CorpusStats s;
    s.num_records = records.size();
    std::map<std::string, std::size_t> signer_counts;
    std::size_t known = 0;
    Millis total_ms = 0;
    for (const ClipRecord &r : records) {
        ++s.length_histogram[text::tokenize(r.text).size()];
        ++s.source_counts[r.source];
        total_ms += r.duration_ms();
        if (r.signer_id && !r.signer_id->empty()) {
            ++signer_counts[*r.signer_id];
            ++known;
        } else {
            ++s.unknown_signer;
        }
    }
    for (const auto &[id, c] : signer_counts)
        s.signer_share[id] = static_cast<double>(c) / static_cast<double>(known);
    if (reference)
        s.duplicates = detect_duplicates(records, *reference).duplicate.size();
    s.total_hours = static_cast<double>(total_ms) / 3.6e6;
    return s;
}

inline nlohmann::json stats_json(const CorpusStats &s) {
    nlohmann::json hist = nlohmann::json::object();
    for (const auto &[len, n] : s.length_histogram)
        hist[std::to_string(len)] = n;
    nlohmann::json sources = nlohmann::json::object();
    for (const auto &[src, n] : s.source_counts)
        sources[to_string(src)] = n;
    nlohmann::json j{{"records", s.num_records},          {"hours", s.total_hours},
                     {"sentence_length_histogram", hist}, {"signer_share", s.signer_share},
                     {"unknown_signer_records", s.unknown_signer}, {"source_counts", sources}};
    if (s.duplicates)
        j["duplicates"] = *s.duplicates;
    return j;
}

} // namespace sltk::corpus
