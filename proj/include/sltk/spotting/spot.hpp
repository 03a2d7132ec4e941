#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "sltk/error.hpp"
#include "sltk/spotting/edit_distance.hpp"
#include "sltk/spotting/streams.hpp"
#include "sltk/text.hpp"

namespace sltk::spotting {

struct SpotConfig {
    double delta_l = 0.6;  // lexical acceptance threshold on p_w
    double delta_f = 0.2;  // max normalized edit distance for fingerspelling
    double conf_min = 0.5; // detector confidence floor
    int window_len = 32;
    int stride = 8;
    int min_fs_word_len = 3;
    double overlap_iou = 0.5;

    void validate() const {
        auto unit = [](double v, const char *name) {
            if (!(v >= 0.0 && v <= 1.0))
                throw ConfigError(std::string("spot.") + name + " must lie in [0,1]");
        };
        unit(delta_l, "delta_l");
        unit(delta_f, "delta_f");
        unit(conf_min, "conf_min");
        unit(overlap_iou, "overlap_iou");
        if (window_len <= 0 || stride <= 0 || min_fs_word_len <= 0)
            throw ConfigError("spot.window_len, spot.stride and spot.min_fs_word_len must be positive");
        if (stride > window_len)
            throw ConfigError("spot.stride must not exceed spot.window_len");
    }

    bool operator==(const SpotConfig &) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SpotConfig, delta_l, delta_f, conf_min, window_len, stride,
                                                min_fs_word_len, overlap_iou)

enum class SpotKind { lexical, fingerspelled };

NLOHMANN_JSON_SERIALIZE_ENUM(SpotKind, {{SpotKind::lexical, "lexical"}, {SpotKind::fingerspelled, "fingerspelled"}})

struct SpottedSign {
    std::string clip_id;
    std::uint32_t start_frame = 0;
    std::uint32_t end_frame = 0;
    std::string word;
    SpotKind kind = SpotKind::lexical;
    double score = 0.0;

    bool operator==(const SpottedSign &) const = default;
};

struct FrameInterval {
    std::uint32_t begin = 0; // inclusive
    std::uint32_t end = 0;   // exclusive

    bool operator==(const FrameInterval &) const = default;
};

/// Windows [k*stride, k*stride + window_len) that fit inside the clip. A clip
/// shorter than one window yields the single window [0, num_frames).
inline std::vector<FrameInterval> slide_windows(std::uint32_t num_frames, std::uint32_t window_len,
                                                std::uint32_t stride) {
    if (num_frames == 0)
        throw InputError("slide_windows: clip has no frames");
    if (window_len == 0 || stride == 0)
        throw ConfigError("slide_windows: window_len and stride must be positive");
    std::vector<FrameInterval> out;
    if (num_frames < window_len)
        return {{0, num_frames}};
    for (std::uint32_t s = 0; s + window_len <= num_frames; s += stride)
        out.push_back({s, s + window_len});
    return out;
}

inline double interval_iou(std::uint32_t s1, std::uint32_t e1, std::uint32_t s2, std::uint32_t e2) {
    const double inter = std::max<double>(0.0, static_cast<double>(std::min(e1, e2)) -
                                                   static_cast<double>(std::max(s1, s2)));
    const double uni = static_cast<double>(e1 - s1) + static_cast<double>(e2 - s2) - inter;
    return uni <= 0.0 ? 0.0 : inter / uni;
}

namespace detail {

inline std::vector<std::string> unique_in_order(const std::vector<std::string> &tokens) {
    std::vector<std::string> out;
    for (const auto &t : tokens)
        if (std::find(out.begin(), out.end(), t) == out.end())
            out.push_back(t);
    return out;
}

// Uppercase A-Z only; apostrophes and digits do not appear in a letter hypothesis.
inline std::string letters_of(const std::string &token) {
    std::string out;
    for (char c : text::to_upper_ascii(token))
        if (c >= 'A' && c <= 'Z')
            out.push_back(c);
    return out;
}

} // namespace detail

/// Every (window, sentence word) pair whose posterior reaches delta_l, in
/// window order then first-occurrence order of the word in the sentence.
/// Sign vocabulary entries are matched after tokenizer normalization.
inline std::vector<SpottedSign> spot_lexical(const PosteriorStream &stream,
                                             const std::vector<std::string> &sentence_tokens,
                                             const SpotConfig &cfg) {
    std::vector<SpottedSign> out;
    if (sentence_tokens.empty())
        return out;
    std::unordered_map<std::string, std::size_t> class_of;
    for (std::size_t i = 0; i < stream.sign_vocab.size(); ++i)
        class_of.emplace(text::normalize(stream.sign_vocab[i]), i);
    std::vector<std::pair<std::string, std::size_t>> targets;
    for (const auto &w : detail::unique_in_order(sentence_tokens))
        if (auto it = class_of.find(w); it != class_of.end())
            targets.emplace_back(w, it->second);
    for (const auto &win : stream.windows) {
        for (const auto &[w, cls] : targets) {
            const double p = win.probs[cls];
            if (p >= cfg.delta_l)
                out.push_back({stream.clip_id, win.start_frame, win.end_frame, w, SpotKind::lexical, p});
        }
    }
    return out;
}

/// Matches each confident proposal against sentence words and runs of up to
/// three consecutive words. The single closest candidate is kept when its
/// normalized edit distance is within delta_f; score = 1 - distance.
inline std::vector<SpottedSign> spot_fingerspelling(const std::vector<FsProposal> &proposals,
                                                    const std::vector<std::string> &sentence_tokens,
                                                    const SpotConfig &cfg) {
    struct Candidate {
        std::string letters;
        std::string word;
    };
    std::vector<Candidate> candidates;
    for (std::size_t i = 0; i < sentence_tokens.size(); ++i) {
        std::string letters, word;
        for (std::size_t len = 1; len <= 3 && i + len <= sentence_tokens.size(); ++len) {
            const std::string &tok = sentence_tokens[i + len - 1];
            letters += detail::letters_of(tok);
            word += (len > 1 ? " " : "") + tok;
            if (letters.size() >= static_cast<std::size_t>(cfg.min_fs_word_len))
                candidates.push_back({letters, word});
        }
    }
    std::vector<SpottedSign> out;
    if (candidates.empty())
        return out;
    for (const FsProposal &p : proposals) {
        if (p.confidence < cfg.conf_min)
            continue;
        std::size_t best = 0;
        double best_d = 2.0;
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            double d = normalized_edit_distance(p.letters, candidates[c].letters);
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        if (best_d <= cfg.delta_f)
            out.push_back({p.clip_id, p.start_frame, p.end_frame, candidates[best].word, SpotKind::fingerspelled,
                           1.0 - best_d});
    }
    return out;
}

inline bool spot_less(const SpottedSign &a, const SpottedSign &b) {
    return std::tie(a.clip_id, a.start_frame, a.end_frame, a.kind, a.word, a.score) <
           std::tie(b.clip_id, b.start_frame, b.end_frame, b.kind, b.word, b.score);
}

/// Greedy non-maximum suppression within each kind. Candidates are visited by
/// descending score (ties: earlier start, then word); a candidate survives if
/// its IoU with every survivor of the same kind is at most overlap_iou.
/// Output is sorted by (start, end, kind, word).
inline std::vector<SpottedSign> resolve_overlaps(std::vector<SpottedSign> spots, double overlap_iou) {
    std::stable_sort(spots.begin(), spots.end(), [](const SpottedSign &a, const SpottedSign &b) {
        if (a.score != b.score)
            return a.score > b.score;
        if (a.start_frame != b.start_frame)
            return a.start_frame < b.start_frame;
        if (a.word != b.word)
            return a.word < b.word;
        return std::tie(a.end_frame, a.kind) < std::tie(b.end_frame, b.kind);
    });
    std::vector<SpottedSign> kept;
    for (auto &s : spots) {
        bool ok = std::all_of(kept.begin(), kept.end(), [&](const SpottedSign &k) {
            return k.kind != s.kind ||
                   interval_iou(k.start_frame, k.end_frame, s.start_frame, s.end_frame) <= overlap_iou;
        });
        if (ok)
            kept.push_back(std::move(s));
    }
    std::sort(kept.begin(), kept.end(), spot_less);
    return kept;
}

/// Lexical + fingerspelling search for one clip, overlaps resolved.
inline std::vector<SpottedSign> spot_clip(const PosteriorStream *stream, const std::vector<FsProposal> &proposals,
                                          const std::vector<std::string> &sentence_tokens, const SpotConfig &cfg) {
    std::vector<SpottedSign> all;
    if (stream)
        all = spot_lexical(*stream, sentence_tokens, cfg);
    auto fs = spot_fingerspelling(proposals, sentence_tokens, cfg);
    all.insert(all.end(), fs.begin(), fs.end());
    return resolve_overlaps(std::move(all), cfg.overlap_iou);
}

struct PretrainRecord {
    std::string clip_id;
    std::uint32_t start_frame = 0;
    std::uint32_t end_frame = 0;
    std::string word;
    SpotKind kind = SpotKind::lexical;
    double score = 1.0;
    std::string source; // "spotted" or "isolated"

    bool operator==(const PretrainRecord &) const = default;
};

inline void to_json(nlohmann::json &j, const PretrainRecord &r) {
    j = {{"clip_id", r.clip_id}, {"start_frame", r.start_frame}, {"end_frame", r.end_frame},
         {"word", r.word},       {"kind", r.kind},               {"score", r.score},
         {"source", r.source}};
}

inline void from_json(const nlohmann::json &j, PretrainRecord &r) {
    j.at("clip_id").get_to(r.clip_id);
    j.at("start_frame").get_to(r.start_frame);
    j.at("end_frame").get_to(r.end_frame);
    j.at("word").get_to(r.word);
    r.kind = j.value("kind", SpotKind::lexical);
    r.score = j.value("score", 1.0);
    r.source = j.value("source", std::string("isolated"));
}

struct PretrainManifest {
    std::vector<PretrainRecord> records;
    std::map<std::string, std::size_t> source_counts;

    std::size_t total() const { return records.size(); }
};

/// Spotted signs (sorted by clip, then time) followed by the optional
/// isolated-sign lexicon in its given order, each tagged with its source.
inline PretrainManifest export_pretraining_manifest(std::vector<SpottedSign> spots,
                                                    const std::vector<PretrainRecord> *isolated_lexicon = nullptr) {
    std::stable_sort(spots.begin(), spots.end(), spot_less);
    PretrainManifest m;
    for (auto &s : spots)
        m.records.push_back({s.clip_id, s.start_frame, s.end_frame, s.word, s.kind, s.score, "spotted"});
    if (isolated_lexicon)
        for (PretrainRecord r : *isolated_lexicon) {
            r.source = "isolated";
            m.records.push_back(std::move(r));
        }
    for (const auto &r : m.records)
        ++m.source_counts[r.source];
    return m;
}

} // namespace sltk::spotting
