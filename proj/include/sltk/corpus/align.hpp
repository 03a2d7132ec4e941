#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "sltk/corpus/captions.hpp"
#include "sltk/corpus/manifest.hpp"
#include "sltk/error.hpp"
#include "sltk/text.hpp"

namespace sltk::corpus {

/// Cue texts with whitespace collapsed, joined by single spaces. This is the
/// string `segment_sentences` is expected to run on before alignment.
inline std::string transcript_of(const std::vector<CaptionCue> &cues) {
    std::vector<std::string> parts;
    parts.reserve(cues.size());
    for (const CaptionCue &c : cues)
        parts.push_back(text::collapse_whitespace(c.text));
    return text::join(parts);
}

inline std::string make_clip_id(const std::string &video_id, std::size_t ordinal) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%04zu", ordinal);
    return video_id.empty() ? std::string(buf) : video_id + "-" + buf;
}

/// Maps each sentence back onto cue time.
///
/// Every cue's interval is divided among the sentence pieces that fall inside
/// it in proportion to their character counts (separating whitespace carries
/// no weight). A sentence spans from the start of its first piece to the end
/// of its last piece. Boundaries are rounded on cumulative character offsets,
/// so the pieces of one cue tile its interval exactly.
inline std::vector<ClipRecord> align_sentences_to_cues(const std::vector<CaptionCue> &cues,
                                                       const std::vector<std::string> &sentences,
                                                       const std::string &video_id = "") {
    struct CueSpan {
        std::size_t begin, end;
    };
    std::vector<CueSpan> spans;
    std::string transcript;
    for (const CaptionCue &c : cues) {
        if (!transcript.empty())
            transcript.push_back(' ');
        std::string t = text::collapse_whitespace(c.text);
        spans.push_back({transcript.size(), transcript.size() + t.size()});
        transcript += t;
    }

    struct SentenceSpan {
        std::size_t begin, end;
    };
    std::vector<SentenceSpan> located;
    std::size_t cursor = 0;
    for (const std::string &raw : sentences) {
        std::string s = text::collapse_whitespace(raw);
        std::size_t at = s.empty() ? std::string::npos : transcript.find(s, cursor);
        if (at == std::string::npos)
            throw AlignmentError("sentence not found in cue stream: \"" + raw + "\"");
        located.push_back({at, at + s.size()});
        cursor = at + s.size();
    }

    std::vector<Millis> first_start(located.size(), -1), last_end(located.size(), -1);
    for (std::size_t c = 0; c < cues.size(); ++c) {
        const CueSpan cs = spans[c];
        struct Piece {
            std::size_t sentence, weight;
        };
        std::vector<Piece> pieces;
        std::size_t total = 0;
        for (std::size_t s = 0; s < located.size(); ++s) {
            std::size_t b = std::max(cs.begin, located[s].begin), e = std::min(cs.end, located[s].end);
            if (b < e) {
                pieces.push_back({s, e - b});
                total += e - b;
            }
        }
        const Millis start = cues[c].start_ms, dur = cues[c].end_ms - cues[c].start_ms;
        std::size_t cum = 0;
        for (const Piece &p : pieces) {
            auto at = [&](std::size_t chars) {
                // round(dur * chars / total), non-negative operands
                return start + (2 * dur * static_cast<Millis>(chars) + static_cast<Millis>(total)) /
                                   (2 * static_cast<Millis>(total));
            };
            Millis b = at(cum);
            cum += p.weight;
            Millis e = at(cum);
            if (first_start[p.sentence] < 0)
                first_start[p.sentence] = b;
            last_end[p.sentence] = e;
        }
    }

    std::vector<ClipRecord> records;
    for (std::size_t s = 0; s < located.size(); ++s) {
        ClipRecord r;
        r.clip_id = make_clip_id(video_id, s);
        r.video_id = video_id;
        r.start_ms = first_start[s];
        r.end_ms = last_end[s];
        r.text = text::collapse_whitespace(sentences[s]);
        if (r.end_ms <= r.start_ms)
            throw AlignmentError("sentence maps to an empty interval: \"" + sentences[s] + "\"");
        records.push_back(std::move(r));
    }
    std::stable_sort(records.begin(), records.end(),
                     [](const ClipRecord &a, const ClipRecord &b) { return a.start_ms < b.start_ms; });
    return records;
}

/// Pads both ends by `pad_sec`, clamped to [0, video_duration_sec].
inline ClipRecord extend_boundaries(ClipRecord rec, double pad_sec, double video_duration_sec) {
    const Millis pad = std::llround(pad_sec * 1000.0);
    const Millis duration = std::llround(video_duration_sec * 1000.0);
    rec.start_ms = std::max<Millis>(0, rec.start_ms - pad);
    rec.end_ms = std::min<Millis>(duration, rec.end_ms + pad);
    return rec;
}

} // namespace sltk::corpus
