#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include "sltk/error.hpp"
#include "sltk/text.hpp"

namespace sltk::corpus {

using Millis = std::int64_t;

inline double to_seconds(Millis ms) { return static_cast<double>(ms) / 1000.0; }

struct CaptionCue {
    std::size_t index = 0;
    Millis start_ms = 0;
    Millis end_ms = 0;
    std::string text;

    double start_sec() const { return to_seconds(start_ms); }
    double end_sec() const { return to_seconds(end_ms); }

    bool operator==(const CaptionCue &) const = default;
};

namespace detail {

struct Line {
    std::string_view text;
    std::size_t number;
};

inline std::vector<Line> split_lines(std::string_view doc) {
    if (doc.size() >= 3 && static_cast<unsigned char>(doc[0]) == 0xEF &&
        static_cast<unsigned char>(doc[1]) == 0xBB && static_cast<unsigned char>(doc[2]) == 0xBF)
        doc.remove_prefix(3);
    std::vector<Line> lines;
    std::size_t pos = 0, number = 1;
    while (pos <= doc.size()) {
        std::size_t nl = doc.find('\n', pos);
        std::size_t end = nl == std::string_view::npos ? doc.size() : nl;
        std::string_view l = doc.substr(pos, end - pos);
        if (!l.empty() && l.back() == '\r')
            l.remove_suffix(1);
        lines.push_back({l, number++});
        if (nl == std::string_view::npos)
            break;
        pos = nl + 1;
    }
    return lines;
}

// Blank-line separated blocks.
inline std::vector<std::vector<Line>> split_blocks(const std::vector<Line> &lines) {
    std::vector<std::vector<Line>> blocks;
    std::vector<Line> cur;
    for (const Line &l : lines) {
        if (text::trim(l.text).empty()) {
            if (!cur.empty())
                blocks.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(l);
        }
    }
    if (!cur.empty())
        blocks.push_back(std::move(cur));
    return blocks;
}

inline bool parse_digits(std::string_view s, std::int64_t &out) {
    if (s.empty())
        return false;
    out = 0;
    for (char c : s) {
        if (c < '0' || c > '9')
            return false;
        out = out * 10 + (c - '0');
    }
    return true;
}

// [hh:]mm:ss<sep>mmm. `hours_required` selects the SRT form.
inline Millis parse_timestamp(std::string_view ts, char frac_sep, bool hours_required, std::size_t line) {
    auto fail = [&]() -> Millis {
        throw ParseError("malformed timestamp '" + std::string(ts) + "'", line);
    };
    std::size_t dot = ts.rfind(frac_sep);
    if (dot == std::string_view::npos)
        fail();
    std::string_view frac = ts.substr(dot + 1);
    std::string_view hms = ts.substr(0, dot);
    std::int64_t ms = 0;
    if (frac.size() != 3 || !parse_digits(frac, ms))
        fail();
    std::vector<std::string_view> fields;
    std::size_t p = 0;
    while (true) {
        std::size_t c = hms.find(':', p);
        fields.push_back(hms.substr(p, c == std::string_view::npos ? std::string_view::npos : c - p));
        if (c == std::string_view::npos)
            break;
        p = c + 1;
    }
    if (fields.size() < 2 || fields.size() > 3 || (hours_required && fields.size() != 3))
        fail();
    std::int64_t h = 0, m = 0, s = 0;
    if (fields.size() == 3 && !parse_digits(fields[0], h))
        fail();
    std::string_view mm = fields[fields.size() - 2], ss = fields.back();
    if (mm.size() != 2 || ss.size() != 2 || !parse_digits(mm, m) || !parse_digits(ss, s) || m > 59 ||
        s > 59)
        fail();
    return ((h * 60 + m) * 60 + s) * 1000 + ms;
}

inline std::pair<Millis, Millis> parse_timing_line(std::string_view l, char frac_sep, bool hours_required,
                                                   std::size_t line) {
    std::size_t arrow = l.find("-->");
    if (arrow == std::string_view::npos)
        throw ParseError("expected timing line", line);
    std::string_view lhs = text::trim(l.substr(0, arrow));
    std::string_view rhs = text::trim(l.substr(arrow + 3));
    // Cue settings (position, align, ...) follow the end timestamp.
    std::size_t sp = 0;
    while (sp < rhs.size() && !text::is_space(rhs[sp]))
        ++sp;
    rhs = rhs.substr(0, sp);
    Millis start = parse_timestamp(lhs, frac_sep, hours_required, line);
    Millis end = parse_timestamp(rhs, frac_sep, hours_required, line);
    if (end <= start)
        throw ParseError("cue end must be after cue start", line);
    return {start, end};
}

// Removes <...> markup and {\...} override codes, decodes the common entities.
inline std::string strip_markup(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (c == '<') {
            std::size_t close = s.find('>', i);
            if (close != std::string_view::npos) {
                i = close;
                continue;
            }
        }
        if (c == '{' && i + 1 < s.size() && s[i + 1] == '\\') {
            std::size_t close = s.find('}', i);
            if (close != std::string_view::npos) {
                i = close;
                continue;
            }
        }
        if (c == '&') {
            static constexpr std::pair<std::string_view, char> entities[] = {
                {"&amp;", '&'}, {"&lt;", '<'}, {"&gt;", '>'}, {"&nbsp;", ' '}, {"&quot;", '"'}, {"&apos;", '\''}};
            bool matched = false;
            for (auto [name, ch] : entities) {
                if (s.substr(i, name.size()) == name) {
                    out.push_back(ch);
                    i += name.size() - 1;
                    matched = true;
                    break;
                }
            }
            if (matched)
                continue;
        }
        out.push_back(c);
    }
    return out;
}

inline std::string payload_text(const std::vector<Line> &block, std::size_t first) {
    std::vector<std::string> lines;
    for (std::size_t i = first; i < block.size(); ++i) {
        std::string l(text::trim(strip_markup(block[i].text)));
        if (!l.empty())
            lines.push_back(std::move(l));
    }
    return text::join(lines, "\n");
}

inline std::vector<CaptionCue> finish(std::vector<CaptionCue> cues) {
    std::stable_sort(cues.begin(), cues.end(),
                     [](const CaptionCue &a, const CaptionCue &b) { return a.start_ms < b.start_ms; });
    for (std::size_t i = 0; i < cues.size(); ++i)
        cues[i].index = i + 1;
    return cues;
}

inline std::string format_timestamp(Millis t, char frac_sep) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%02lld:%02lld:%02lld%c%03lld", static_cast<long long>(t / 3600000),
                  static_cast<long long>(t / 60000 % 60), static_cast<long long>(t / 1000 % 60), frac_sep,
                  static_cast<long long>(t % 1000));
    return buf;
}

} // namespace detail

/// Parses a WebVTT document. NOTE/STYLE/REGION blocks, cue identifiers, cue
/// settings and inline markup are dropped. Cues whose text is empty after
/// markup removal are skipped. Result is stable-sorted by start time and
/// re-indexed from 1.
inline std::vector<CaptionCue> parse_webvtt(std::string_view doc) {
    auto lines = detail::split_lines(doc);
    if (lines.empty() || lines[0].text.substr(0, 6) != "WEBVTT" ||
        (lines[0].text.size() > 6 && !text::is_space(lines[0].text[6])))
        throw ParseError("missing WEBVTT signature", 1);
    auto blocks = detail::split_blocks(lines);
    std::vector<CaptionCue> cues;
    for (std::size_t b = 1; b < blocks.size(); ++b) {
        const auto &block = blocks[b];
        std::string_view head = block[0].text;
        if (head.starts_with("NOTE") || head.starts_with("STYLE") || head.starts_with("REGION"))
            continue;
        std::size_t timing = 0;
        if (head.find("-->") == std::string_view::npos) {
            if (block.size() < 2 || block[1].text.find("-->") == std::string_view::npos)
                throw ParseError("cue block without timing line", block[0].number);
            timing = 1;
        }
        auto [start, end] = detail::parse_timing_line(block[timing].text, '.', false, block[timing].number);
        std::string body = detail::payload_text(block, timing + 1);
        if (text::trim(body).empty())
            continue;
        cues.push_back({0, start, end, std::move(body)});
    }
    return detail::finish(std::move(cues));
}

/// Parses a SubRip document (index line, `HH:MM:SS,mmm --> HH:MM:SS,mmm`, text).
inline std::vector<CaptionCue> parse_srt(std::string_view doc) {
    auto blocks = detail::split_blocks(detail::split_lines(doc));
    std::vector<CaptionCue> cues;
    for (const auto &block : blocks) {
        std::size_t timing = 0;
        if (block[0].text.find("-->") == std::string_view::npos) {
            std::int64_t idx = 0;
            if (!detail::parse_digits(text::trim(block[0].text), idx))
                throw ParseError("expected cue index", block[0].number);
            if (block.size() < 2)
                throw ParseError("cue block without timing line", block[0].number);
            timing = 1;
        }
        auto [start, end] = detail::parse_timing_line(block[timing].text, ',', true, block[timing].number);
        std::string body = detail::payload_text(block, timing + 1);
        if (text::trim(body).empty())
            continue;
        cues.push_back({0, start, end, std::move(body)});
    }
    return detail::finish(std::move(cues));
}

/// Dispatches on the WEBVTT signature.
inline std::vector<CaptionCue> parse_captions(std::string_view doc) {
    std::string_view probe = doc;
    if (probe.size() >= 3 && static_cast<unsigned char>(probe[0]) == 0xEF)
        probe.remove_prefix(3);
    return probe.starts_with("WEBVTT") ? parse_webvtt(doc) : parse_srt(doc);
}

inline std::string serialize_webvtt(const std::vector<CaptionCue> &cues) {
    std::string out = "WEBVTT\n";
    for (const CaptionCue &c : cues) {
        out += "\n" + detail::format_timestamp(c.start_ms, '.') + " --> " +
               detail::format_timestamp(c.end_ms, '.') + "\n";
        for (char ch : c.text) {
            switch (ch) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out.push_back(ch);
            }
        }
        out += "\n";
    }
    return out;
}

inline std::string serialize_srt(const std::vector<CaptionCue> &cues) {
    std::string out;
    for (std::size_t i = 0; i < cues.size(); ++i) {
        const CaptionCue &c = cues[i];
        if (i)
            out += "\n";
        out += std::to_string(i + 1) + "\n" + detail::format_timestamp(c.start_ms, ',') + " --> " +
               detail::format_timestamp(c.end_ms, ',') + "\n" + c.text + "\n";
    }
    return out;
}

} // namespace sltk::corpus
