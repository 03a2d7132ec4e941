#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sltk/corpus/manifest.hpp"
#include "sltk/error.hpp"

namespace sltk {

namespace io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

inline void write_u32(std::ostream &out, std::uint32_t v) { out.write(reinterpret_cast<const char *>(&v), 4); }
inline void write_f32(std::ostream &out, float v) { out.write(reinterpret_cast<const char *>(&v), 4); }

inline std::uint32_t read_u32(std::istream &in, const std::string &what) {
    std::uint32_t v = 0;
    if (!in.read(reinterpret_cast<char *>(&v), 4))
        throw InputError("truncated " + what);
    return v;
}

inline void read_f32s(std::istream &in, float *dst, std::size_t n, const std::string &what) {
    if (!in.read(reinterpret_cast<char *>(dst), static_cast<std::streamsize>(n * 4)))
        throw InputError("truncated " + what);
}

inline void expect_magic(std::istream &in, const char (&magic)[5], const std::string &what) {
    char buf[4] = {};
    if (!in.read(buf, 4) || std::memcmp(buf, magic, 4) != 0)
        throw InputError(what + ": bad magic, expected " + magic);
}

} // namespace io

namespace spotting {

struct PosteriorWindow {
    std::uint32_t start_frame = 0;
    std::uint32_t end_frame = 0;
    std::vector<float> probs;

    bool operator==(const PosteriorWindow &) const = default;
};

struct PosteriorStream {
    std::string clip_id;
    std::vector<PosteriorWindow> windows;
    std::vector<std::string> sign_vocab;

    void validate() const {
        const std::size_t v = sign_vocab.size();
        std::uint32_t prev_start = 0;
        for (std::size_t i = 0; i < windows.size(); ++i) {
            const auto &w = windows[i];
            std::string where = clip_id + " window " + std::to_string(i);
            if (w.end_frame <= w.start_frame)
                throw InputError(where + ": end_frame must exceed start_frame");
            if (i && w.start_frame < prev_start)
                throw InputError(where + ": windows not sorted by start_frame");
            prev_start = w.start_frame;
            if (w.probs.size() != v)
                throw InputError(where + ": expected " + std::to_string(v) + " probabilities");
            double sum = 0.0;
            for (float p : w.probs) {
                if (!(p >= 0.0f && p <= 1.0f))
                    throw InputError(where + ": probability outside [0,1]");
                sum += p;
            }
            if (sum > 1.0 + 1e-4)
                throw InputError(where + ": probabilities sum above 1");
        }
    }
};

/// PST1: magic, u32 W, u32 V, then W x {u32 start, u32 end, V x f32}.
inline void write_posteriors(std::ostream &out, const PosteriorStream &s) {
    out.write("PST1", 4);
    io::write_u32(out, static_cast<std::uint32_t>(s.windows.size()));
    io::write_u32(out, static_cast<std::uint32_t>(s.sign_vocab.size()));
    for (const auto &w : s.windows) {
        io::write_u32(out, w.start_frame);
        io::write_u32(out, w.end_frame);
        out.write(reinterpret_cast<const char *>(w.probs.data()), static_cast<std::streamsize>(w.probs.size() * 4));
    }
}

inline PosteriorStream read_posteriors(std::istream &in, std::vector<std::string> sign_vocab,
                                       std::string clip_id = "") {
    io::expect_magic(in, "PST1", "posterior stream " + clip_id);
    PosteriorStream s;
    s.clip_id = std::move(clip_id);
    const std::uint32_t w = io::read_u32(in, "posterior header");
    const std::uint32_t v = io::read_u32(in, "posterior header");
    if (v != sign_vocab.size())
        throw InputError("posterior stream " + s.clip_id + ": V=" + std::to_string(v) +
                         " but sign vocabulary has " + std::to_string(sign_vocab.size()) + " entries");
    s.sign_vocab = std::move(sign_vocab);
    s.windows.resize(w);
    for (auto &win : s.windows) {
        win.start_frame = io::read_u32(in, "posterior window");
        win.end_frame = io::read_u32(in, "posterior window");
        win.probs.resize(v);
        io::read_f32s(in, win.probs.data(), v, "posterior window");
    }
    s.validate();
    return s;
}

inline PosteriorStream load_posteriors(const std::string &path, std::vector<std::string> sign_vocab,
                                       std::string clip_id) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw InputError("cannot open " + path);
    return read_posteriors(in, std::move(sign_vocab), std::move(clip_id));
}

inline void save_posteriors(const std::string &path, const PosteriorStream &s) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw InputError("cannot write " + path);
    write_posteriors(out, s);
}

/// Sidecar vocabulary: one word per line, line index = class id.
inline std::vector<std::string> load_sign_vocab(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw InputError("cannot open sign vocabulary " + path);
    std::vector<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        words.push_back(line);
    }
    while (!words.empty() && words.back().empty())
        words.pop_back();
    return words;
}

struct FsProposal {
    std::string clip_id;
    std::uint32_t start_frame = 0;
    std::uint32_t end_frame = 0;
    double confidence = 0.0;
    std::string letters;

    bool operator==(const FsProposal &) const = default;
};

inline void to_json(nlohmann::json &j, const FsProposal &p) {
    j = {{"clip_id", p.clip_id},
         {"start_frame", p.start_frame},
         {"end_frame", p.end_frame},
         {"confidence", p.confidence},
         {"letters", p.letters}};
}

inline void from_json(const nlohmann::json &j, FsProposal &p) {
    j.at("clip_id").get_to(p.clip_id);
    j.at("start_frame").get_to(p.start_frame);
    j.at("end_frame").get_to(p.end_frame);
    j.at("confidence").get_to(p.confidence);
    j.at("letters").get_to(p.letters);
}

inline void validate(const FsProposal &p) {
    if (p.end_frame <= p.start_frame)
        throw InputError("proposal for " + p.clip_id + ": end_frame must exceed start_frame");
    if (p.letters.empty())
        throw InputError("proposal for " + p.clip_id + ": empty letter hypothesis");
    for (char c : p.letters)
        if (c < 'A' || c > 'Z')
            throw InputError("proposal for " + p.clip_id + ": letters must be A-Z");
    if (!(p.confidence >= 0.0 && p.confidence <= 1.0))
        throw InputError("proposal for " + p.clip_id + ": confidence outside [0,1]");
}

inline std::vector<FsProposal> read_proposals(const std::string &path) {
    std::vector<FsProposal> out;
    std::size_t n = 0;
    for (const auto &j : corpus::read_jsonl_file(path)) {
        ++n;
        try {
            out.push_back(j.get<FsProposal>());
        } catch (const nlohmann::json::exception &e) {
            throw ParseError(path + ": bad proposal: " + e.what(), n);
        }
        validate(out.back());
    }
    return out;
}

} // namespace spotting
} // namespace sltk
