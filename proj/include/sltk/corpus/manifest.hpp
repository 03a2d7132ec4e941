#pragma once

#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sltk/corpus/captions.hpp"
#include "sltk/error.hpp"
#include "sltk/text.hpp"

namespace sltk::corpus {

enum class Source { news, vlog, other };
enum class Split { train, dev, test };

NLOHMANN_JSON_SERIALIZE_ENUM(Source, {{Source::news, "news"}, {Source::vlog, "vlog"}, {Source::other, "other"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Split, {{Split::train, "train"}, {Split::dev, "dev"}, {Split::test, "test"}})

inline std::string to_string(Source s) { return nlohmann::json(s).get<std::string>(); }
inline std::string to_string(Split s) { return nlohmann::json(s).get<std::string>(); }

struct ClipRecord {
    std::string clip_id;
    std::string video_id;
    Millis start_ms = 0;
    Millis end_ms = 0;
    std::string text;
    Source source = Source::other;
    std::optional<std::string> signer_id;
    Split split = Split::train;

    double start_sec() const { return to_seconds(start_ms); }
    double end_sec() const { return to_seconds(end_ms); }
    Millis duration_ms() const { return end_ms - start_ms; }

    bool operator==(const ClipRecord &) const = default;
};

inline void to_json(nlohmann::json &j, const ClipRecord &r) {
    j = nlohmann::json{{"clip_id", r.clip_id}, {"video_id", r.video_id}, {"start_ms", r.start_ms},
                       {"end_ms", r.end_ms},   {"text", r.text},         {"source", r.source},
                       {"split", r.split}};
    if (r.signer_id)
        j["signer_id"] = *r.signer_id;
}

inline void from_json(const nlohmann::json &j, ClipRecord &r) {
    j.at("clip_id").get_to(r.clip_id);
    j.at("video_id").get_to(r.video_id);
    j.at("start_ms").get_to(r.start_ms);
    j.at("end_ms").get_to(r.end_ms);
    j.at("text").get_to(r.text);
    r.source = j.value("source", Source::other);
    r.split = j.value("split", Split::train);
    if (auto it = j.find("signer_id"); it != j.end() && !it->is_null())
        r.signer_id = it->get<std::string>();
    else
        r.signer_id.reset();
}

/// Reads any line-delimited JSON file; blank lines are skipped.
inline std::vector<nlohmann::json> read_jsonl(std::istream &in, const std::string &name = "<stream>") {
    std::vector<nlohmann::json> out;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (text::trim(line).empty())
            continue;
        try {
            out.push_back(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception &e) {
            throw ParseError(name + ": " + e.what(), number);
        }
    }
    return out;
}

inline std::vector<nlohmann::json> read_jsonl_file(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw InputError("cannot open " + path);
    return read_jsonl(in, path);
}

inline void write_jsonl_file(const std::string &path, const std::vector<nlohmann::json> &rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw InputError("cannot write " + path);
    for (const auto &r : rows)
        out << r.dump() << '\n';
}

inline std::vector<ClipRecord> read_manifest(const std::string &path) {
    std::vector<ClipRecord> out;
    std::set<std::string> ids;
    std::size_t line = 0;
    for (const auto &j : read_jsonl_file(path)) {
        ++line;
        try {
            out.push_back(j.get<ClipRecord>());
        } catch (const nlohmann::json::exception &e) {
            throw ParseError(path + ": bad clip record: " + e.what(), line);
        }
        if (out.back().end_ms <= out.back().start_ms)
            throw ParseError(path + ": clip " + out.back().clip_id + " has end <= start", line);
        if (text::tokenize(out.back().text).empty())
            throw ParseError(path + ": clip " + out.back().clip_id + " has no tokens", line);
        if (!ids.insert(out.back().clip_id).second)
            throw ParseError(path + ": duplicate clip_id " + out.back().clip_id, line);
    }
    return out;
}

inline void write_manifest(const std::string &path, const std::vector<ClipRecord> &records) {
    std::vector<nlohmann::json> rows(records.begin(), records.end());
    write_jsonl_file(path, rows);
}

} // namespace sltk::corpus
