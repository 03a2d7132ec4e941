#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sltk/error.hpp"
#include "sltk/fusion/beam.hpp"
#include "sltk/fusion/config.hpp"
#include "sltk/spotting/spot.hpp"

namespace sltk::pipeline {

struct Paths {
    std::string captions_dir;     // <video_id>.vtt / <video_id>.srt
    std::string metadata_file;    // JSONL {video_id, source, signer_id?, duration_sec?}
    std::string features_dir;     // <clip_id>.<modality>.fst
    std::string posteriors_dir;   // sign_vocab.txt + <clip_id>.pst
    std::string proposals_file;   // JSONL FsProposal, optional
    std::string isolated_lexicon; // JSONL isolated-sign records, optional
    std::string output_dir = "out";

    bool operator==(const Paths &) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(Paths, captions_dir, metadata_file, features_dir, posteriors_dir,
                                                proposals_file, isolated_lexicon, output_dir)

struct CorpusOptions {
    int min_count = 2;
    double pad_sec = 0.5;
    int dev_size = 0;
    int test_size = 0;

    bool operator==(const CorpusOptions &) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(CorpusOptions, min_count, pad_sec, dev_size, test_size)

struct DecodeOptions {
    int beam_width = 5;
    double length_penalty = 1.0;
    int max_len = 64;
    std::string split = "test";

    fusion::BeamOptions beam() const { return {beam_width, length_penalty, max_len}; }

    bool operator==(const DecodeOptions &) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DecodeOptions, beam_width, length_penalty, max_len, split)

/// Whole-pipeline configuration. The single top-level seed drives the split,
/// model initialization, batch order and dropout; the fusion block therefore
/// has no seed of its own in the file format. fusion.vocab_size 0 means "take
/// it from the vocabulary".
struct PipelineConfig {
    Paths paths;
    CorpusOptions corpus;
    spotting::SpotConfig spot;
    fusion::FusionConfig fusion;
    DecodeOptions decode;
    std::uint64_t seed = 1;

    bool operator==(const PipelineConfig &) const = default;
};

inline void to_json(nlohmann::json &j, const PipelineConfig &c) {
    nlohmann::json f = c.fusion;
    f.erase("seed");
    j = {{"paths", c.paths}, {"corpus", c.corpus}, {"spot", c.spot},
         {"fusion", f},      {"decode", c.decode}, {"seed", c.seed}};
}

namespace detail {

inline void reject_unknown_keys(const nlohmann::json &given, const nlohmann::json &known, const std::string &prefix) {
    if (!given.is_object())
        return;
    for (const auto &[key, value] : given.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        if (!known.contains(key))
            throw ConfigError("unknown configuration key '" + path + "'");
        if (known.at(key).is_object())
            reject_unknown_keys(value, known.at(key), path);
    }
}

} // namespace detail

inline nlohmann::json default_config_json() { return nlohmann::json(PipelineConfig{}); }

/// Builds a configuration from JSON. Missing keys take their defaults;
/// unknown keys and type mismatches are configuration errors.
inline PipelineConfig config_from_json(const nlohmann::json &j) {
    if (!j.is_object())
        throw ConfigError("configuration must be a JSON object");
    detail::reject_unknown_keys(j, default_config_json(), "");
    PipelineConfig c;
    try {
        c.paths = j.value("paths", c.paths);
        c.corpus = j.value("corpus", c.corpus);
        c.spot = j.value("spot", c.spot);
        c.fusion = j.value("fusion", c.fusion);
        c.decode = j.value("decode", c.decode);
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError(std::string("bad configuration value: ") + e.what());
    }
    c.fusion.seed = c.seed;
    return c;
}

/// A value on the command line is read as JSON when it parses, otherwise as a
/// plain string.
inline nlohmann::json parse_override_value(const std::string &raw) {
    try {
        return nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception &) {
        return raw;
    }
}

/// Applies `dotted.key = value` overrides onto a configuration document.
inline void apply_override(nlohmann::json &doc, const std::string &dotted, const std::string &raw) {
    const nlohmann::json known = default_config_json();
    nlohmann::json *node = &doc;
    const nlohmann::json *ref = &known;
    std::size_t pos = 0;
    while (true) {
        const std::size_t dot = dotted.find('.', pos);
        const std::string key = dotted.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
        if (!ref->is_object() || !ref->contains(key))
            throw ConfigError("unknown configuration key '" + dotted + "'");
        ref = &ref->at(key);
        if (dot == std::string::npos) {
            (*node)[key] = parse_override_value(raw);
            if (ref->is_string() && !(*node)[key].is_string())
                (*node)[key] = raw;
            return;
        }
        if (!node->contains(key) || !(*node)[key].is_object())
            (*node)[key] = nlohmann::json::object();
        node = &(*node)[key];
        pos = dot + 1;
    }
}

inline nlohmann::json read_config_json(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw InputError("cannot open config " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError(path + ": " + e.what());
    }
}

inline PipelineConfig load_config(const std::string &path,
                                  const std::vector<std::pair<std::string, std::string>> &overrides = {}) {
    nlohmann::json doc = path.empty() ? nlohmann::json::object() : read_config_json(path);
    for (const auto &[k, v] : overrides)
        apply_override(doc, k, v);
    return config_from_json(doc);
}

inline std::string dump_config(const PipelineConfig &c) { return nlohmann::json(c).dump(2) + "\n"; }

} // namespace sltk::pipeline
