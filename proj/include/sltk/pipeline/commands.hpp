#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "sltk/corpus/align.hpp"
#include "sltk/corpus/captions.hpp"
#include "sltk/corpus/manifest.hpp"
#include "sltk/corpus/segment.hpp"
#include "sltk/corpus/stats.hpp"
#include "sltk/corpus/vocab.hpp"
#include "sltk/fusion/beam.hpp"
#include "sltk/fusion/checkpoint.hpp"
#include "sltk/fusion/feature_stream.hpp"
#include "sltk/fusion/gradcheck.hpp"
#include "sltk/fusion/train.hpp"
#include "sltk/metrics/breakdown.hpp"
#include "sltk/pipeline/config.hpp"
#include "sltk/rng.hpp"
#include "sltk/spotting/spot.hpp"
#include "sltk/spotting/streams.hpp"
#include "sltk/text.hpp"

namespace sltk::pipeline {

namespace fs = std::filesystem;

enum class Level { debug, info, warn };
using Logger = std::function<void(Level, const std::string &)>;

inline void log(const Logger &l, Level lv, const std::string &msg) {
    if (l)
        l(lv, msg);
}

// Output layout under paths.output_dir.
inline fs::path out_path(const PipelineConfig &c, const std::string &name) { return fs::path(c.paths.output_dir) / name; }
inline fs::path manifest_path(const PipelineConfig &c, const std::string &split) {
    return out_path(c, split + ".jsonl");
}
inline fs::path vocab_path(const PipelineConfig &c) { return out_path(c, "vocab.tsv"); }
inline fs::path checkpoint_path(const PipelineConfig &c) { return out_path(c, "model.ckpt"); }
inline fs::path hypotheses_path(const PipelineConfig &c, const std::string &split) {
    return out_path(c, "hypotheses." + split + ".tsv");
}
inline fs::path report_path(const PipelineConfig &c, const std::string &split) {
    return out_path(c, "report." + split + ".txt");
}

inline void require_dir(const std::string &p, const std::string &key) {
    if (p.empty())
        throw ConfigError(key + " is not set");
    if (!fs::is_directory(p))
        throw InputError(key + ": directory " + p + " does not exist");
}

inline void require_file(const std::string &p, const std::string &key) {
    if (p.empty())
        throw ConfigError(key + " is not set");
    if (!fs::is_regular_file(p))
        throw InputError(key + ": file " + p + " does not exist");
}

inline void write_text(const fs::path &p, const std::string &s) {
    fs::create_directories(p.parent_path().empty() ? fs::path(".") : p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out)
        throw InputError("cannot write " + p.string());
    out << s;
}

inline corpus::Split split_from_string(const std::string &s) {
    for (corpus::Split v : {corpus::Split::train, corpus::Split::dev, corpus::Split::test})
        if (corpus::to_string(v) == s)
            return v;
    throw ConfigError("unknown split '" + s + "'");
}

// ---------------------------------------------------------------- corpus

struct VideoMeta {
    std::string video_id;
    corpus::Source source = corpus::Source::other;
    std::optional<std::string> signer_id;
    std::optional<double> duration_sec;
};

inline std::map<std::string, VideoMeta> read_video_metadata(const std::string &path) {
    std::map<std::string, VideoMeta> out;
    std::size_t line = 0;
    for (const auto &j : corpus::read_jsonl_file(path)) {
        ++line;
        VideoMeta m;
        try {
            j.at("video_id").get_to(m.video_id);
            m.source = j.value("source", corpus::Source::other);
            if (j.contains("signer_id") && !j["signer_id"].is_null())
                m.signer_id = j["signer_id"].get<std::string>();
            if (j.contains("duration_sec") && !j["duration_sec"].is_null())
                m.duration_sec = j["duration_sec"].get<double>();
        } catch (const nlohmann::json::exception &e) {
            throw ParseError(path + ": bad video metadata: " + e.what(), line);
        }
        if (!out.emplace(m.video_id, m).second)
            throw ParseError(path + ": duplicate video_id " + m.video_id, line);
    }
    return out;
}

struct CorpusBuildResult {
    std::map<std::string, std::size_t> split_counts;
    std::size_t videos = 0;
    std::size_t dropped_empty = 0;
    int vocab_size = 0;
    nlohmann::json stats;
};

inline nlohmann::json split_stats(const std::vector<corpus::ClipRecord> &train,
                                  const std::vector<corpus::ClipRecord> &dev,
                                  const std::vector<corpus::ClipRecord> &test) {
    return {{"train", corpus::stats_json(corpus::corpus_stats(train))},
            {"dev", corpus::stats_json(corpus::corpus_stats(dev, &train))},
            {"test", corpus::stats_json(corpus::corpus_stats(test, &train))}};
}

/// captions + metadata -> train/dev/test manifests, vocabulary, statistics.
/// The split is a seeded shuffle at record level; boundary extension is
/// applied to training clips only.
inline CorpusBuildResult cmd_corpus_build(const PipelineConfig &cfg, const Logger &logger = {}) {
    require_dir(cfg.paths.captions_dir, "paths.captions_dir");
    require_file(cfg.paths.metadata_file, "paths.metadata_file");
    if (cfg.corpus.min_count < 1 || cfg.corpus.dev_size < 0 || cfg.corpus.test_size < 0 || cfg.corpus.pad_sec < 0)
        throw ConfigError("corpus.min_count must be >= 1; split sizes and pad_sec must be non-negative");
    const auto meta = read_video_metadata(cfg.paths.metadata_file);

    std::vector<fs::path> files;
    for (const auto &e : fs::directory_iterator(cfg.paths.captions_dir))
        if (e.is_regular_file() && (e.path().extension() == ".vtt" || e.path().extension() == ".srt"))
            files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty())
        throw InputError("no caption files (.vtt/.srt) in " + cfg.paths.captions_dir);

    CorpusBuildResult result;
    std::vector<corpus::ClipRecord> records;
    std::map<std::string, double> durations;
    std::set<std::string> seen_videos;
    for (const auto &f : files) {
        const std::string vid = f.stem().string();
        if (!seen_videos.insert(vid).second)
            throw InputError("video " + vid + " has more than one caption file");
        auto it = meta.find(vid);
        if (it == meta.end())
            throw InputError("no metadata for video " + vid + " (" + f.string() + ")");
        std::ifstream in(f, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        std::vector<corpus::CaptionCue> cues;
        try {
            cues = corpus::parse_captions(ss.str());
        } catch (const ParseError &e) {
            throw ParseError(f.string() + ": " + e.what(), e.line());
        }
        if (cues.empty()) {
            log(logger, Level::warn, f.string() + ": no cues");
            continue;
        }
        auto recs = corpus::align_sentences_to_cues(cues, corpus::segment_sentences(corpus::transcript_of(cues)), vid);
        double duration = 0.0;
        for (const auto &c : cues)
            duration = std::max(duration, c.end_sec());
        durations[vid] = it->second.duration_sec.value_or(duration);
        for (auto &r : recs) {
            if (text::tokenize(r.text).empty()) {
                ++result.dropped_empty;
                continue;
            }
            r.source = it->second.source;
            r.signer_id = it->second.signer_id;
            records.push_back(std::move(r));
        }
        ++result.videos;
    }
    if (result.dropped_empty)
        log(logger, Level::warn, std::to_string(result.dropped_empty) + " sentences without tokens dropped");

    const std::size_t n_dev = static_cast<std::size_t>(cfg.corpus.dev_size);
    const std::size_t n_test = static_cast<std::size_t>(cfg.corpus.test_size);
    if (n_dev + n_test >= records.size())
        throw ConfigError("corpus.dev_size + corpus.test_size (" + std::to_string(n_dev + n_test) +
                          ") leaves no training records out of " + std::to_string(records.size()));
    std::sort(records.begin(), records.end(),
              [](const corpus::ClipRecord &a, const corpus::ClipRecord &b) { return a.clip_id < b.clip_id; });
    std::vector<std::size_t> order(records.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    Rng rng(cfg.seed);
    rng.shuffle(order);
    std::vector<corpus::ClipRecord> train, dev, test;
    for (std::size_t k = 0; k < order.size(); ++k) {
        corpus::ClipRecord r = records[order[k]];
        if (k < n_dev) {
            r.split = corpus::Split::dev;
            dev.push_back(std::move(r));
        } else if (k < n_dev + n_test) {
            r.split = corpus::Split::test;
            test.push_back(std::move(r));
        } else {
            r.split = corpus::Split::train;
            const double duration = durations.at(r.video_id);
            train.push_back(corpus::extend_boundaries(std::move(r), cfg.corpus.pad_sec, duration));
        }
    }
    auto by_id = [](const corpus::ClipRecord &a, const corpus::ClipRecord &b) { return a.clip_id < b.clip_id; };
    for (auto *v : {&train, &dev, &test})
        std::sort(v->begin(), v->end(), by_id);

    fs::create_directories(cfg.paths.output_dir);
    corpus::write_manifest(manifest_path(cfg, "train").string(), train);
    corpus::write_manifest(manifest_path(cfg, "dev").string(), dev);
    corpus::write_manifest(manifest_path(cfg, "test").string(), test);
    const auto vocab = corpus::build_vocab(train, cfg.corpus.min_count);
    vocab.save(vocab_path(cfg).string());
    result.stats = split_stats(train, dev, test);
    write_text(out_path(cfg, "corpus_stats.json"), result.stats.dump(2) + "\n");
    result.split_counts = {{"train", train.size()}, {"dev", dev.size()}, {"test", test.size()}};
    result.vocab_size = vocab.size();
    return result;
}

inline std::vector<corpus::ClipRecord> load_split(const PipelineConfig &cfg, const std::string &split) {
    const fs::path p = manifest_path(cfg, split);
    if (!fs::is_regular_file(p))
        throw InputError("manifest " + p.string() + " not found; run `corpus build` first");
    return corpus::read_manifest(p.string());
}

/// Recomputes statistics from the manifests on disk.
inline nlohmann::json cmd_corpus_stats(const PipelineConfig &cfg) {
    auto stats = split_stats(load_split(cfg, "train"), load_split(cfg, "dev"), load_split(cfg, "test"));
    write_text(out_path(cfg, "corpus_stats.json"), stats.dump(2) + "\n");
    return stats;
}

// ---------------------------------------------------------------- spot

struct SpotResult {
    std::size_t clips = 0;
    std::size_t skipped = 0;
    std::map<std::string, std::size_t> kind_counts;
    std::map<std::string, std::size_t> source_counts;
    std::size_t total = 0;
};

inline std::vector<spotting::PretrainRecord> read_isolated_lexicon(const std::string &path) {
    std::vector<spotting::PretrainRecord> out;
    std::size_t line = 0;
    for (const auto &j : corpus::read_jsonl_file(path)) {
        ++line;
        try {
            out.push_back(j.get<spotting::PretrainRecord>());
        } catch (const nlohmann::json::exception &e) {
            throw ParseError(path + ": bad lexicon record: " + e.what(), line);
        }
        if (out.back().end_frame <= out.back().start_frame)
            throw ParseError(path + ": end_frame must exceed start_frame", line);
    }
    return out;
}

inline std::map<std::string, std::vector<spotting::FsProposal>> proposals_by_clip(const PipelineConfig &cfg) {
    std::map<std::string, std::vector<spotting::FsProposal>> out;
    if (cfg.paths.proposals_file.empty())
        return out;
    require_file(cfg.paths.proposals_file, "paths.proposals_file");
    for (auto &p : spotting::read_proposals(cfg.paths.proposals_file))
        out[p.clip_id].push_back(std::move(p));
    return out;
}

/// Spots lexical and fingerspelled signs in the training clips and writes the
/// pretraining manifest `spotted.jsonl`. Clips without a posterior file are
/// skipped with a warning.
inline SpotResult cmd_spot(const PipelineConfig &cfg, const Logger &logger = {}) {
    cfg.spot.validate();
    require_dir(cfg.paths.posteriors_dir, "paths.posteriors_dir");
    const auto sign_vocab = spotting::load_sign_vocab((fs::path(cfg.paths.posteriors_dir) / "sign_vocab.txt").string());
    const auto proposals = proposals_by_clip(cfg);
    auto clips = load_split(cfg, "train");
    SpotResult result;
    std::vector<spotting::SpottedSign> spots;
    for (const auto &clip : clips) {
        const fs::path pst = fs::path(cfg.paths.posteriors_dir) / (clip.clip_id + ".pst");
        if (!fs::is_regular_file(pst)) {
            log(logger, Level::warn, "no posteriors for clip " + clip.clip_id + "; skipped");
            ++result.skipped;
            continue;
        }
        auto stream = spotting::load_posteriors(pst.string(), sign_vocab, clip.clip_id);
        static const std::vector<spotting::FsProposal> none;
        auto it = proposals.find(clip.clip_id);
        auto found = spotting::spot_clip(&stream, it == proposals.end() ? none : it->second,
                                         text::tokenize(clip.text), cfg.spot);
        spots.insert(spots.end(), found.begin(), found.end());
        ++result.clips;
    }
    if (result.skipped)
        log(logger, Level::warn, std::to_string(result.skipped) + " of " + std::to_string(clips.size()) +
                                     " clips skipped for missing posteriors");
    std::vector<spotting::PretrainRecord> lexicon;
    if (!cfg.paths.isolated_lexicon.empty()) {
        require_file(cfg.paths.isolated_lexicon, "paths.isolated_lexicon");
        lexicon = read_isolated_lexicon(cfg.paths.isolated_lexicon);
    }
    auto manifest = spotting::export_pretraining_manifest(std::move(spots), lexicon.empty() ? nullptr : &lexicon);
    std::vector<nlohmann::json> rows(manifest.records.begin(), manifest.records.end());
    fs::create_directories(cfg.paths.output_dir);
    corpus::write_jsonl_file(out_path(cfg, "spotted.jsonl").string(), rows);
    for (const auto &r : manifest.records)
        if (r.source == "spotted")
            ++result.kind_counts[nlohmann::json(r.kind).get<std::string>()];
    result.source_counts = manifest.source_counts;
    result.total = manifest.total();
    return result;
}

// ---------------------------------------------------------------- fusion

inline std::vector<int> target_ids(const corpus::Vocabulary &v, const std::string &sentence) {
    std::vector<int> t{corpus::Vocabulary::kBos};
    for (int id : v.encode(text::tokenize(sentence)))
        t.push_back(id);
    t.push_back(corpus::Vocabulary::kEos);
    return t;
}

// Loads every enabled stream of every clip; throws on the first missing or
// mis-sized file.
inline std::vector<fusion::Example> load_examples(const PipelineConfig &cfg, const fusion::FusionConfig &fc,
                                                  const std::vector<corpus::ClipRecord> &clips,
                                                  const corpus::Vocabulary &vocab) {
    require_dir(cfg.paths.features_dir, "paths.features_dir");
    std::vector<fusion::Example> out;
    for (const auto &c : clips) {
        fusion::Example ex{c.clip_id, {}, target_ids(vocab, c.text)};
        for (fusion::Modality m : fc.enabled_streams) {
            auto s = fusion::load_stream(cfg.paths.features_dir, c.clip_id, m);
            if (s.dim() != fc.stream_dims.of(m))
                throw InputError(fusion::feature_filename(c.clip_id, m) + ": width " + std::to_string(s.dim()) +
                                 " does not match fusion.stream_dims." + fusion::to_string(m) + " = " +
                                 std::to_string(fc.stream_dims.of(m)));
            ex.streams.push_back(std::move(s));
        }
        out.push_back(std::move(ex));
    }
    return out;
}

inline fusion::FusionConfig resolved_fusion(const PipelineConfig &cfg, int vocab_size) {
    fusion::FusionConfig fc = cfg.fusion;
    if (fc.vocab_size != 0 && fc.vocab_size != vocab_size)
        throw ConfigError("fusion.vocab_size " + std::to_string(fc.vocab_size) + " differs from the vocabulary (" +
                          std::to_string(vocab_size) + "); set it to 0");
    fc.vocab_size = vocab_size;
    fc.seed = cfg.seed;
    fc.validate();
    return fc;
}

struct TrainSummary {
    std::size_t examples = 0;
    std::size_t parameters = 0;
    double first_loss = 0.0;
    double final_loss = 0.0;
};

inline TrainSummary cmd_train(const PipelineConfig &cfg, const Logger &logger = {}) {
    const auto vocab = corpus::Vocabulary::load(vocab_path(cfg).string());
    const auto fc = resolved_fusion(cfg, vocab.size());
    const auto clips = load_split(cfg, "train");
    const auto data = load_examples(cfg, fc, clips, vocab);
    fusion::FusionModel<double> model(fc);
    log(logger, Level::info,
        "training on " + std::to_string(data.size()) + " clips, " + std::to_string(model.params().scalar_count()) +
            " parameters, " + std::to_string(fc.total_iters) + " iterations");
    std::string curve = "iter\tloss\tlr\n";
    const int every = std::max(1, fc.total_iters / 20);
    auto r = fusion::train(model, data, [&](int iter, double loss, double lr) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "%d\t%.17g\t%.17g\n", iter, loss, lr);
        curve += buf;
        if (iter % every == 0 || iter == fc.total_iters) {
            std::snprintf(buf, sizeof buf, "iter %d loss %.5f lr %.3g", iter, loss, lr);
            log(logger, Level::info, buf);
        }
    });
    write_text(out_path(cfg, "loss_curve.tsv"), curve);
    fusion::save_checkpoint_file(checkpoint_path(cfg).string(), model);
    return {data.size(), model.params().scalar_count(), r.loss_curve.front(), r.loss_curve.back()};
}

struct TranslateSummary {
    std::size_t clips = 0;
    std::size_t forced = 0;
    std::string output;
};

inline TranslateSummary cmd_translate(const PipelineConfig &cfg, const Logger &logger = {}) {
    const fs::path ckpt = checkpoint_path(cfg);
    if (!fs::is_regular_file(ckpt))
        throw InputError("checkpoint " + ckpt.string() + " not found; run `train` first");
    auto model = fusion::load_checkpoint_file<double>(ckpt.string());
    const auto vocab = corpus::Vocabulary::load(vocab_path(cfg).string());
    if (vocab.size() != model.config().vocab_size)
        throw InputError("vocabulary size does not match the checkpoint");
    split_from_string(cfg.decode.split);
    const auto clips = load_split(cfg, cfg.decode.split);
    const auto data = load_examples(cfg, model.config(), clips, vocab);
    TranslateSummary s;
    std::string out;
    for (const auto &ex : data) {
        auto hyp = fusion::beam_search(model, model.encode_source(ex.streams), cfg.decode.beam());
        s.forced += hyp.forced;
        out += ex.clip_id + "\t" + text::join(vocab.decode(hyp.tokens)) + "\n";
        ++s.clips;
    }
    if (s.forced)
        log(logger, Level::warn, std::to_string(s.forced) + " hypotheses hit decode.max_len");
    s.output = hypotheses_path(cfg, cfg.decode.split).string();
    write_text(s.output, out);
    return s;
}

// ---------------------------------------------------------------- eval

inline std::map<std::string, std::string> read_hypotheses(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw InputError("cannot open hypotheses " + path);
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw ParseError(path + ": expected clip_id<TAB>text", n);
        if (!out.emplace(line.substr(0, tab), line.substr(tab + 1)).second)
            throw ParseError(path + ": duplicate clip " + line.substr(0, tab), n);
    }
    return out;
}

struct EvalSummary {
    metrics::MetricReport report;
    std::string output;
};

/// Scores a hypothesis file against a manifest split. Tags: duplicate vs the
/// training manifest, source from the manifest, fingerspelling when the clip
/// has a proposal at or above spot.conf_min.
inline EvalSummary cmd_eval(const PipelineConfig &cfg, const std::string &hypotheses_file = "") {
    split_from_string(cfg.decode.split);
    const std::string hyp_path =
        hypotheses_file.empty() ? hypotheses_path(cfg, cfg.decode.split).string() : hypotheses_file;
    const auto hyps = read_hypotheses(hyp_path);
    const auto refs = load_split(cfg, cfg.decode.split);
    if (refs.empty())
        throw InputError("split " + cfg.decode.split + " is empty");
    const auto train = load_split(cfg, "train");
    const auto seen = corpus::normalized_set(train);
    std::set<std::string> with_fs;
    for (const auto &[clip, props] : proposals_by_clip(cfg))
        for (const auto &p : props)
            if (p.confidence >= cfg.spot.conf_min)
                with_fs.insert(clip);
    std::set<std::string> ref_ids;
    std::vector<metrics::EvalPair> pairs;
    for (const auto &r : refs) {
        ref_ids.insert(r.clip_id);
        auto it = hyps.find(r.clip_id);
        if (it == hyps.end())
            throw InputError(hyp_path + ": no hypothesis for clip " + r.clip_id);
        pairs.push_back({r.clip_id, text::tokenize(it->second), text::tokenize(r.text),
                         seen.count(text::normalize(r.text)) > 0, with_fs.count(r.clip_id) > 0, r.source});
    }
    for (const auto &[id, t] : hyps)
        if (!ref_ids.count(id))
            throw InputError(hyp_path + ": clip " + id + " is not in split " + cfg.decode.split);
    EvalSummary s{metrics::breakdown(pairs), report_path(cfg, cfg.decode.split).string()};
    write_text(s.output, metrics::format_report(s.report));
    return s;
}

// ---------------------------------------------------------------- gradcheck

struct GradCheckCommandOptions {
    std::size_t max_per_block = 8;
    int order = 2;
    std::size_t batch = 2;
};

/// Finite-difference check of the configured model on a synthetic batch.
/// Dropout is switched off for the check; vocab_size 0 becomes 16.
inline fusion::GradCheckResult cmd_gradcheck(const PipelineConfig &cfg, const GradCheckCommandOptions &opt,
                                            const Logger &logger = {}) {
    fusion::FusionConfig fc = cfg.fusion;
    fc.seed = cfg.seed;
    if (fc.vocab_size == 0)
        fc.vocab_size = 16;
    if (fc.dropout > 0.0) {
        log(logger, Level::info, "dropout disabled for the gradient check");
        fc.dropout = 0.0;
    }
    fc.validate();
    fusion::FusionModel<double> model(fc);
    Rng rng(cfg.seed);
    std::vector<fusion::Example> batch;
    for (std::size_t i = 0; i < opt.batch; ++i) {
        fusion::Example ex{"synthetic" + std::to_string(i), {}, {corpus::Vocabulary::kBos}};
        for (fusion::Modality m : fc.enabled_streams) {
            const auto t = static_cast<Eigen::Index>(2 + rng.below(4));
            fusion::FeatureMatrix x(t, fc.stream_dims.of(m));
            for (Eigen::Index k = 0; k < x.size(); ++k)
                x.data()[k] = static_cast<float>(rng.uniform(-1.0, 1.0));
            ex.streams.push_back({ex.clip_id, m, std::move(x)});
        }
        for (std::size_t w = 0, n = 1 + rng.below(4); w < n; ++w)
            ex.target.push_back(corpus::Vocabulary::kNumSpecials +
                                static_cast<int>(rng.below(static_cast<std::uint64_t>(fc.vocab_size - 4))));
        ex.target.push_back(corpus::Vocabulary::kEos);
        batch.push_back(std::move(ex));
    }
    fusion::GradCheckOptions g;
    g.max_per_block = opt.max_per_block;
    g.order = opt.order;
    return fusion::grad_check(model, batch, g);
}

} // namespace sltk::pipeline
