#pragma once

// Synthetic end-to-end inputs: caption files built from known sentences, video
// metadata, and per-clip feature / posterior / proposal files written once the
// manifests exist.

#include <filesystem>
#include <string>
#include <vector>

#include "sltk/pipeline/commands.hpp"
#include "test_util.hpp"

namespace sltk::testing {

inline const std::vector<std::string> &fixture_words() {
    static const std::vector<std::string> w{"weather", "today", "is",    "cold",  "the",    "city",   "news",
                                            "tonight", "boston", "rain", "snow",  "people", "will",   "see",
                                            "more",    "storm",  "north", "south", "we",    "report", "from"};
    return w;
}

struct PipelineFixture {
    std::filesystem::path root;
    pipeline::PipelineConfig cfg;
    std::size_t sentences = 0;
};

inline std::string vtt_time(long long ms) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%02lld:%02lld:%02lld.%03lld", ms / 3600000, ms / 60000 % 60, ms / 1000 % 60,
                  ms % 1000);
    return buf;
}

// Capitalized sentences of 4-7 words ending in '.', '!' or '?', spread over cues of 2-6
// words each; every other video is SRT.
inline PipelineFixture make_pipeline_fixture(const std::string &name, std::uint64_t seed = 5,
                                             std::size_t videos = 3) {
    PipelineFixture f;
    f.root = scratch_dir(name);
    const auto captions = f.root / "captions";
    std::filesystem::create_directories(captions);
    Rng rng(seed);
    std::string metadata;
    const auto &words = fixture_words();
    for (std::size_t v = 0; v < videos; ++v) {
        const std::string vid = "vid" + std::to_string(v);
        std::vector<std::string> tokens;
        const std::size_t n_sent = 3 + rng.below(4);
        for (std::size_t s = 0; s < n_sent; ++s) {
            const std::size_t len = 4 + rng.below(4);
            for (std::size_t k = 0; k < len; ++k)
                tokens.push_back(words[rng.below(words.size())]);
            char &first = tokens[tokens.size() - len][0];
            first = static_cast<char>(first - 'a' + 'A');
            tokens.back() += ".!?"[rng.below(3)];
        }
        f.sentences += n_sent;
        const bool srt = v % 2 == 1;
        std::string doc = srt ? "" : "WEBVTT\n\n";
        long long t = 500;
        int cue = 0;
        for (std::size_t i = 0; i < tokens.size();) {
            const std::size_t n = std::min(tokens.size() - i, 2 + rng.below(5));
            const long long end = t + 400 * static_cast<long long>(n);
            std::string line;
            for (std::size_t k = 0; k < n; ++k)
                line += (k ? " " : "") + tokens[i + k];
            std::string a = vtt_time(t), b = vtt_time(end);
            if (srt) {
                a[8] = ',';
                b[8] = ',';
                doc += std::to_string(++cue) + "\n";
            }
            doc += a + " --> " + b + "\n" + line + "\n\n";
            i += n;
            t = end;
        }
        write_file(captions / (vid + (srt ? ".srt" : ".vtt")), doc);
        nlohmann::json m{{"video_id", vid}, {"source", v % 2 ? "vlog" : "news"}, {"signer_id", "s" + std::to_string(v % 2)}};
        if (v == 0)
            m["duration_sec"] = static_cast<double>(t) / 1000.0 + 0.2;
        metadata += m.dump() + "\n";
    }
    write_file(f.root / "videos.jsonl", metadata);

    auto &c = f.cfg;
    c.paths.captions_dir = captions.string();
    c.paths.metadata_file = (f.root / "videos.jsonl").string();
    c.paths.features_dir = (f.root / "features").string();
    c.paths.posteriors_dir = (f.root / "posteriors").string();
    c.paths.proposals_file = (f.root / "proposals.jsonl").string();
    c.paths.output_dir = (f.root / "out").string();
    c.corpus.min_count = 1;
    c.corpus.dev_size = 2;
    c.corpus.test_size = 2;
    c.fusion.stream_dims = {6, 5, 4};
    c.fusion.model_dim = 8;
    c.fusion.num_heads = 2;
    c.fusion.enc_layers = 1;
    c.fusion.dec_layers = 1;
    c.fusion.ffn_dim = 16;
    c.fusion.total_iters = 12;
    c.fusion.warmup_iters = 2;
    c.fusion.batch_size = 4;
    c.fusion.max_len = 16;
    c.decode.max_len = 12;
    c.decode.beam_width = 3;
    c.seed = seed;
    c.fusion.seed = seed;
    return f;
}

inline std::uint64_t fnv1a(const std::string &s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s)
        h = (h ^ ch) * 1099511628211ull;
    return h;
}

// Features for every clip of every split, posteriors for training clips
// (except `skip_posterior`), and a fingerspelling proposal for each clip whose
// sentence contains "boston".
inline void write_clip_assets(const pipeline::PipelineConfig &cfg, const std::string &skip_posterior = "") {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.paths.features_dir);
    fs::create_directories(cfg.paths.posteriors_dir);
    std::vector<std::string> sign_vocab(fixture_words().begin(), fixture_words().begin() + 12);
    std::string vocab_file;
    for (const auto &w : sign_vocab)
        vocab_file += w + "\n";
    write_file(fs::path(cfg.paths.posteriors_dir) / "sign_vocab.txt", vocab_file);
    std::string proposals;
    for (const char *split : {"train", "dev", "test"}) {
        for (const auto &clip : pipeline::load_split(cfg, split)) {
            Rng rng(fnv1a(clip.clip_id));
            for (fusion::Modality m : cfg.fusion.enabled_streams)
                fusion::save_stream(cfg.paths.features_dir,
                                    {clip.clip_id, m, random_features(rng, 6 + static_cast<Eigen::Index>(rng.below(6)),
                                                                      cfg.fusion.stream_dims.of(m))});
            const auto tokens = text::tokenize(clip.text);
            const auto frames = static_cast<std::uint32_t>(40 + rng.below(60));
            if (std::find(tokens.begin(), tokens.end(), "boston") != tokens.end())
                proposals += nlohmann::json(spotting::FsProposal{clip.clip_id, 3, 20, 0.9, "BOSTN"}).dump() + "\n";
            if (std::string(split) != "train" || clip.clip_id == skip_posterior)
                continue;
            spotting::PosteriorStream s{clip.clip_id, {}, sign_vocab};
            for (const auto &w : spotting::slide_windows(frames, cfg.spot.window_len, cfg.spot.stride)) {
                const double peak = 0.5 + 0.45 * rng.uniform();
                const auto rest = static_cast<float>((1.0 - peak) / static_cast<double>(sign_vocab.size()));
                spotting::PosteriorWindow pw{w.begin, w.end, std::vector<float>(sign_vocab.size(), rest)};
                pw.probs[rng.below(sign_vocab.size())] = static_cast<float>(peak);
                s.windows.push_back(std::move(pw));
            }
            spotting::save_posteriors((fs::path(cfg.paths.posteriors_dir) / (clip.clip_id + ".pst")).string(), s);
        }
    }
    write_file(cfg.paths.proposals_file, proposals);
}

} // namespace sltk::testing
