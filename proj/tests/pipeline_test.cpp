#include <cstdlib>

#include <gtest/gtest.h>

#include "pipeline_fixture.hpp"

namespace sltk::pipeline {
namespace {

using testing::make_pipeline_fixture;
using testing::read_file;
using testing::write_clip_assets;
using testing::write_file;

std::size_t total_records(const PipelineConfig &c) {
    return load_split(c, "train").size() + load_split(c, "dev").size() + load_split(c, "test").size();
}

TEST(CorpusBuild, RecordCountEqualsFixtureOracle) {
    auto f = make_pipeline_fixture("build_count");
    auto r = cmd_corpus_build(f.cfg);
    EXPECT_EQ(r.videos, 3u);
    EXPECT_EQ(total_records(f.cfg), f.sentences);
    EXPECT_EQ(r.split_counts.at("dev"), 2u);
    EXPECT_EQ(r.split_counts.at("test"), 2u);
    EXPECT_EQ(r.split_counts.at("train"), f.sentences - 4);
    for (const auto &rec : load_split(f.cfg, "dev"))
        EXPECT_EQ(rec.split, corpus::Split::dev);
    EXPECT_TRUE(std::filesystem::exists(vocab_path(f.cfg)));
    EXPECT_TRUE(std::filesystem::exists(out_path(f.cfg, "corpus_stats.json")));
}

TEST(CorpusBuild, EmptyCaptionsDirIsAnError) {
    auto f = make_pipeline_fixture("build_empty");
    std::filesystem::remove_all(f.cfg.paths.captions_dir);
    std::filesystem::create_directories(f.cfg.paths.captions_dir);
    EXPECT_THROW(cmd_corpus_build(f.cfg), InputError);
}

TEST(CorpusBuild, RerunIsByteIdentical) {
    auto f = make_pipeline_fixture("build_rerun");
    cmd_corpus_build(f.cfg);
    std::vector<std::string> first;
    for (const char *name : {"train.jsonl", "dev.jsonl", "test.jsonl", "vocab.tsv", "corpus_stats.json"})
        first.push_back(read_file(out_path(f.cfg, name)));
    cmd_corpus_build(f.cfg);
    std::size_t i = 0;
    for (const char *name : {"train.jsonl", "dev.jsonl", "test.jsonl", "vocab.tsv", "corpus_stats.json"})
        EXPECT_EQ(read_file(out_path(f.cfg, name)), first[i++]) << name;
}

TEST(CorpusBuild, SeedChangesTheSplit) {
    auto f = make_pipeline_fixture("build_seed");
    cmd_corpus_build(f.cfg);
    const auto a = read_file(manifest_path(f.cfg, "test"));
    f.cfg.seed = 99;
    cmd_corpus_build(f.cfg);
    EXPECT_NE(read_file(manifest_path(f.cfg, "test")), a);
}

TEST(CorpusBuild, OnlyTrainingClipsAreExtended) {
    auto f = make_pipeline_fixture("build_extend");
    f.cfg.corpus.pad_sec = 0.0;
    cmd_corpus_build(f.cfg);
    std::map<std::string, corpus::ClipRecord> plain;
    for (const char *s : {"train", "dev", "test"})
        for (auto &r : load_split(f.cfg, s))
            plain[r.clip_id] = r;
    f.cfg.corpus.pad_sec = 0.5;
    cmd_corpus_build(f.cfg);
    for (const char *s : {"train", "dev", "test"})
        for (const auto &r : load_split(f.cfg, s)) {
            const auto &p = plain.at(r.clip_id);
            if (r.split == corpus::Split::train) {
                EXPECT_EQ(r.start_ms, std::max<corpus::Millis>(0, p.start_ms - 500));
                EXPECT_GE(r.end_ms, p.end_ms);
            } else {
                EXPECT_EQ(r.start_ms, p.start_ms);
                EXPECT_EQ(r.end_ms, p.end_ms);
            }
        }
}

TEST(CorpusBuild, MissingMetadataAndOversizedSplits) {
    auto f = make_pipeline_fixture("build_errors");
    write_file(f.cfg.paths.metadata_file, R"({"video_id":"vid0","source":"news"})" "\n");
    EXPECT_THROW(cmd_corpus_build(f.cfg), InputError);
    auto g = make_pipeline_fixture("build_errors2");
    g.cfg.corpus.dev_size = static_cast<int>(g.sentences);
    EXPECT_THROW(cmd_corpus_build(g.cfg), ConfigError);
    g.cfg.paths.captions_dir = (g.root / "nope").string();
    EXPECT_THROW(cmd_corpus_build(g.cfg), InputError);
}

TEST(CorpusStats, MatchesBuildOutput) {
    auto f = make_pipeline_fixture("stats");
    auto built = cmd_corpus_build(f.cfg);
    EXPECT_EQ(cmd_corpus_stats(f.cfg), built.stats);
}

TEST(Config, RejectsUnknownKeys) {
    EXPECT_THROW(config_from_json(R"({"sede": 3})"_json), ConfigError);
    EXPECT_THROW(config_from_json(R"({"spot": {"delta_1": 0.3}})"_json), ConfigError);
    EXPECT_THROW(config_from_json(R"({"fusion": {"seed": 3}})"_json), ConfigError);
    EXPECT_THROW(config_from_json(R"({"paths": {"captions": "x"}})"_json), ConfigError);
    EXPECT_NO_THROW(config_from_json(R"({"spot": {"delta_l": 0.3}})"_json));
}

TEST(Config, TypeMismatchIsConfigError) {
    EXPECT_THROW(config_from_json(R"({"spot": {"delta_l": "high"}})"_json), ConfigError);
    EXPECT_THROW(config_from_json(R"([1, 2])"_json), ConfigError);
}

TEST(Config, MissingKeysTakeDefaults) {
    EXPECT_EQ(config_from_json(nlohmann::json::object()), PipelineConfig{});
    auto c = config_from_json(R"({"seed": 42})"_json);
    EXPECT_EQ(c.seed, 42u);
    EXPECT_EQ(c.fusion.seed, 42u);
    EXPECT_EQ(c.spot, spotting::SpotConfig{});
}

TEST(ConfigProperty, RoundTripIsLossless) {
    Rng rng(81);
    for (int trial = 0; trial < 100; ++trial) {
        PipelineConfig c;
        c.paths.captions_dir = "caps" + std::to_string(rng.below(100));
        c.paths.output_dir = "o/" + std::to_string(rng.below(100));
        c.corpus.min_count = 1 + static_cast<int>(rng.below(5));
        c.corpus.pad_sec = rng.uniform();
        c.spot.delta_l = rng.uniform();
        c.spot.stride = 1 + static_cast<std::uint32_t>(rng.below(16));
        c.fusion.model_dim = 8 * (1 + static_cast<int>(rng.below(4)));
        c.fusion.lr_peak = rng.uniform(1e-5, 1e-2);
        c.fusion.dropout = rng.uniform(0.0, 0.5);
        if (rng.below(2))
            c.fusion.enabled_streams = {fusion::Modality::global, fusion::Modality::hand};
        c.decode.length_penalty = rng.uniform(0.0, 2.0);
        c.decode.split = rng.below(2) ? "dev" : "test";
        c.seed = rng.next();
        c.fusion.seed = c.seed;
        const auto text = dump_config(c);
        const auto back = config_from_json(nlohmann::json::parse(text));
        EXPECT_EQ(back, c);
        EXPECT_EQ(dump_config(back), text);
    }
}

TEST(Config, Overrides) {
    auto dir = testing::scratch_dir("config_overrides");
    write_file(dir / "c.json", R"({"spot": {"delta_l": 0.4}, "seed": 3})");
    auto c = load_config((dir / "c.json").string(), {{"spot.delta_f", "0.25"},
                                                     {"paths.output_dir", "123"},
                                                     {"fusion.enabled_streams", R"(["global","hand"])"},
                                                     {"seed", "11"}});
    EXPECT_DOUBLE_EQ(c.spot.delta_l, 0.4);
    EXPECT_DOUBLE_EQ(c.spot.delta_f, 0.25);
    EXPECT_EQ(c.paths.output_dir, "123");
    EXPECT_EQ(c.fusion.enabled_streams.size(), 2u);
    EXPECT_EQ(c.seed, 11u);
    EXPECT_EQ(c.fusion.seed, 11u);
    EXPECT_THROW(load_config("", {{"spot.delta", "1"}}), ConfigError);
    EXPECT_THROW(load_config("", {{"spot.delta_l.x", "1"}}), ConfigError);
    EXPECT_THROW(load_config("", {{"spot.delta_l", "abc"}}), ConfigError);
    EXPECT_THROW(load_config((dir / "missing.json").string()), InputError);
    write_file(dir / "bad.json", "{ not json");
    EXPECT_THROW(load_config((dir / "bad.json").string()), ConfigError);
}

testing::PipelineFixture built_fixture(const std::string &name, const std::string &skip_posterior = "") {
    auto f = make_pipeline_fixture(name);
    cmd_corpus_build(f.cfg);
    write_clip_assets(f.cfg, skip_posterior);
    return f;
}

TEST(Spot, MissingPosteriorIsSkippedAndCounted) {
    auto f = make_pipeline_fixture("spot_skip");
    cmd_corpus_build(f.cfg);
    const auto train = load_split(f.cfg, "train");
    write_clip_assets(f.cfg, train.front().clip_id);
    std::vector<std::string> warnings;
    auto r = cmd_spot(f.cfg, [&](Level lv, const std::string &m) {
        if (lv == Level::warn)
            warnings.push_back(m);
    });
    EXPECT_EQ(r.skipped, 1u);
    EXPECT_EQ(r.clips, train.size() - 1);
    ASSERT_GE(warnings.size(), 2u);
    EXPECT_NE(warnings.front().find(train.front().clip_id), std::string::npos);
    EXPECT_NE(warnings.back().find("1 of"), std::string::npos);
    const auto rows = corpus::read_jsonl_file(out_path(f.cfg, "spotted.jsonl").string());
    EXPECT_EQ(rows.size(), r.total);
    std::size_t by_kind = 0;
    for (const auto &[k, n] : r.kind_counts)
        by_kind += n;
    EXPECT_EQ(by_kind, r.total);
}

TEST(Spot, CountEqualsPerClipRerun) {
    auto f = built_fixture("spot_oracle");
    auto r = cmd_spot(f.cfg);
    const auto vocab = spotting::load_sign_vocab(f.cfg.paths.posteriors_dir + "/sign_vocab.txt");
    std::size_t expected = 0;
    std::map<std::string, std::vector<spotting::FsProposal>> props;
    for (auto &p : spotting::read_proposals(f.cfg.paths.proposals_file))
        props[p.clip_id].push_back(p);
    for (const auto &clip : load_split(f.cfg, "train")) {
        auto s = spotting::load_posteriors(f.cfg.paths.posteriors_dir + "/" + clip.clip_id + ".pst", vocab,
                                           clip.clip_id);
        expected += spotting::spot_clip(&s, props[clip.clip_id], text::tokenize(clip.text), f.cfg.spot).size();
    }
    EXPECT_EQ(r.total, expected);
    EXPECT_GT(r.total, 0u);
}

TEST(Spot, IsolatedLexiconIsAppended) {
    auto f = built_fixture("spot_lexicon");
    const auto base = cmd_spot(f.cfg).total;
    write_file(f.root / "lexicon.jsonl",
               R"({"clip_id":"iso1","start_frame":0,"end_frame":20,"word":"snow","kind":"lexical","score":1.0})" "\n");
    f.cfg.paths.isolated_lexicon = (f.root / "lexicon.jsonl").string();
    auto r = cmd_spot(f.cfg);
    EXPECT_EQ(r.total, base + 1);
    EXPECT_EQ(r.source_counts.at("spotted"), base);
}

TEST(Train, MissingFeatureFailsBeforeTraining) {
    auto f = built_fixture("train_missing");
    const auto clip = load_split(f.cfg, "train").back().clip_id;
    std::filesystem::remove(std::filesystem::path(f.cfg.paths.features_dir) /
                            fusion::feature_filename(clip, fusion::Modality::hand));
    bool trained = false;
    try {
        cmd_train(f.cfg, [&](Level, const std::string &m) { trained |= m.rfind("iter", 0) == 0; });
        FAIL() << "expected InputError";
    } catch (const InputError &e) {
        EXPECT_NE(std::string(e.what()).find(clip), std::string::npos);
    }
    EXPECT_FALSE(trained);
    EXPECT_FALSE(std::filesystem::exists(checkpoint_path(f.cfg)));
}

TEST(Train, VocabularySizeMismatchIsConfigError) {
    auto f = built_fixture("train_vocab");
    f.cfg.fusion.vocab_size = 7;
    EXPECT_THROW(cmd_train(f.cfg), ConfigError);
}

TEST(Train, WritesCheckpointAndCurve) {
    auto f = built_fixture("train_outputs");
    auto r = cmd_train(f.cfg);
    EXPECT_EQ(r.examples, load_split(f.cfg, "train").size());
    EXPECT_TRUE(std::filesystem::exists(checkpoint_path(f.cfg)));
    const auto curve = read_file(out_path(f.cfg, "loss_curve.tsv"));
    EXPECT_EQ(std::count(curve.begin(), curve.end(), '\n'), f.cfg.fusion.total_iters + 1);
}

TEST(Translate, MissingCheckpointIsInputError) {
    auto f = built_fixture("translate_missing");
    EXPECT_THROW(cmd_translate(f.cfg), InputError);
}

TEST(Translate, OneLinePerClip) {
    auto f = built_fixture("translate_lines");
    cmd_train(f.cfg);
    f.cfg.decode.split = "dev";
    auto r = cmd_translate(f.cfg);
    const auto hyps = read_hypotheses(r.output);
    EXPECT_EQ(hyps.size(), load_split(f.cfg, "dev").size());
    for (const auto &c : load_split(f.cfg, "dev"))
        EXPECT_TRUE(hyps.count(c.clip_id));
}

TEST(Eval, IdentityHypothesesScoreHundred) {
    auto f = built_fixture("eval_identity");
    std::string hyp;
    for (const auto &c : load_split(f.cfg, "test"))
        hyp += c.clip_id + "\t" + c.text + "\n";
    write_file(hypotheses_path(f.cfg, "test"), hyp);
    auto r = cmd_eval(f.cfg);
    EXPECT_DOUBLE_EQ(r.report.find("all")->scores->bleu[3], 100.0);
    EXPECT_DOUBLE_EQ(r.report.find("all")->scores->rouge_l, 100.0);
    EXPECT_EQ(read_file(r.output), metrics::format_report(r.report));
}

TEST(Eval, TagsComeFromManifestsAndProposals) {
    auto f = built_fixture("eval_tags");
    const auto train = load_split(f.cfg, "train");
    auto test = load_split(f.cfg, "test");
    test[0].text = train[0].text;
    test[0].source = corpus::Source::vlog;
    test[1].source = corpus::Source::news;
    corpus::write_manifest(manifest_path(f.cfg, "test").string(), test);
    write_file(f.cfg.paths.proposals_file,
               nlohmann::json(spotting::FsProposal{test[1].clip_id, 0, 10, 0.7, "SNOW"}).dump() + "\n" +
                   nlohmann::json(spotting::FsProposal{test[0].clip_id, 0, 10, 0.3, "SNOW"}).dump() + "\n");
    std::string hyp;
    for (const auto &c : test)
        hyp += c.clip_id + "\tx\n";
    write_file(hypotheses_path(f.cfg, "test"), hyp);
    auto r = cmd_eval(f.cfg).report;
    EXPECT_GE(r.find("duplicate")->count, 1u);
    EXPECT_EQ(r.find("vlog")->count, 1u);
    EXPECT_EQ(r.find("news")->count, 1u);
    EXPECT_EQ(r.find("with_fs")->count, 1u);
}

TEST(Eval, HypothesisSetMustMatchSplit) {
    auto f = built_fixture("eval_mismatch");
    const auto test = load_split(f.cfg, "test");
    write_file(hypotheses_path(f.cfg, "test"), test[0].clip_id + "\tsome words\n");
    EXPECT_THROW(cmd_eval(f.cfg), InputError);
    write_file(hypotheses_path(f.cfg, "test"),
               test[0].clip_id + "\ta\n" + test[1].clip_id + "\tb\nstranger\tc\n");
    EXPECT_THROW(cmd_eval(f.cfg), InputError);
    write_file(hypotheses_path(f.cfg, "test"), "no tab here\n");
    EXPECT_THROW(cmd_eval(f.cfg), ParseError);
}

TEST(Gradcheck, DefaultDeskConfigPasses) {
    auto r = cmd_gradcheck(PipelineConfig{}, {});
    EXPECT_LT(r.max_rel_error, 1e-4);
    EXPECT_GT(r.checked, 0u);
}

TEST(Gradcheck, FullCheckOnTinyConfig) {
    PipelineConfig c;
    c.fusion = testing::tiny_config();
    GradCheckCommandOptions opt;
    opt.max_per_block = 0;
    auto r = cmd_gradcheck(c, opt);
    EXPECT_LT(r.max_rel_error, 1e-4);
}

std::string cli() { return SLTK_CLI_PATH; }

int run(const std::string &args, const std::filesystem::path &log) {
    const int status = std::system((cli() + " " + args + " > " + log.string() + " 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
    auto dir = testing::scratch_dir("cli_exit");
    const auto log = dir / "log.txt";
    EXPECT_EQ(run("translate --paths.output_dir " + (dir / "out").string(), log), 1);
    EXPECT_NE(read_file(log).find("checkpoint"), std::string::npos);
    EXPECT_EQ(run("gradcheck", log), 0);
    EXPECT_NE(read_file(log).find("max_rel_error"), std::string::npos);
    EXPECT_NE(read_file(log).find("\"delta_l\": 0.6"), std::string::npos);
    EXPECT_EQ(run("gradcheck --spot.bogus 1", log), 1);
    EXPECT_EQ(run("", log), 1);
    EXPECT_EQ(run("corpus build --paths.captions_dir " + (dir / "none").string() + " --paths.metadata_file " +
                      log.string(),
                  log),
              1);
}

TEST(Cli, FullPipelineWithConfigFile) {
    auto f = make_pipeline_fixture("cli_pipeline");
    const auto cfg_file = f.root / "config.json";
    write_file(cfg_file, dump_config(f.cfg));
    const auto log = f.root / "log.txt";
    const std::string c = " --config " + cfg_file.string();
    ASSERT_EQ(run("corpus build" + c, log), 0) << read_file(log);
    write_clip_assets(f.cfg);
    ASSERT_EQ(run("spot" + c, log), 0) << read_file(log);
    ASSERT_EQ(run("train" + c, log), 0) << read_file(log);
    ASSERT_EQ(run("translate" + c, log), 0) << read_file(log);
    ASSERT_EQ(run("eval" + c, log), 0) << read_file(log);
    EXPECT_NE(read_file(log).find("all\tBLEU-4"), std::string::npos);
    EXPECT_TRUE(std::filesystem::exists(report_path(f.cfg, "test")));
}

} // namespace
} // namespace sltk::pipeline
