#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "sltk/pipeline/commands.hpp"

namespace {

using namespace sltk;
using Overrides = std::vector<std::pair<std::string, std::string>>;

Overrides parse_overrides(const std::vector<std::string> &extras) {
    Overrides out;
    for (std::size_t i = 0; i < extras.size(); ++i) {
        const std::string &a = extras[i];
        if (a.rfind("--", 0) != 0 || a.size() == 2)
            throw ConfigError("unexpected argument '" + a + "'");
        std::string key = a.substr(2), value;
        if (auto eq = key.find('='); eq != std::string::npos) {
            value = key.substr(eq + 1);
            key = key.substr(0, eq);
        } else if (i + 1 < extras.size()) {
            value = extras[++i];
        } else {
            throw ConfigError("override --" + key + " has no value");
        }
        out.emplace_back(key, value);
    }
    return out;
}

pipeline::Logger spdlog_logger() {
    return [](pipeline::Level lv, const std::string &msg) {
        switch (lv) {
        case pipeline::Level::debug:
            spdlog::debug(msg);
            break;
        case pipeline::Level::info:
            spdlog::info(msg);
            break;
        case pipeline::Level::warn:
            spdlog::warn(msg);
            break;
        }
    };
}

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("sltk");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");
    const char *env = std::getenv("SLTK_LOG_LEVEL");
    spdlog::set_level(env ? spdlog::level::from_str(env) : spdlog::level::info);
}

void print_counts(const char *title, const std::map<std::string, std::size_t> &m) {
    std::printf("%s\n", title);
    for (const auto &[k, v] : m)
        std::printf("  %s\t%zu\n", k.c_str(), v);
}

} // namespace

int main(int argc, char **argv) {
    setup_logging();
    CLI::App app{"Sign language translation toolkit"};
    app.require_subcommand(1);
    std::string config_path, hypotheses;
    pipeline::GradCheckCommandOptions gc;

    auto add = [&](CLI::App *parent, const std::string &name, const std::string &desc) {
        auto *cmd = parent->add_subcommand(name, desc);
        cmd->allow_extras();
        cmd->add_option("-c,--config", config_path, "JSON configuration file");
        return cmd;
    };
    auto *corpus = app.add_subcommand("corpus", "Corpus construction");
    corpus->require_subcommand(1);
    auto *build = add(corpus, "build", "Captions to train/dev/test manifests and vocabulary");
    auto *stats = add(corpus, "stats", "Statistics of the manifests on disk");
    auto *spot = add(&app, "spot", "Spot signs in training clips");
    auto *train = add(&app, "train", "Train the fusion model");
    auto *translate = add(&app, "translate", "Decode a split with beam search");
    auto *eval = add(&app, "eval", "Score hypotheses against a split");
    eval->add_option("--hypotheses", hypotheses, "Hypothesis file (default: output_dir/hypotheses.<split>.tsv)");
    auto *gradcheck = add(&app, "gradcheck", "Finite-difference gradient check");
    gradcheck->add_option("--max-per-block", gc.max_per_block, "Entries checked per parameter block (0 = all)");
    gradcheck->add_option("--order", gc.order, "Difference stencil order (2 or 4)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    const auto logger = spdlog_logger();
    try {
        CLI::App *cmd = nullptr;
        for (auto *c : {build, stats, spot, train, translate, eval, gradcheck})
            if (c->parsed())
                cmd = c;
        const auto cfg = pipeline::load_config(config_path, parse_overrides(cmd->remaining()));
        std::cerr << "resolved configuration:\n" << pipeline::dump_config(cfg);

        if (cmd == build) {
            auto r = pipeline::cmd_corpus_build(cfg, logger);
            std::printf("videos\t%zu\nvocab\t%d\n", r.videos, r.vocab_size);
            print_counts("records", r.split_counts);
            std::printf("%s\n", r.stats.dump(2).c_str());
        } else if (cmd == stats) {
            std::printf("%s\n", pipeline::cmd_corpus_stats(cfg).dump(2).c_str());
        } else if (cmd == spot) {
            auto r = pipeline::cmd_spot(cfg, logger);
            std::printf("clips\t%zu\nskipped\t%zu\ntotal\t%zu\n", r.clips, r.skipped, r.total);
            print_counts("kinds", r.kind_counts);
            print_counts("sources", r.source_counts);
        } else if (cmd == train) {
            auto r = pipeline::cmd_train(cfg, logger);
            std::printf("examples\t%zu\nparameters\t%zu\nfirst_loss\t%.6f\nfinal_loss\t%.6f\n", r.examples,
                        r.parameters, r.first_loss, r.final_loss);
        } else if (cmd == translate) {
            auto r = pipeline::cmd_translate(cfg, logger);
            std::printf("clips\t%zu\nforced\t%zu\noutput\t%s\n", r.clips, r.forced, r.output.c_str());
        } else if (cmd == eval) {
            auto r = pipeline::cmd_eval(cfg, hypotheses);
            std::printf("%s", metrics::format_report(r.report).c_str());
        } else if (cmd == gradcheck) {
            auto r = pipeline::cmd_gradcheck(cfg, gc, logger);
            std::printf("checked\t%zu\nmax_rel_error\t%.3e\nworst\t%s\n", r.checked, r.max_rel_error,
                        r.worst_param.c_str());
            if (!(r.max_rel_error < 1e-4)) {
                spdlog::error("max relative error {:.3e} exceeds 1e-4", r.max_rel_error);
                return 2;
            }
        }
        return 0;
    } catch (const InputError &e) {
        spdlog::error("{}", e.what());
        return 1;
    } catch (const std::exception &e) {
        spdlog::error("{}", e.what());
        return 2;
    }
}
