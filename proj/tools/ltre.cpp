// Command-line driver: gen, index, train, eval, diagnose.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "ltre/experiment.hpp"
#include "ltre/log.hpp"

namespace {

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> strategy;
    std::optional<std::string> index;
    std::optional<std::size_t> depth;
    std::optional<std::int64_t> steps;
    std::optional<std::string> loss;
    std::optional<int> threads;
    std::optional<std::string> out_dir;
};

ltre::ExperimentConfig resolve(const Overrides& o, const std::string& command) {
    auto cfg = o.config.empty() ? ltre::ExperimentConfig{} : ltre::load_experiment_config(o.config);
    if (o.seed) {
        // --seed drives the randomness the command itself consumes.
        if (command == "gen") {
            cfg.corpus.seed = *o.seed;
        } else if (command == "index") {
            cfg.index.seed = *o.seed;
        } else {
            cfg.train.seed = *o.seed;
        }
    }
    if (o.strategy) {
        cfg.train.strategy = ltre::Strategy::parse(*o.strategy);
    }
    if (o.index) {
        auto parsed = ltre::IndexChoice::parse(*o.index);
        cfg.index.kind = parsed.kind;
        cfg.index.m = parsed.m;
    }
    if (o.depth) {
        cfg.train.depth_n = *o.depth;
    }
    if (o.steps) {
        cfg.train.steps = *o.steps;
    }
    if (o.loss) {
        cfg.train.loss = ltre::LossKind::parse(*o.loss);
    }
    if (o.threads) {
        cfg.train.threads = *o.threads;
    }
    if (o.out_dir) {
        cfg.out_dir = *o.out_dir;
    }
    cfg.validate();
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    ltre::configure_logging_from_env();

    CLI::App app{"ltre: learning-to-retrieve experiments on a synthetic corpus.\n"
                 "Log verbosity follows LTRE_LOG_LEVEL (trace, debug, info, warn, error, off)."};
    app.require_subcommand(1);
    app.fallthrough();

    Overrides o;
    app.add_option("--config", o.config, "JSON experiment config (unknown keys are rejected)")
            ->check(CLI::ExistingFile);
    app.add_option("--seed", o.seed, "seed for the command's randomness (gen: corpus, index: PQ, else training)");
    app.add_option("--strategy", o.strategy, "ltre | randneg | lexical (alias lexical-neg) | inbatch | nce | async | async:<R>");
    app.add_option("--index", o.index, "flat | pq<m>");
    app.add_option("--depth", o.depth, "training retrieval depth n");
    app.add_option("--steps", o.steps, "training steps");
    app.add_option("--loss", o.loss, "ranknet | lambdarank-mrr | lambdarank-ndcg");
    app.add_option("--threads", o.threads, "query-level worker threads; outputs do not depend on it")
            ->check(CLI::PositiveNumber);
    app.add_option("--out-dir", o.out_dir, "artifact directory");

    auto* gen = app.add_subcommand("gen", "generate the synthetic corpus, embeddings and qrels");
    auto* index = app.add_subcommand("index", "build the configured index over the document embeddings");
    auto* train = app.add_subcommand("train", "train the query encoder; writes checkpoint and training log");
    auto* eval = app.add_subcommand("eval", "retrieve for held-out queries; writes run file and metrics");
    auto* diagnose = app.add_subcommand("diagnose", "per-step strategy diagnostics and train x eval index grid");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            ltre::cmd_gen(resolve(o, "gen"));
        } else if (index->parsed()) {
            ltre::cmd_index(resolve(o, "index"));
        } else if (train->parsed()) {
            ltre::cmd_train(resolve(o, "train"));
        } else if (eval->parsed()) {
            auto report = ltre::cmd_eval(resolve(o, "eval"));
            std::cout << report.csv_header() << '\n' << report.csv_row() << '\n';
        } else if (diagnose->parsed()) {
            ltre::cmd_diagnose(resolve(o, "diagnose"));
        }
    } catch (const ltre::Error& e) {
        std::cerr << "ltre: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
