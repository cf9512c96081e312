// sumrec: validate a corpus, split it, and run/ablate/report the estimator roster.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sumrec/error.hpp"
#include "sumrec/pipeline.hpp"

namespace {

struct Options {
    std::string config;
    std::string backend = "mock";
    std::string estimators;
    bool no_cache = false;
    std::optional<std::uint64_t> seed;
};

sumrec::RunConfig load_config(const Options& o) {
    auto config = sumrec::RunConfig::load(o.config);
    config.backend = o.backend == "live" ? sumrec::BackendMode::Live : sumrec::BackendMode::Mock;
    config.use_cache = !o.no_cache;
    if (!o.estimators.empty()) config.estimators = sumrec::estimators_from_names(o.estimators);
    if (o.seed) config.split_seed = *o.seed;
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SumRec evaluation pipeline"};
    app.set_version_flag("--version", SUMREC_VERSION);
    app.require_subcommand(1);

    Options opts;
    app.add_option("--config", opts.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    app.add_option("--backend", opts.backend, "Chat-completion backend")
        ->check(CLI::IsMember({"live", "mock"}))
        ->capture_default_str();
    app.add_option("--estimators", opts.estimators,
                   "Comma-separated roster override: random,human,llm,sumrec-llm,encoder,sumrec-encoder");
    app.add_flag("--no-cache", opts.no_cache, "Bypass the completion cache");
    app.add_option("--seed", opts.seed, "Override the split seed");

    auto* validate = app.add_subcommand("validate", "Check corpus invariants and print statistics");
    auto* split = app.add_subcommand("split", "Compute the train/valid/test split");
    auto* run = app.add_subcommand("run", "Run every stage and write the report");
    auto* ablate = app.add_subcommand("ablate", "Run the SumRec ablation rows");
    auto* report = app.add_subcommand("report", "Rebuild the report from stored predictions");
    app.fallthrough();

    CLI11_PARSE(app, argc, argv);

    sumrec::RunConfig config;
    try {
        config = load_config(opts);
    } catch (const sumrec::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return validate->parsed() ? 2 : 1;
    }

    if (validate->parsed()) return sumrec::cmd_validate(config, std::cout, std::cerr);
    if (split->parsed()) return sumrec::cmd_split(config, std::cout, std::cerr);
    if (run->parsed()) return sumrec::cmd_run(config, std::cout, std::cerr);
    if (ablate->parsed()) return sumrec::cmd_ablate(config, std::cout, std::cerr);
    if (report->parsed()) return sumrec::cmd_report(config, std::cout, std::cerr);
    return 1;
}
