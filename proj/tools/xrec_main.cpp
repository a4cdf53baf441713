#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "xrec/common.hpp"
#include "xrec/errors.hpp"
#include "xrec/pipeline.hpp"

#include <CLI11.hpp>

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    bool force = false;
    bool dry_run = false;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_out_dir = true) {
    cmd->add_option("--config", args.config_path, "Pipeline config JSON")->required();
    if (with_out_dir) {
        cmd->add_option("--out", args.out_dir, "Output directory (overrides config)");
    }
    cmd->add_flag("--force", args.force, "Ignore up-to-date and staleness checks");
    cmd->add_flag("--dry-run", args.dry_run, "Print the plan without side effects");
    cmd->add_option("--seed", args.seed, "Run a single split seed")
        ->each([&args](const std::string&) { args.seed_set = true; });
}

int load_and_run(const CommonArgs& args,
                 const std::function<int(const xrec::pipeline::PipelineConfig&,
                                         const xrec::pipeline::GlobalOptions&)>& fn) {
    xrec::pipeline::PipelineConfig config;
    try {
        config = xrec::pipeline::PipelineConfig::from_file(args.config_path);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: cannot load config %s: %s\n", args.config_path.c_str(),
                     e.what());
        return 2;
    }
    xrec::pipeline::GlobalOptions opts;
    opts.out_dir = args.out_dir;
    opts.force = args.force;
    opts.dry_run = args.dry_run;
    if (args.seed_set) opts.seed = args.seed;
    return fn(config, opts);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multimodal item-enrichment and two-tower recommendation pipeline"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(xrec::kToolVersion));

    CommonArgs ingest_args;
    auto* ingest = app.add_subcommand("ingest", "Parse the dataset and write split manifests");
    add_common(ingest, ingest_args);

    CommonArgs enrich_args;
    xrec::pipeline::EnrichOverrides enrich_ov;
    auto* enrich = app.add_subcommand("enrich", "Run prompting strategies against the backend");
    add_common(enrich, enrich_args);
    enrich->add_option("--strategy", enrich_ov.strategies,
                       "Strategy tag (repeatable; overrides config)");
    enrich->add_option("--backend-config", enrich_ov.backend_config,
                       "Backend config JSON overriding the configured chat backend");
    enrich->add_option("--cache", enrich_ov.cache, "Enrichment cache file");
    enrich->add_option("--checkpoint", enrich_ov.checkpoint,
                       "Checkpoint journal (single strategy only)");
    enrich->add_option("--parallelism", enrich_ov.parallelism, "Concurrent requests");

    CommonArgs embed_args;
    auto* embed = app.add_subcommand("embed", "Populate the embedding store");
    add_common(embed, embed_args);

    CommonArgs repr_args;
    auto* repr = app.add_subcommand("repr", "Build per-combo item representations");
    add_common(repr, repr_args);

    CommonArgs train_args;
    xrec::pipeline::TrainOverrides train_ov;
    bool train_grid = false;
    auto* train = app.add_subcommand("train", "Train the two-tower model per combo and seed");
    add_common(train, train_args);
    train->add_option("--repr", train_ov.repr, "Representation base path (single-run mode)");
    train->add_option("--splits", train_ov.splits, "Splits directory (single-run mode)");
    train->add_option("--lr", train_ov.learning_rate, "Learning rate override");
    train->add_option("--dropout", train_ov.dropout, "Dropout override");
    train->add_option("--max-epochs", train_ov.max_epochs, "Epoch cap override");
    train->add_flag("--grid", train_grid, "Run the hyperparameter grid search instead");

    CommonArgs grid_args;
    auto* grid = app.add_subcommand("grid", "Grid-search learning rate and dropout");
    add_common(grid, grid_args);

    CommonArgs eval_args;
    xrec::pipeline::EvalOverrides eval_ov;
    auto* eval = app.add_subcommand("eval", "Evaluate checkpoints on the test split");
    // For eval, --out names the metrics report; the output directory comes
    // from the config.
    add_common(eval, eval_args, /*with_out_dir=*/false);
    eval->add_option("--k", eval_ov.k, "Cutoff for the ranking metrics");
    eval->add_option("--splits-dir", eval_ov.splits_dir, "Splits directory (single-run mode)");
    eval->add_option("--checkpoint", eval_ov.checkpoint, "Checkpoint base path (single-run mode)");
    eval->add_option("--repr", eval_ov.repr, "Representation base path (single-run mode)");
    eval->add_option("--out", eval_ov.out, "Write the metrics table/report to this path");
    eval->add_flag("--table", eval_ov.print_table, "Print the per-combo metrics table");

    CommonArgs analyze_args;
    xrec::pipeline::AnalyzeOverrides analyze_ov;
    auto* analyze = app.add_subcommand("analyze", "Similarity analysis of enriched responses");
    // For analyze, --out names the similarity CSV.
    add_common(analyze, analyze_args, /*with_out_dir=*/false);
    analyze->add_option("--strategies", analyze_ov.strategies,
                        "Strategy tags to analyze (overrides config)");
    analyze->add_option("--out", analyze_ov.out, "Similarity CSV path");

    CommonArgs report_args;
    auto* report = app.add_subcommand("report", "Collect the summary table and analysis outputs");
    add_common(report, report_args);

    CLI11_PARSE(app, argc, argv);

    using xrec::pipeline::GlobalOptions;
    using xrec::pipeline::PipelineConfig;

    if (ingest->parsed()) {
        return load_and_run(ingest_args, [](const PipelineConfig& c, const GlobalOptions& o) {
            return xrec::pipeline::cmd_ingest(c, o);
        });
    }
    if (enrich->parsed()) {
        return load_and_run(enrich_args, [&](const PipelineConfig& c, const GlobalOptions& o) {
            return xrec::pipeline::cmd_enrich(c, o, enrich_ov);
        });
    }
    if (embed->parsed()) {
        return load_and_run(embed_args, [](const PipelineConfig& c, const GlobalOptions& o) {
            return xrec::pipeline::cmd_embed(c, o);
        });
    }
    if (repr->parsed()) {
        return load_and_run(repr_args, [](const PipelineConfig& c, const GlobalOptions& o) {
            return xrec::pipeline::cmd_repr(c, o);
        });
    }
    if (train->parsed()) {
        return load_and_run(train_args, [&](const PipelineConfig& c, const GlobalOptions& o) {
            if (train_grid) return xrec::pipeline::cmd_grid(c, o);
            return xrec::pipeline::cmd_train(c, o, train_ov);
        });
    }
    if (grid->parsed()) {
        return load_and_run(grid_args, [](const PipelineConfig& c, const GlobalOptions& o) {
            return xrec::pipeline::cmd_grid(c, o);
        });
    }
    if (eval->parsed()) {
        return load_and_run(eval_args, [&](const PipelineConfig& c, const GlobalOptions& o) {
            return xrec::pipeline::cmd_eval(c, o, eval_ov);
        });
    }
    if (analyze->parsed()) {
        return load_and_run(analyze_args, [&](const PipelineConfig& c, const GlobalOptions& o) {
            return xrec::pipeline::cmd_analyze(c, o, analyze_ov);
        });
    }
    if (report->parsed()) {
        return load_and_run(report_args, [](const PipelineConfig& c, const GlobalOptions& o) {
            return xrec::pipeline::cmd_report(c, o);
        });
    }
    return 2;
}
