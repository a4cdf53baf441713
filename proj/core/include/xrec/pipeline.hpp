#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "xrec/corpus.hpp"
#include "xrec/gateway.hpp"
#include "xrec/recsys.hpp"
#include "xrec/synthetic.hpp"

namespace xrec::pipeline {

struct DatasetConfig {
    std::string kind = "synthetic";  // movielens | amazon | synthetic
    std::string ratings;
    std::string posters;
    std::string descriptions;
    std::string metadata;
    std::string reviews;
    corpus::SyntheticSpec synthetic;
};

struct EmbedderConfig {
    std::string kind = "hash";  // hash | remote | file
    int dim = 384;
    std::string model_id = "hash-embedder-v1";
    std::string endpoint_url;
    std::string api_key_env;
    std::string store;  // prebuilt store for kind=file
};

struct PipelineConfig {
    DatasetConfig dataset;
    corpus::SplitRatios ratios;  // preset per dataset kind unless given
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
    int k_core = 5;
    int eval_negatives = 1000;
    std::vector<std::string> strategies;
    std::vector<std::string> combos = {"text"};
    gateway::BackendConfig chat_backend;
    EmbedderConfig embedder;
    std::string image_embeddings;
    std::vector<double> grid_learning_rates = {0.0001, 0.0005, 0.001};
    std::vector<double> grid_dropouts = {0.1, 0.3, 0.5};
    std::uint64_t grid_seed = 0;
    recsys::Hyperparams hp;
    std::vector<std::string> analyze_strategies;
    std::string out_dir = "out";
    bool omit_l_text = true;

    static PipelineConfig from_file(const std::filesystem::path& path);
    std::string canonical_json() const;
    std::string config_hash() const;
};

struct GlobalOptions {
    std::string out_dir;  // overrides config.out_dir when nonempty
    bool force = false;
    bool dry_run = false;
    std::optional<std::uint64_t> seed;  // replaces the seed list
};

struct EnrichOverrides {
    std::vector<std::string> strategies;
    std::string backend_config;  // JSON file replacing the configured chat backend
    std::string cache;
    std::string checkpoint;  // only valid with a single strategy
    int parallelism = 0;
};

struct TrainOverrides {
    std::string repr;    // explicit representation base path (single-run mode)
    std::string splits;  // explicit splits dir (single-run mode)
    double learning_rate = 0.0;
    double dropout = -1.0;
    int max_epochs = 0;
};

struct EvalOverrides {
    int k = 0;
    std::string splits_dir;   // explicit single-run mode
    std::string checkpoint;   // explicit single-run mode
    std::string repr;         // representation base path for single-run mode
    std::string out;
    bool print_table = false;
};

struct AnalyzeOverrides {
    std::vector<std::string> strategies;
    std::string out;
};

// Stage commands. Exit codes: 0 ok (or plan printed / up to date), 1 runtime
// error, 2 validation error.
int cmd_ingest(const PipelineConfig& config, const GlobalOptions& opts);
int cmd_enrich(const PipelineConfig& config, const GlobalOptions& opts,
               const EnrichOverrides& ov = {});
int cmd_embed(const PipelineConfig& config, const GlobalOptions& opts);
int cmd_repr(const PipelineConfig& config, const GlobalOptions& opts);
int cmd_train(const PipelineConfig& config, const GlobalOptions& opts,
              const TrainOverrides& ov = {});
int cmd_grid(const PipelineConfig& config, const GlobalOptions& opts);
int cmd_eval(const PipelineConfig& config, const GlobalOptions& opts,
             const EvalOverrides& ov = {});
int cmd_analyze(const PipelineConfig& config, const GlobalOptions& opts,
                const AnalyzeOverrides& ov = {});
int cmd_report(const PipelineConfig& config, const GlobalOptions& opts);

// Runs the named stages in order, stopping at the first nonzero exit code.
int run_stages(const PipelineConfig& config, const GlobalOptions& opts,
               const std::vector<std::string>& stages);

}  // namespace xrec::pipeline
