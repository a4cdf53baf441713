#include "xrec/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fcntl.h>
#include <fstream>
#include <set>
#include <unistd.h>

#include "xrec/analysis.hpp"
#include "xrec/common.hpp"
#include "xrec/embedding.hpp"
#include "xrec/errors.hpp"
#include "xrec/eval.hpp"
#include "xrec/metrics.hpp"
#include "xrec/prompting.hpp"

#include <json.hpp>

using nlohmann::json;

namespace xrec::pipeline {

namespace {

json ratios_to_json(const corpus::SplitRatios& r) {
    return json::array({r.train, r.val, r.test});
}

json hp_to_json(const recsys::Hyperparams& hp) {
    return json{{"learning_rate", hp.learning_rate}, {"dropout", hp.dropout},
                {"weight_decay", hp.weight_decay},   {"batch_size", hp.batch_size},
                {"beta1", hp.beta1},                 {"beta2", hp.beta2},
                {"epsilon", hp.epsilon},             {"eval_every", hp.eval_every},
                {"patience", hp.patience},           {"max_epochs", hp.max_epochs},
                {"neg_ratio", hp.neg_ratio},         {"hidden", hp.hidden},
                {"out_dim", hp.out_dim},             {"k", hp.k}};
}

}  // namespace

PipelineConfig PipelineConfig::from_file(const std::filesystem::path& path) {
    json j = json::parse(read_text_file(path));
    PipelineConfig cfg;

    if (j.contains("dataset")) {
        const json& d = j["dataset"];
        cfg.dataset.kind = d.value("kind", cfg.dataset.kind);
        cfg.dataset.ratings = d.value("ratings", "");
        cfg.dataset.posters = d.value("posters", "");
        cfg.dataset.descriptions = d.value("descriptions", "");
        cfg.dataset.metadata = d.value("metadata", "");
        cfg.dataset.reviews = d.value("reviews", "");
        cfg.dataset.synthetic.n_users = d.value("n_users", cfg.dataset.synthetic.n_users);
        cfg.dataset.synthetic.n_items = d.value("n_items", cfg.dataset.synthetic.n_items);
        cfg.dataset.synthetic.positives_per_user =
            d.value("positives_per_user", cfg.dataset.synthetic.positives_per_user);
        cfg.dataset.synthetic.popularity_weight =
            d.value("popularity_weight", cfg.dataset.synthetic.popularity_weight);
        cfg.dataset.synthetic.seed = d.value("seed", cfg.dataset.synthetic.seed);
    }

    // Per-dataset split presets; an explicit "ratios" entry wins.
    if (cfg.dataset.kind == "amazon") {
        cfg.ratios = corpus::SplitRatios{0.6, 0.2, 0.2};
    } else {
        cfg.ratios = corpus::SplitRatios{0.8, 0.1, 0.1};
    }
    if (j.contains("ratios")) {
        auto r = j["ratios"].get<std::vector<double>>();
        if (r.size() != 3) throw ValidationError("ratios must have three entries");
        cfg.ratios = corpus::SplitRatios{r[0], r[1], r[2]};
    }

    cfg.seeds = j.value("seeds", cfg.seeds);
    cfg.k_core = j.value("k_core", cfg.k_core);
    cfg.eval_negatives = j.value("eval_negatives", cfg.eval_negatives);
    cfg.strategies = j.value("strategies", cfg.strategies);
    cfg.combos = j.value("combos", cfg.combos);
    cfg.image_embeddings = j.value("image_embeddings", cfg.image_embeddings);
    cfg.out_dir = j.value("out", cfg.out_dir);
    cfg.omit_l_text = j.value("omit_l_text", cfg.omit_l_text);

    if (j.contains("chat_backend")) {
        const json& b = j["chat_backend"];
        cfg.chat_backend.endpoint_url = b.value("endpoint_url", "mock://deterministic");
        cfg.chat_backend.model_id = b.value("model_id", "mock-lmm");
        cfg.chat_backend.api_key_env = b.value("api_key_env", "");
        cfg.chat_backend.temperature = b.value("temperature", 0.0);
        cfg.chat_backend.max_tokens = b.value("max_tokens", 512);
        cfg.chat_backend.timeout_s = b.value("timeout_s", 30);
        cfg.chat_backend.max_retries = b.value("max_retries", 3);
        cfg.chat_backend.parallelism = b.value("parallelism", 1);
        cfg.chat_backend.backoff_base_ms = b.value("backoff_base_ms", 1000);
    } else {
        cfg.chat_backend.endpoint_url = "mock://deterministic";
        cfg.chat_backend.model_id = "mock-lmm";
    }

    if (j.contains("embedder")) {
        const json& e = j["embedder"];
        cfg.embedder.kind = e.value("kind", cfg.embedder.kind);
        cfg.embedder.dim = e.value("dim", cfg.embedder.dim);
        cfg.embedder.model_id = e.value("model_id", cfg.embedder.model_id);
        cfg.embedder.endpoint_url = e.value("endpoint_url", "");
        cfg.embedder.api_key_env = e.value("api_key_env", "");
        cfg.embedder.store = e.value("store", "");
    }
    cfg.dataset.synthetic.embed_dim = cfg.embedder.dim;
    cfg.dataset.synthetic.embedder_model_id = cfg.embedder.model_id;

    if (j.contains("grid")) {
        const json& g = j["grid"];
        cfg.grid_learning_rates = g.value("learning_rates", cfg.grid_learning_rates);
        cfg.grid_dropouts = g.value("dropouts", cfg.grid_dropouts);
        cfg.grid_seed = g.value("seed", cfg.seeds.empty() ? 0 : cfg.seeds.front());
    } else {
        cfg.grid_seed = cfg.seeds.empty() ? 0 : cfg.seeds.front();
    }

    if (j.contains("hyperparams")) {
        const json& h = j["hyperparams"];
        cfg.hp.learning_rate = h.value("learning_rate", cfg.hp.learning_rate);
        cfg.hp.dropout = h.value("dropout", cfg.hp.dropout);
        cfg.hp.weight_decay = h.value("weight_decay", cfg.hp.weight_decay);
        cfg.hp.batch_size = h.value("batch_size", cfg.hp.batch_size);
        cfg.hp.eval_every = h.value("eval_every", cfg.hp.eval_every);
        cfg.hp.patience = h.value("patience", cfg.hp.patience);
        cfg.hp.max_epochs = h.value("max_epochs", cfg.hp.max_epochs);
        cfg.hp.neg_ratio = h.value("neg_ratio", cfg.hp.neg_ratio);
        cfg.hp.hidden = h.value("hidden", cfg.hp.hidden);
        cfg.hp.out_dim = h.value("out_dim", cfg.hp.out_dim);
        cfg.hp.k = h.value("k", cfg.hp.k);
    }

    if (j.contains("analyze")) {
        cfg.analyze_strategies = j["analyze"].value("strategies", cfg.analyze_strategies);
    }
    return cfg;
}

std::string PipelineConfig::canonical_json() const {
    json j{
        {"dataset",
         {{"kind", dataset.kind},
          {"ratings", dataset.ratings},
          {"posters", dataset.posters},
          {"descriptions", dataset.descriptions},
          {"metadata", dataset.metadata},
          {"reviews", dataset.reviews},
          {"n_users", dataset.synthetic.n_users},
          {"n_items", dataset.synthetic.n_items},
          {"positives_per_user", dataset.synthetic.positives_per_user},
          {"popularity_weight", dataset.synthetic.popularity_weight},
          {"seed", dataset.synthetic.seed}}},
        {"ratios", ratios_to_json(ratios)},
        {"seeds", seeds},
        {"k_core", k_core},
        {"eval_negatives", eval_negatives},
        {"strategies", strategies},
        {"combos", combos},
        {"chat_backend",
         {{"endpoint_url", chat_backend.endpoint_url},
          {"model_id", chat_backend.model_id},
          {"temperature", chat_backend.temperature},
          {"max_tokens", chat_backend.max_tokens},
          {"parallelism", chat_backend.parallelism}}},
        {"embedder",
         {{"kind", embedder.kind},
          {"dim", embedder.dim},
          {"model_id", embedder.model_id},
          {"endpoint_url", embedder.endpoint_url},
          {"store", embedder.store}}},
        {"image_embeddings", image_embeddings},
        {"grid",
         {{"learning_rates", grid_learning_rates},
          {"dropouts", grid_dropouts},
          {"seed", grid_seed}}},
        {"hyperparams", hp_to_json(hp)},
        {"analyze", analyze_strategies},
        {"omit_l_text", omit_l_text},
    };
    return j.dump();
}

std::string PipelineConfig::config_hash() const { return to_hex(fnv1a64(canonical_json())); }

namespace {

namespace fs = std::filesystem;

struct Paths {
    fs::path out;

    fs::path manifests() const { return out / "manifests"; }
    fs::path manifest(const std::string& stage) const { return manifests() / (stage + ".json"); }
    fs::path items() const { return out / "dataset" / "items.jsonl"; }
    fs::path splits_dir(std::uint64_t seed) const {
        return out / "splits" / ("seed_" + std::to_string(seed));
    }
    fs::path cache_dir() const { return out / "cache"; }
    fs::path enrichment_cache() const { return cache_dir() / "enrichment.jsonl"; }
    fs::path checkpoint_journal(const std::string& strategy) const {
        return cache_dir() / ("checkpoint_" + strategy + ".jsonl");
    }
    fs::path embedding_store() const { return cache_dir() / "embeddings.csv"; }
    fs::path repr_base(const std::string& combo) const { return out / "repr" / combo; }
    fs::path grid_dir(const std::string& combo) const { return out / "grid" / combo; }
    fs::path train_dir(const std::string& combo, std::uint64_t seed) const {
        return out / "train" / combo / ("seed_" + std::to_string(seed));
    }
    fs::path eval_dir(const std::string& combo) const { return out / "eval" / combo; }
    fs::path eval_table() const { return out / "eval" / "table.csv"; }
    fs::path analysis_dir() const { return out / "analysis"; }
    fs::path report_dir() const { return out / "report"; }
    fs::path lock() const { return out / ".xrec.lock"; }
};

std::vector<std::uint64_t> effective_seeds(const PipelineConfig& cfg, const GlobalOptions& opts) {
    if (opts.seed) return {*opts.seed};
    return cfg.seeds;
}

// One pipeline invocation per output directory; a dead owner's lock is stolen.
class OutputLock {
public:
    OutputLock(const fs::path& path, bool enabled) : path_(path), enabled_(enabled) {
        if (!enabled_) return;
        fs::create_directories(path.parent_path());
        for (int attempt = 0; attempt < 2; ++attempt) {
            int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
            if (fd >= 0) {
                std::string pid = std::to_string(::getpid()) + "\n";
                ssize_t n = ::write(fd, pid.c_str(), pid.size());
                (void)n;
                ::close(fd);
                held_ = true;
                return;
            }
            // Lock exists; steal it if the owner is gone.
            try {
                std::string owner = trim(read_text_file(path_));
                if (!owner.empty() && fs::exists(fs::path("/proc") / owner)) {
                    throw ValidationError("output directory is locked by pid " + owner + " (" +
                                          path_.string() + ")");
                }
            } catch (const ValidationError&) {
                throw;
            } catch (...) {
            }
            fs::remove(path_);
        }
        throw ValidationError("cannot acquire output lock: " + path_.string());
    }

    ~OutputLock() {
        if (held_) {
            std::error_code ec;
            fs::remove(path_, ec);
        }
    }

    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;

private:
    fs::path path_;
    bool enabled_;
    bool held_ = false;
};

struct Manifest {
    std::string stage;
    std::string tool_version;
    std::string config_hash;
    std::map<std::string, std::string> inputs;    // label -> content hash
    std::map<std::string, std::string> upstream;  // stage -> manifest hash
    std::vector<std::string> outputs;
    std::string created_at;

    std::string hash() const {
        json j{{"stage", stage},       {"tool_version", tool_version},
               {"config_hash", config_hash}, {"inputs", inputs},
               {"upstream", upstream}, {"outputs", outputs}};
        return to_hex(fnv1a64(j.dump()));
    }

    void write(const fs::path& path) const {
        json j{{"stage", stage},
               {"tool_version", tool_version},
               {"config_hash", config_hash},
               {"inputs", inputs},
               {"upstream", upstream},
               {"outputs", outputs},
               {"created_at", created_at},
               {"hash", hash()}};
        fs::create_directories(path.parent_path());
        write_text_file_atomic(path, j.dump(2) + "\n");
    }

    static Manifest read(const fs::path& path) {
        json j = json::parse(read_text_file(path));
        Manifest m;
        m.stage = j.value("stage", "");
        m.tool_version = j.value("tool_version", "");
        m.config_hash = j.value("config_hash", "");
        if (j.contains("inputs")) m.inputs = j["inputs"].get<std::map<std::string, std::string>>();
        if (j.contains("upstream")) {
            m.upstream = j["upstream"].get<std::map<std::string, std::string>>();
        }
        if (j.contains("outputs")) m.outputs = j["outputs"].get<std::vector<std::string>>();
        m.created_at = j.value("created_at", "");
        return m;
    }
};

Manifest require_manifest(const Paths& paths, const std::string& stage, const std::string& hint) {
    fs::path p = paths.manifest(stage);
    if (!fs::exists(p)) {
        throw ValidationError("missing " + hint + ": run `" + stage + "` first (" + p.string() +
                              " not found)");
    }
    return Manifest::read(p);
}

// Upstream manifests must agree with what the downstream stage recorded when
// it last ran; a mismatch means an upstream stage was re-run since.
void check_upstream_consistency(const Paths& paths, const Manifest& m, bool force) {
    if (force) return;
    for (const auto& [stage, recorded_hash] : m.upstream) {
        fs::path p = paths.manifest(stage);
        if (!fs::exists(p)) {
            throw ValidationError("stage " + m.stage + " depends on " + stage +
                                  ", whose manifest is missing; rerun or pass --force");
        }
        std::string current = Manifest::read(p).hash();
        if (current != recorded_hash) {
            throw ValidationError("stage " + m.stage + " is stale: upstream " + stage +
                                  " changed since it ran; rerun " + m.stage +
                                  " or pass --force");
        }
    }
}

bool outputs_exist(const Manifest& m) {
    return std::all_of(m.outputs.begin(), m.outputs.end(),
                       [](const std::string& p) { return fs::exists(p); });
}

bool up_to_date(const Paths& paths, const Manifest& fresh) {
    fs::path p = paths.manifest(fresh.stage);
    if (!fs::exists(p)) return false;
    Manifest existing = Manifest::read(p);
    return existing.hash() == fresh.hash() && outputs_exist(existing);
}

void require_file(const std::string& path, const std::string& what) {
    if (path.empty()) {
        throw ValidationError(what + " path is not configured");
    }
    if (!fs::exists(path)) {
        throw ValidationError(what + " file not found: " + path);
    }
}

int guarded(const GlobalOptions& opts, const Paths& paths, const std::function<void()>& body) {
    try {
        OutputLock lock(paths.lock(), !opts.dry_run);
        body();
        return 0;
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

Paths make_paths(const PipelineConfig& cfg, const GlobalOptions& opts) {
    Paths p;
    p.out = opts.out_dir.empty() ? fs::path(cfg.out_dir) : fs::path(opts.out_dir);
    return p;
}

std::unique_ptr<embedding::EmbeddingBackend> make_embedder_backend(const PipelineConfig& cfg) {
    if (cfg.embedder.kind == "hash") {
        return std::make_unique<embedding::HashEmbedder>(cfg.embedder.dim, cfg.embedder.model_id);
    }
    if (cfg.embedder.kind == "remote") {
        embedding::EmbedBackendConfig ec;
        ec.endpoint_url = cfg.embedder.endpoint_url;
        ec.model_id = cfg.embedder.model_id;
        ec.api_key_env = cfg.embedder.api_key_env;
        ec.dim = cfg.embedder.dim;
        return std::make_unique<embedding::RemoteEmbedder>(ec);
    }
    if (cfg.embedder.kind == "file") {
        require_file(cfg.embedder.store, "embedding store");
        return std::make_unique<embedding::FileStoreEmbedder>(cfg.embedder.store);
    }
    throw ValidationError("unknown embedder kind: " + cfg.embedder.kind);
}

std::set<std::string> strategies_needed_by_combos(const PipelineConfig& cfg) {
    std::set<std::string> needed;
    for (const auto& combo : cfg.combos) {
        for (const auto& s : embedding::combo_required_strategies(combo)) needed.insert(s);
    }
    return needed;
}

corpus::Dataset load_dataset(const PipelineConfig& cfg) {
    if (cfg.dataset.kind == "movielens") {
        require_file(cfg.dataset.ratings, "ratings");
        require_file(cfg.dataset.posters, "posters");
        require_file(cfg.dataset.descriptions, "descriptions");
        return corpus::parse_movielens(cfg.dataset.ratings, cfg.dataset.posters,
                                       cfg.dataset.descriptions);
    }
    if (cfg.dataset.kind == "amazon") {
        require_file(cfg.dataset.metadata, "metadata");
        require_file(cfg.dataset.reviews, "reviews");
        return corpus::parse_amazon(cfg.dataset.metadata, cfg.dataset.reviews);
    }
    if (cfg.dataset.kind == "synthetic") {
        return corpus::make_synthetic_dataset(cfg.dataset.synthetic);
    }
    throw ValidationError("unknown dataset kind: " + cfg.dataset.kind);
}

recsys::Hyperparams effective_hp(const PipelineConfig& cfg, const Paths& paths,
                                 const std::string& combo, const TrainOverrides& ov) {
    recsys::Hyperparams hp = cfg.hp;
    fs::path best = paths.grid_dir(combo) / "best_hp.json";
    if (fs::exists(best)) {
        json j = json::parse(read_text_file(best));
        hp.learning_rate = j.value("learning_rate", hp.learning_rate);
        hp.dropout = j.value("dropout", hp.dropout);
    }
    if (ov.learning_rate > 0.0) hp.learning_rate = ov.learning_rate;
    if (ov.dropout >= 0.0) hp.dropout = ov.dropout;
    if (ov.max_epochs > 0) hp.max_epochs = ov.max_epochs;
    return hp;
}

}  // namespace

int cmd_ingest(const PipelineConfig& config, const GlobalOptions& opts) {
    Paths paths = make_paths(config, opts);
    auto seeds = effective_seeds(config, opts);

    return guarded(opts, paths, [&]() {
        Manifest m;
        m.stage = "ingest";
        m.tool_version = std::string(kToolVersion);
        m.config_hash = config.config_hash();
        if (config.dataset.kind == "movielens") {
            require_file(config.dataset.ratings, "ratings");
            require_file(config.dataset.posters, "posters");
            require_file(config.dataset.descriptions, "descriptions");
            m.inputs["ratings"] = to_hex(hash_file(config.dataset.ratings));
            m.inputs["posters"] = to_hex(hash_file(config.dataset.posters));
            m.inputs["descriptions"] = to_hex(hash_file(config.dataset.descriptions));
        } else if (config.dataset.kind == "amazon") {
            require_file(config.dataset.metadata, "metadata");
            require_file(config.dataset.reviews, "reviews");
            m.inputs["metadata"] = to_hex(hash_file(config.dataset.metadata));
            m.inputs["reviews"] = to_hex(hash_file(config.dataset.reviews));
        } else {
            m.inputs["synthetic_spec"] = to_hex(fnv1a64(config.canonical_json()));
        }
        m.outputs.push_back(paths.items().string());
        for (auto seed : seeds) {
            m.outputs.push_back((paths.splits_dir(seed) / "splits.jsonl").string());
        }

        if (!opts.force && up_to_date(paths, m)) {
            std::printf("ingest: up to date\n");
            return;
        }
        if (opts.dry_run) {
            std::printf("ingest (dry run): would parse %s dataset, apply %d-core, write %zu "
                        "split manifests under %s\n",
                        config.dataset.kind.c_str(), config.k_core, seeds.size(),
                        (paths.out / "splits").string().c_str());
            return;
        }

        corpus::Dataset ds = load_dataset(config);
        if (ds.interactions.empty()) ds.interactions = corpus::to_implicit(ds.ratings);
        ds = corpus::k_core_filter(ds, config.k_core);
        corpus::save_items(paths.items(), ds.items);

        for (auto seed : seeds) {
            corpus::DatasetSplits splits = corpus::split_per_user(ds, config.ratios, seed);
            splits.eval_candidates = corpus::build_eval_candidates(
                splits, config.eval_negatives, seed, &splits.warnings);
            corpus::save_splits(paths.splits_dir(seed), splits);
            std::printf("ingest: seed %llu -> train=%zu val=%zu test=%zu users=%zu\n",
                        static_cast<unsigned long long>(seed), splits.train.size(),
                        splits.val.size(), splits.test.size(), splits.eval_candidates.size());
        }
        for (const auto& w : ds.warnings) std::printf("ingest: warning: %s\n", w.c_str());

        m.created_at = now_iso8601();
        m.write(paths.manifest("ingest"));
    });
}

int cmd_enrich(const PipelineConfig& config, const GlobalOptions& opts,
               const EnrichOverrides& ov) {
    Paths paths = make_paths(config, opts);

    return guarded(opts, paths, [&]() {
        Manifest ingest = require_manifest(paths, "ingest", "dataset manifests");
        check_upstream_consistency(paths, ingest, opts.force);

        std::vector<std::string> strategy_tags =
            ov.strategies.empty() ? config.strategies : ov.strategies;
        if (strategy_tags.empty()) {
            throw ValidationError("no strategies configured for enrichment");
        }
        if (!ov.checkpoint.empty() && strategy_tags.size() != 1) {
            throw ValidationError("--checkpoint requires exactly one --strategy");
        }
        std::vector<prompting::Strategy> strategies;
        for (const auto& tag : strategy_tags) {
            auto s = prompting::strategy_from_tag(tag);
            if (!s) throw ValidationError("unknown strategy tag: " + tag);
            strategies.push_back(*s);
        }

        gateway::BackendConfig backend_cfg = config.chat_backend;
        if (!ov.backend_config.empty()) {
            backend_cfg = gateway::BackendConfig::from_json_file(ov.backend_config);
        }
        if (ov.parallelism > 0) backend_cfg.parallelism = ov.parallelism;

        fs::path cache_path = ov.cache.empty() ? paths.enrichment_cache() : fs::path(ov.cache);

        Manifest m;
        m.stage = "enrich";
        m.tool_version = std::string(kToolVersion);
        m.config_hash = config.config_hash();
        m.inputs["items"] = to_hex(hash_file(paths.items()));
        m.upstream["ingest"] = ingest.hash();
        m.outputs.push_back(cache_path.string());

        if (!opts.force && up_to_date(paths, m)) {
            std::printf("enrich: up to date\n");
            return;
        }
        if (opts.dry_run) {
            std::printf("enrich (dry run): would run %zu strategies against %s with "
                        "parallelism %d, cache %s\n",
                        strategies.size(), backend_cfg.endpoint_url.c_str(),
                        backend_cfg.parallelism, cache_path.string().c_str());
            return;
        }

        auto items = corpus::load_items(paths.items());
        auto backend = gateway::make_chat_backend(backend_cfg);
        gateway::EnrichmentCache cache(cache_path);
        if (cache.corrupt_lines_skipped() > 0) {
            std::printf("enrich: warning: skipped %d corrupt cache lines (will re-fetch)\n",
                        cache.corrupt_lines_skipped());
        }

        gateway::EnrichOptions enrich_opts;
        enrich_opts.prompts.omit_l_text = config.omit_l_text;

        for (std::size_t i = 0; i < strategies.size(); ++i) {
            fs::path journal = ov.checkpoint.empty()
                                   ? paths.checkpoint_journal(strategy_tags[i])
                                   : fs::path(ov.checkpoint);
            auto report = gateway::enrich_corpus(items, strategies[i], *backend, cache, journal,
                                                 enrich_opts);
            std::printf("enrich: %s -> %zu records (%d cache hits, %zu skipped, %zu failed)\n",
                        strategy_tags[i].c_str(), report.records.size(), report.cache_hits,
                        report.skipped.size(), report.failed.size());
            for (const auto& [item, reason] : report.failed) {
                std::printf("enrich: failed %s: %s\n", item.c_str(), reason.c_str());
            }
        }

        m.created_at = now_iso8601();
        m.write(paths.manifest("enrich"));
    });
}

int cmd_embed(const PipelineConfig& config, const GlobalOptions& opts) {
    Paths paths = make_paths(config, opts);

    return guarded(opts, paths, [&]() {
        Manifest ingest = require_manifest(paths, "ingest", "dataset manifests");
        check_upstream_consistency(paths, ingest, opts.force);

        auto needed = strategies_needed_by_combos(config);

        Manifest m;
        m.stage = "embed";
        m.tool_version = std::string(kToolVersion);
        m.config_hash = config.config_hash();
        m.inputs["items"] = to_hex(hash_file(paths.items()));
        m.upstream["ingest"] = ingest.hash();
        if (!needed.empty()) {
            Manifest enrich = require_manifest(paths, "enrich", "enrichment records");
            check_upstream_consistency(paths, enrich, opts.force);
            m.upstream["enrich"] = enrich.hash();
            if (fs::exists(paths.enrichment_cache())) {
                m.inputs["enrichment"] = to_hex(hash_file(paths.enrichment_cache()));
            }
        }
        m.outputs.push_back(paths.embedding_store().string());

        if (!opts.force && up_to_date(paths, m)) {
            std::printf("embed: up to date\n");
            return;
        }
        if (opts.dry_run) {
            std::printf("embed (dry run): would embed item descriptions%s into %s\n",
                        needed.empty() ? "" : " and enrichment responses",
                        paths.embedding_store().string().c_str());
            return;
        }

        auto backend = make_embedder_backend(config);
        if (config.embedder.kind == "file") {
            std::printf("embed: using prebuilt store %s\n", config.embedder.store.c_str());
        } else {
            embedding::CachedEmbedder cached(paths.embedding_store(), *backend);
            auto items = corpus::load_items(paths.items());
            std::size_t texts = 0;
            for (const auto& item : items) {
                if (!item.description.empty()) {
                    cached.embed(item.description);
                    ++texts;
                }
            }
            if (!needed.empty()) {
                gateway::EnrichmentCache cache(paths.enrichment_cache());
                for (const auto& rec : cache.all_records()) {
                    if (needed.count(rec.strategy_tag) && !rec.response_text.empty()) {
                        cached.embed(rec.response_text);
                        ++texts;
                    }
                }
            }
            cached.save();
            std::printf("embed: %zu texts -> %zu unique embeddings\n", texts,
                        cached.store_size());
        }

        m.created_at = now_iso8601();
        m.write(paths.manifest("embed"));
    });
}

int cmd_repr(const PipelineConfig& config, const GlobalOptions& opts) {
    Paths paths = make_paths(config, opts);

    return guarded(opts, paths, [&]() {
        Manifest embed = require_manifest(paths, "embed", "embedding store");
        check_upstream_consistency(paths, embed, opts.force);

        Manifest m;
        m.stage = "repr";
        m.tool_version = std::string(kToolVersion);
        m.config_hash = config.config_hash();
        m.upstream["embed"] = embed.hash();
        m.inputs["items"] = to_hex(hash_file(paths.items()));
        for (const auto& combo : config.combos) {
            m.outputs.push_back((paths.repr_base(combo).string() + ".bin"));
            m.outputs.push_back((paths.repr_base(combo).string() + ".json"));
        }

        if (!opts.force && up_to_date(paths, m)) {
            std::printf("repr: up to date\n");
            return;
        }
        if (opts.dry_run) {
            std::printf("repr (dry run): would build %zu representation sets under %s\n",
                        config.combos.size(), (paths.out / "repr").string().c_str());
            return;
        }

        auto items = corpus::load_items(paths.items());
        auto backend = make_embedder_backend(config);
        std::unique_ptr<embedding::EmbeddingBackend> store_backend;
        embedding::EmbeddingBackend* effective = backend.get();
        if (config.embedder.kind != "file" && fs::exists(paths.embedding_store())) {
            store_backend = std::make_unique<embedding::CachedEmbedder>(paths.embedding_store(),
                                                                        *backend);
            effective = store_backend.get();
        }

        std::map<std::string, std::map<std::string, gateway::EnrichmentRecord>> records;
        if (fs::exists(paths.enrichment_cache())) {
            records = gateway::EnrichmentCache(paths.enrichment_cache()).by_item();
        }

        std::optional<embedding::ImageEmbeddings> image_embs;
        if (!config.image_embeddings.empty()) {
            image_embs = embedding::load_image_embeddings(config.image_embeddings);
        }

        for (const auto& combo : config.combos) {
            auto set = embedding::build_representation_set(
                combo, items, records, image_embs ? &*image_embs : nullptr, *effective);
            embedding::save_representations(paths.repr_base(combo), set);
            std::printf("repr: %s -> %zu items x %d dims\n", combo.c_str(), set.item_ids.size(),
                        set.dim);
        }

        m.created_at = now_iso8601();
        m.write(paths.manifest("repr"));
    });
}

int cmd_grid(const PipelineConfig& config, const GlobalOptions& opts) {
    Paths paths = make_paths(config, opts);

    return guarded(opts, paths, [&]() {
        Manifest repr = require_manifest(paths, "repr", "representations");
        check_upstream_consistency(paths, repr, opts.force);

        std::uint64_t seed = opts.seed.value_or(config.grid_seed);

        Manifest m;
        m.stage = "grid";
        m.tool_version = std::string(kToolVersion);
        m.config_hash = config.config_hash();
        m.upstream["repr"] = repr.hash();
        for (const auto& combo : config.combos) {
            m.outputs.push_back((paths.grid_dir(combo) / "best_hp.json").string());
        }

        if (!opts.force && up_to_date(paths, m)) {
            std::printf("grid: up to date\n");
            return;
        }
        if (opts.dry_run) {
            std::printf("grid (dry run): would train %zu x %zu combinations per combo on seed "
                        "%llu\n",
                        config.grid_learning_rates.size(), config.grid_dropouts.size(),
                        static_cast<unsigned long long>(seed));
            return;
        }

        auto splits = corpus::load_splits(paths.splits_dir(seed));
        for (const auto& combo : config.combos) {
            auto repr_set = embedding::load_representations(paths.repr_base(combo));
            recsys::Hyperparams base = config.hp;
            base.seed = seed;
            auto result = recsys::grid_search(splits, repr_set, config.grid_learning_rates,
                                              config.grid_dropouts, base);

            fs::create_directories(paths.grid_dir(combo));
            for (std::size_t i = 0; i < result.reports.size(); ++i) {
                const auto& r = result.reports[i];
                json rj{{"learning_rate", r.hp.learning_rate},
                        {"dropout", r.hp.dropout},
                        {"best_epoch", r.best_epoch},
                        {"best_val_recall", r.best_val_recall},
                        {"stopped_early", r.stopped_early},
                        {"val_recall_curve", r.val_recall_curve}};
                write_text_file_atomic(
                    paths.grid_dir(combo) / ("report_" + std::to_string(i) + ".json"),
                    rj.dump(2) + "\n");
            }
            json best{{"learning_rate", result.best.learning_rate},
                      {"dropout", result.best.dropout},
                      {"val_recall", result.best_val_recall},
                      {"seed", seed}};
            write_text_file_atomic(paths.grid_dir(combo) / "best_hp.json", best.dump(2) + "\n");
            std::printf("grid: %s -> best lr=%g dropout=%g (val recall %.4f, %zu reports)\n",
                        combo.c_str(), result.best.learning_rate, result.best.dropout,
                        result.best_val_recall, result.reports.size());
        }

        m.created_at = now_iso8601();
        m.write(paths.manifest("grid"));
    });
}

int cmd_train(const PipelineConfig& config, const GlobalOptions& opts, const TrainOverrides& ov) {
    Paths paths = make_paths(config, opts);

    // Explicit single-run mode bypasses manifests.
    if (!ov.repr.empty() || !ov.splits.empty()) {
        return guarded(opts, paths, [&]() {
            if (ov.repr.empty() || ov.splits.empty()) {
                throw ValidationError("single-run training needs both --repr and --splits");
            }
            if (opts.dry_run) {
                std::printf("train (dry run): would train on %s with %s\n", ov.splits.c_str(),
                            ov.repr.c_str());
                return;
            }
            auto splits = corpus::load_splits(ov.splits);
            auto repr_set = embedding::load_representations(ov.repr);
            recsys::Hyperparams hp = config.hp;
            if (ov.learning_rate > 0.0) hp.learning_rate = ov.learning_rate;
            if (ov.dropout >= 0.0) hp.dropout = ov.dropout;
            if (ov.max_epochs > 0) hp.max_epochs = ov.max_epochs;
            hp.seed = opts.seed.value_or(splits.seed);
            auto result = recsys::train(splits, repr_set, hp);
            fs::path dir = paths.out / "train" / "custom";
            recsys::save_checkpoint(dir / "checkpoint", result.model);
            std::printf("train: best epoch %d, val recall %.4f -> %s\n",
                        result.report.best_epoch, result.report.best_val_recall,
                        (dir / "checkpoint").string().c_str());
        });
    }

    return guarded(opts, paths, [&]() {
        Manifest repr = require_manifest(paths, "repr", "representations");
        check_upstream_consistency(paths, repr, opts.force);
        auto seeds = effective_seeds(config, opts);

        Manifest m;
        m.stage = "train";
        m.tool_version = std::string(kToolVersion);
        m.config_hash = config.config_hash();
        m.upstream["repr"] = repr.hash();
        if (fs::exists(paths.manifest("grid"))) {
            m.upstream["grid"] = Manifest::read(paths.manifest("grid")).hash();
        }
        for (const auto& combo : config.combos) {
            for (auto seed : seeds) {
                m.outputs.push_back((paths.train_dir(combo, seed) / "checkpoint.json").string());
            }
        }

        if (!opts.force && up_to_date(paths, m)) {
            std::printf("train: up to date\n");
            return;
        }
        if (opts.dry_run) {
            std::printf("train (dry run): would train %zu combos x %zu seeds\n",
                        config.combos.size(), seeds.size());
            return;
        }

        for (const auto& combo : config.combos) {
            auto repr_set = embedding::load_representations(paths.repr_base(combo));
            recsys::Hyperparams hp = effective_hp(config, paths, combo, ov);
            for (auto seed : seeds) {
                auto splits = corpus::load_splits(paths.splits_dir(seed));
                hp.seed = seed;
                auto result = recsys::train(splits, repr_set, hp);
                fs::path dir = paths.train_dir(combo, seed);
                recsys::save_checkpoint(dir / "checkpoint", result.model);
                json rj{{"combo", combo},
                        {"seed", seed},
                        {"learning_rate", hp.learning_rate},
                        {"dropout", hp.dropout},
                        {"best_epoch", result.report.best_epoch},
                        {"best_val_recall", result.report.best_val_recall},
                        {"stopped_early", result.report.stopped_early},
                        {"val_recall_curve", result.report.val_recall_curve},
                        {"train_loss_per_epoch", result.report.train_loss_per_epoch}};
                write_text_file_atomic(dir / "report.json", rj.dump(2) + "\n");
                std::printf("train: %s seed %llu -> best epoch %d, val recall %.4f%s\n",
                            combo.c_str(), static_cast<unsigned long long>(seed),
                            result.report.best_epoch, result.report.best_val_recall,
                            result.report.stopped_early ? " (early stop)" : "");
            }
        }

        m.created_at = now_iso8601();
        m.write(paths.manifest("train"));
    });
}

int cmd_eval(const PipelineConfig& config, const GlobalOptions& opts, const EvalOverrides& ov) {
    Paths paths = make_paths(config, opts);
    int k = ov.k > 0 ? ov.k : config.hp.k;

    // Explicit single-run mode.
    if (!ov.checkpoint.empty() || !ov.splits_dir.empty()) {
        return guarded(opts, paths, [&]() {
            if (ov.checkpoint.empty() || ov.splits_dir.empty() || ov.repr.empty()) {
                throw ValidationError("single-run evaluation needs --checkpoint, --splits-dir "
                                      "and --repr");
            }
            if (opts.dry_run) {
                std::printf("eval (dry run): would evaluate %s on %s at k=%d\n",
                            ov.checkpoint.c_str(), ov.splits_dir.c_str(), k);
                return;
            }
            if (!fs::exists(ov.checkpoint + ".json")) {
                throw ValidationError("missing checkpoint: " + ov.checkpoint);
            }
            auto model = recsys::load_checkpoint(ov.checkpoint);
            auto splits = corpus::load_splits(ov.splits_dir);
            auto repr_set = embedding::load_representations(ov.repr);
            auto report = eval::evaluate_model(model, splits, repr_set, k);
            std::string text = eval::report_to_json(report);
            if (!ov.out.empty()) {
                write_text_file_atomic(ov.out, text);
            }
            std::printf("eval: precision@%d=%.4f recall@%d=%.4f ndcg@%d=%.4f (%zu users)\n", k,
                        report.mean.precision, k, report.mean.recall, k, report.mean.ndcg,
                        report.per_user.size());
        });
    }

    return guarded(opts, paths, [&]() {
        Manifest train = require_manifest(paths, "train", "checkpoint");
        check_upstream_consistency(paths, train, opts.force);
        auto seeds = effective_seeds(config, opts);

        Manifest m;
        m.stage = "eval";
        m.tool_version = std::string(kToolVersion);
        m.config_hash = config.config_hash();
        m.upstream["train"] = train.hash();
        m.outputs.push_back(paths.eval_table().string());

        if (!opts.force && up_to_date(paths, m)) {
            std::printf("eval: up to date\n");
            if (ov.print_table && fs::exists(paths.eval_table())) {
                std::printf("%s", read_text_file(paths.eval_table()).c_str());
            }
            return;
        }
        if (opts.dry_run) {
            std::printf("eval (dry run): would evaluate %zu combos x %zu seeds at k=%d\n",
                        config.combos.size(), seeds.size(), k);
            return;
        }

        std::vector<eval::TableRow> rows;

        // Popularity baseline through the same candidate protocol.
        {
            std::vector<metrics::EvalReport> reports;
            fs::path dir = paths.eval_dir("item_popularity");
            fs::create_directories(dir);
            for (auto seed : seeds) {
                auto splits = corpus::load_splits(paths.splits_dir(seed));
                metrics::PopularityScorer pop(splits.train);
                auto report = eval::evaluate_split(eval::make_popularity_scorer(pop), splits,
                                                   eval::Part::test, k);
                write_text_file_atomic(dir / ("seed_" + std::to_string(seed) + ".json"),
                                       eval::report_to_json(report));
                reports.push_back(std::move(report));
            }
            auto agg = metrics::aggregate_splits(reports);
            rows.push_back({"item_popularity", agg});
        }

        for (const auto& combo : config.combos) {
            auto repr_set = embedding::load_representations(paths.repr_base(combo));
            std::vector<metrics::EvalReport> reports;
            fs::path dir = paths.eval_dir(combo);
            fs::create_directories(dir);
            for (auto seed : seeds) {
                fs::path ckpt = paths.train_dir(combo, seed) / "checkpoint";
                if (!fs::exists(ckpt.string() + ".json")) {
                    throw ValidationError("missing checkpoint: " + ckpt.string());
                }
                auto model = recsys::load_checkpoint(ckpt);
                auto splits = corpus::load_splits(paths.splits_dir(seed));
                auto report = eval::evaluate_model(model, splits, repr_set, k);
                write_text_file_atomic(dir / ("seed_" + std::to_string(seed) + ".json"),
                                       eval::report_to_json(report));
                reports.push_back(std::move(report));
            }
            auto agg = metrics::aggregate_splits(reports);
            json aj{{"combo", combo},
                    {"k", k},
                    {"n_splits", agg.n_splits},
                    {"precision_mean", agg.mean.precision},
                    {"precision_std", agg.stddev.precision},
                    {"recall_mean", agg.mean.recall},
                    {"recall_std", agg.stddev.recall},
                    {"ndcg_mean", agg.mean.ndcg},
                    {"ndcg_std", agg.stddev.ndcg}};
            write_text_file_atomic(dir / "aggregate.json", aj.dump(2) + "\n");
            rows.push_back({combo, agg});
        }

        std::string table = eval::metrics_table_csv(rows, k);
        write_text_file_atomic(paths.eval_table(), table);
        if (ov.print_table) std::printf("%s", table.c_str());
        if (!ov.out.empty()) write_text_file_atomic(ov.out, table);

        m.created_at = now_iso8601();
        m.write(paths.manifest("eval"));
    });
}

int cmd_analyze(const PipelineConfig& config, const GlobalOptions& opts,
                const AnalyzeOverrides& ov) {
    Paths paths = make_paths(config, opts);

    return guarded(opts, paths, [&]() {
        Manifest enrich = require_manifest(paths, "enrich", "enrichment records");
        check_upstream_consistency(paths, enrich, opts.force);

        std::vector<std::string> strategies =
            !ov.strategies.empty() ? ov.strategies : config.analyze_strategies;
        if (strategies.empty()) {
            throw ValidationError("no strategies configured for analysis");
        }

        Manifest m;
        m.stage = "analyze";
        m.tool_version = std::string(kToolVersion);
        m.config_hash = config.config_hash();
        m.upstream["enrich"] = enrich.hash();
        m.inputs["enrichment"] = to_hex(hash_file(paths.enrichment_cache()));
        fs::path csv_path = ov.out.empty() ? paths.analysis_dir() / "similarity.csv"
                                           : fs::path(ov.out);
        m.outputs.push_back(csv_path.string());

        if (!opts.force && up_to_date(paths, m)) {
            std::printf("analyze: up to date\n");
            return;
        }
        if (opts.dry_run) {
            std::printf("analyze (dry run): would compute similarity rows for %zu strategies "
                        "into %s\n",
                        strategies.size(), csv_path.string().c_str());
            return;
        }

        auto items = corpus::load_items(paths.items());
        auto records = gateway::EnrichmentCache(paths.enrichment_cache()).by_item();
        auto backend = make_embedder_backend(config);

        auto table = analysis::similarity_table(items, records, *backend, strategies);
        fs::create_directories(csv_path.parent_path());
        write_text_file_atomic(csv_path, analysis::similarity_csv(table));

        json summaries = json::object();
        for (const auto& tag : strategies) {
            auto s = analysis::diversity_summary(table, tag);
            summaries[tag] = {{"fraction_below_reference", s.fraction_below_reference},
                              {"mean_sim", s.mean_sim},
                              {"mean_reference", s.mean_reference},
                              {"items", s.n}};
        }
        json dj{{"rows", table.rows.size()}, {"skipped", table.skipped}, {"strategies", summaries}};
        write_text_file_atomic(paths.analysis_dir() / "diversity.json", dj.dump(2) + "\n");
        std::printf("analyze: %zu rows (%d skipped) -> %s\n", table.rows.size(), table.skipped,
                    csv_path.string().c_str());

        m.created_at = now_iso8601();
        m.write(paths.manifest("analyze"));
    });
}

int cmd_report(const PipelineConfig& config, const GlobalOptions& opts) {
    Paths paths = make_paths(config, opts);

    return guarded(opts, paths, [&]() {
        Manifest evalm = require_manifest(paths, "eval", "evaluation table");
        check_upstream_consistency(paths, evalm, opts.force);

        if (opts.dry_run) {
            std::printf("report (dry run): would collect eval and analysis outputs under %s\n",
                        paths.report_dir().string().c_str());
            return;
        }

        fs::create_directories(paths.report_dir());
        std::string table = read_text_file(paths.eval_table());
        write_text_file_atomic(paths.report_dir() / "summary.csv", table);
        if (fs::exists(paths.analysis_dir() / "diversity.json")) {
            write_text_file_atomic(paths.report_dir() / "diversity.json",
                                   read_text_file(paths.analysis_dir() / "diversity.json"));
        }
        std::printf("%s", table.c_str());

        Manifest m;
        m.stage = "report";
        m.tool_version = std::string(kToolVersion);
        m.config_hash = config.config_hash();
        m.upstream["eval"] = evalm.hash();
        m.outputs.push_back((paths.report_dir() / "summary.csv").string());
        m.created_at = now_iso8601();
        m.write(paths.manifest("report"));
    });
}

int run_stages(const PipelineConfig& config, const GlobalOptions& opts,
               const std::vector<std::string>& stages) {
    for (const auto& stage : stages) {
        int rc = 0;
        if (stage == "ingest") rc = cmd_ingest(config, opts);
        else if (stage == "enrich") rc = cmd_enrich(config, opts);
        else if (stage == "embed") rc = cmd_embed(config, opts);
        else if (stage == "repr") rc = cmd_repr(config, opts);
        else if (stage == "grid") rc = cmd_grid(config, opts);
        else if (stage == "train") rc = cmd_train(config, opts);
        else if (stage == "eval") rc = cmd_eval(config, opts);
        else if (stage == "analyze") rc = cmd_analyze(config, opts);
        else if (stage == "report") rc = cmd_report(config, opts);
        else {
            std::fprintf(stderr, "error: unknown stage %s\n", stage.c_str());
            return 2;
        }
        if (rc != 0) return rc;
    }
    return 0;
}

}  // namespace xrec::pipeline
