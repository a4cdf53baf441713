// Acceptance suite: runs every release criterion at its stated tolerance and
// prints one PASS/FAIL line per criterion. Exits nonzero if any criterion
// fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "xrec/analysis.hpp"
#include "xrec/common.hpp"
#include "xrec/corpus.hpp"
#include "xrec/embedding.hpp"
#include "xrec/errors.hpp"
#include "xrec/eval.hpp"
#include "xrec/gateway.hpp"
#include "xrec/metrics.hpp"
#include "xrec/pipeline.hpp"
#include "xrec/prompting.hpp"
#include "xrec/recsys.hpp"
#include "xrec/synthetic.hpp"
#include "support/fake_server.hpp"
#include "support/oracles.hpp"
#include "support/test_util.hpp"

#include <json.hpp>

using namespace xrec;
namespace fs = std::filesystem;

namespace {

struct Failure {
    std::string detail;
};

void expect(bool ok, const std::string& detail) {
    if (!ok) throw Failure{detail};
}

// ---------------------------------------------------------------- criterion 1

void criterion_metric_oracle() {
    SplitMix64 rng(101);
    auto start = std::chrono::steady_clock::now();
    for (int trial = 0; trial < 1000; ++trial) {
        int n = 2 + static_cast<int>(rng.next_below(1000));  // up to 1001 candidates
        std::vector<std::string> ranking;
        ranking.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) ranking.push_back("c" + std::to_string(i));
        SplitMix64 shuffle_rng(rng.next());
        deterministic_shuffle(ranking, shuffle_rng);

        std::unordered_set<std::string> relevant;
        int n_rel = 1 + static_cast<int>(rng.next_below(10));
        for (int i = 0; i < n_rel; ++i) {
            relevant.insert("c" + std::to_string(rng.next_below(static_cast<std::uint64_t>(n))));
        }

        for (int k : {1, 10}) {
            auto m = metrics::metrics_at_k(ranking, relevant, k);
            auto o = xrec::test::metrics_oracle(ranking, relevant, k);
            expect(std::abs(m.precision - o.precision) < 1e-9, "precision mismatch");
            expect(std::abs(m.recall - o.recall) < 1e-9, "recall mismatch");
            expect(std::abs(m.ndcg - o.ndcg) < 1e-9, "ndcg mismatch");
        }
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    expect(secs < 10.0, "metric oracle took " + std::to_string(secs) + "s (limit 10s)");
}

// ---------------------------------------------------------------- criterion 2

double batch_mean_loss(const recsys::TwoTowerParams& params, const recsys::Batch& batch) {
    std::vector<double> probs;
    std::vector<int> labels;
    for (std::size_t i = 0; i < batch.user_idx.size(); ++i) {
        const std::vector<std::uint8_t>* mask =
            batch.dropout_masks.empty() ? nullptr : &batch.dropout_masks[i];
        auto fw = recsys::forward(params, batch.user_idx[i],
                                  std::span<const float>(batch.item_vecs[i],
                                                         static_cast<std::size_t>(batch.d_item)),
                                  mask, batch.dropout_p);
        probs.push_back(fw.prob);
        labels.push_back(batch.labels[i]);
    }
    return recsys::bce_loss_mean(probs, labels);
}

void criterion_gradient_fd() {
    auto start = std::chrono::steady_clock::now();
    SplitMix64 rng(202);
    int tested = 0;
    double worst = 0.0;
    while (tested < 100) {
        recsys::ModelShape shape;
        shape.n_users = 1 + static_cast<int>(rng.next_below(3));
        shape.d_item = 1 + static_cast<int>(rng.next_below(8));
        shape.hidden = 1 + static_cast<int>(rng.next_below(8));
        shape.out = 1 + static_cast<int>(rng.next_below(8));
        auto params = recsys::init_params(shape, rng.next());
        for (auto& v : params.user_table.a) v *= 30.0;

        int n = 1 + static_cast<int>(rng.next_below(4));
        std::vector<std::vector<float>> storage;
        recsys::Batch batch;
        batch.d_item = shape.d_item;
        batch.dropout_p = rng.next_below(2) == 0 ? 0.0 : 0.3;
        for (int i = 0; i < n; ++i) {
            std::vector<float> vec(static_cast<std::size_t>(shape.d_item));
            for (auto& v : vec) v = static_cast<float>(rng.next_double() * 2.0 - 1.0);
            storage.push_back(std::move(vec));
            batch.user_idx.push_back(static_cast<int>(rng.next_below(shape.n_users)));
            batch.labels.push_back(rng.next_below(2) == 1 ? 1 : 0);
        }
        for (auto& vec : storage) batch.item_vecs.push_back(vec.data());
        if (batch.dropout_p > 0.0) {
            for (int i = 0; i < n; ++i) {
                std::vector<std::uint8_t> mask(static_cast<std::size_t>(shape.d_item));
                for (auto& bit : mask) bit = rng.next_double() >= batch.dropout_p ? 1 : 0;
                batch.dropout_masks.push_back(std::move(mask));
            }
        }

        // Finite differences are only meaningful away from the relu kinks and
        // the probability clamp; resample configurations that straddle them.
        bool fragile = false;
        for (int i = 0; i < n && !fragile; ++i) {
            const std::vector<std::uint8_t>* mask =
                batch.dropout_masks.empty() ? nullptr : &batch.dropout_masks[i];
            const double scale = mask ? 1.0 / (1.0 - batch.dropout_p) : 1.0;
            std::vector<double> x(static_cast<std::size_t>(shape.d_item));
            for (int j = 0; j < shape.d_item; ++j) {
                double v = batch.item_vecs[i][j];
                if (mask) v = (*mask)[static_cast<std::size_t>(j)] ? v * scale : 0.0;
                x[static_cast<std::size_t>(j)] = v;
            }
            for (int kk = 0; kk < shape.hidden; ++kk) {
                double h_pre = params.item_b1[static_cast<std::size_t>(kk)];
                for (int j = 0; j < shape.d_item; ++j) {
                    h_pre += x[static_cast<std::size_t>(j)] * params.item_w1.at(j, kk);
                }
                if (std::abs(h_pre) < 1e-3) fragile = true;
            }
            auto fw = recsys::forward(params, batch.user_idx[i],
                                      std::span<const float>(batch.item_vecs[i],
                                                             static_cast<std::size_t>(shape.d_item)),
                                      mask, batch.dropout_p);
            if (fw.prob < 1e-4 || fw.prob > 1.0 - 1e-4) fragile = true;
        }
        if (fragile) continue;
        ++tested;

        auto bw = recsys::backward(params, batch);
        std::vector<double> analytic;
        analytic.insert(analytic.end(), bw.grads.user_table.a.begin(), bw.grads.user_table.a.end());
        analytic.insert(analytic.end(), bw.grads.item_w1.a.begin(), bw.grads.item_w1.a.end());
        analytic.insert(analytic.end(), bw.grads.item_b1.begin(), bw.grads.item_b1.end());
        analytic.insert(analytic.end(), bw.grads.item_w2.a.begin(), bw.grads.item_w2.a.end());
        analytic.insert(analytic.end(), bw.grads.item_b2.begin(), bw.grads.item_b2.end());

        std::vector<double*> refs;
        for (auto& v : params.user_table.a) refs.push_back(&v);
        for (auto& v : params.item_w1.a) refs.push_back(&v);
        for (auto& v : params.item_b1) refs.push_back(&v);
        for (auto& v : params.item_w2.a) refs.push_back(&v);
        for (auto& v : params.item_b2) refs.push_back(&v);

        const double step = 1e-5;
        for (std::size_t i = 0; i < refs.size(); ++i) {
            double saved = *refs[i];
            *refs[i] = saved + step;
            double up = batch_mean_loss(params, batch);
            *refs[i] = saved - step;
            double down = batch_mean_loss(params, batch);
            *refs[i] = saved;
            double numeric = (up - down) / (2.0 * step);
            double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-6});
            worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
        }
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    expect(worst < 1e-4, "max relative FD error " + std::to_string(worst));
    expect(secs < 60.0, "gradient check took " + std::to_string(secs) + "s (limit 60s)");
}

// ---------------------------------------------------------------- criterion 3

void criterion_adamw_oracle() {
    recsys::Hyperparams hp;
    hp.learning_rate = 0.001;
    hp.weight_decay = 0.0005;

    // Scalar trajectory with a fixed gradient.
    {
        recsys::ModelShape shape{1, 1, 1, 1};
        recsys::TwoTowerParams p;
        p.shape = shape;
        p.user_table = recsys::Matrix(1, 1);
        p.user_table.at(0, 0) = 0.7;
        p.item_w1 = recsys::Matrix(1, 1);
        p.item_b1 = {0.0};
        p.item_w2 = recsys::Matrix(1, 1);
        p.item_b2 = {0.0};
        auto state = recsys::OptimizerState::zeros_like(p);

        xrec::test::AdamWOracle oracle(1);
        std::vector<double> ref = {0.7};
        recsys::Gradients g;
        g.user_table = recsys::Matrix(1, 1);
        g.user_table.at(0, 0) = 1.0;
        g.item_w1 = recsys::Matrix(1, 1);
        g.item_b1 = {0.0};
        g.item_w2 = recsys::Matrix(1, 1);
        g.item_b2 = {0.0};
        for (int step = 0; step < 10; ++step) {
            recsys::adamw_step(p, g, state, hp);
            oracle.step(ref, {1.0}, true);
            expect(std::abs(p.user_table.at(0, 0) - ref[0]) < 1e-12,
                   "scalar trajectory diverged at step " + std::to_string(step + 1));
        }
    }

    // 4x4 matrix trajectory with varying gradients.
    {
        recsys::ModelShape shape{1, 4, 4, 4};
        auto p = recsys::init_params(shape, 42);
        auto state = recsys::OptimizerState::zeros_like(p);
        xrec::test::AdamWOracle oracle(16);
        std::vector<double> ref = p.item_w1.a;
        SplitMix64 rng(303);
        for (int step = 0; step < 10; ++step) {
            recsys::Gradients g;
            g.user_table = recsys::Matrix(1, 4);
            g.item_w1 = recsys::Matrix(4, 4);
            for (auto& v : g.item_w1.a) v = rng.next_double() * 2.0 - 1.0;
            g.item_b1.assign(4, 0.0);
            g.item_w2 = recsys::Matrix(4, 4);
            g.item_b2.assign(4, 0.0);
            recsys::adamw_step(p, g, state, hp);
            oracle.step(ref, g.item_w1.a, true);
            for (std::size_t i = 0; i < ref.size(); ++i) {
                expect(std::abs(p.item_w1.a[i] - ref[i]) < 1e-12,
                       "matrix trajectory diverged at step " + std::to_string(step + 1));
            }
        }
    }
}

// ---------------------------------------------------------------- criterion 4

void criterion_loss_points() {
    expect(std::abs(recsys::bce_loss_sum({0.5}, {1}) - std::log(2.0)) < 1e-9,
           "BCE(0.5, 1) != ln 2");
    expect(std::abs(recsys::bce_loss_sum({0.5}, {0}) - std::log(2.0)) < 1e-9,
           "BCE(0.5, 0) != ln 2");

    // A batch whose probabilities saturate the clamp at their labels has
    // exactly zero gradient: user 0 scores +60 on its positive, user 1 scores
    // -60 on its negative.
    recsys::ModelShape shape{2, 1, 1, 1};
    recsys::TwoTowerParams p;
    p.shape = shape;
    p.user_table = recsys::Matrix(2, 1);
    p.user_table.at(0, 0) = 60.0;
    p.user_table.at(1, 0) = -60.0;
    p.item_w1 = recsys::Matrix(1, 1);
    p.item_w1.at(0, 0) = 1.0;
    p.item_b1 = {0.0};
    p.item_w2 = recsys::Matrix(1, 1);
    p.item_w2.at(0, 0) = 1.0;
    p.item_b2 = {0.0};

    std::vector<float> vec = {1.0f};
    recsys::Batch batch;
    batch.d_item = 1;
    batch.user_idx = {0, 1};
    batch.item_vecs = {vec.data(), vec.data()};
    batch.labels = {1, 0};

    auto bw = recsys::backward(p, batch);
    double norm = 0.0;
    for (double v : bw.grads.user_table.a) norm += v * v;
    for (double v : bw.grads.item_w1.a) norm += v * v;
    for (double v : bw.grads.item_b1) norm += v * v;
    for (double v : bw.grads.item_w2.a) norm += v * v;
    for (double v : bw.grads.item_b2) norm += v * v;
    expect(std::sqrt(norm) < 1e-9, "zero-loss batch gradient norm " + std::to_string(norm));
}

// ---------------------------------------------------------------- criterion 5

void criterion_kcore() {
    SplitMix64 rng(404);
    for (int trial = 0; trial < 50; ++trial) {
        std::set<std::pair<std::string, std::string>> edge_pairs;
        int n_edges = 30 + static_cast<int>(rng.next_below(171));  // <= 200
        int n_users = 5 + static_cast<int>(rng.next_below(20));
        int n_items = 5 + static_cast<int>(rng.next_below(20));
        while (static_cast<int>(edge_pairs.size()) < n_edges) {
            edge_pairs.emplace(
                "u" + std::to_string(rng.next_below(static_cast<std::uint64_t>(n_users))),
                "i" + std::to_string(rng.next_below(static_cast<std::uint64_t>(n_items))));
            if (edge_pairs.size() >=
                static_cast<std::size_t>(n_users) * static_cast<std::size_t>(n_items)) {
                break;
            }
        }

        corpus::Dataset ds;
        std::set<std::string> item_ids;
        for (const auto& [u, i] : edge_pairs) {
            ds.interactions.push_back(corpus::Interaction{u, i, 1, corpus::Origin::observed});
            item_ids.insert(i);
        }
        for (const auto& i : item_ids) {
            corpus::Item item;
            item.item_id = i;
            ds.items.push_back(item);
        }

        auto expected = xrec::test::kcore_oracle(ds.interactions, 5);
        std::set<std::pair<std::string, std::string>> expected_set;
        for (const auto& e : expected) expected_set.emplace(e.user_id, e.item_id);

        if (expected.empty()) {
            try {
                corpus::k_core_filter(ds, 5);
                throw Failure{"expected the empty-after-filtering error"};
            } catch (const ValidationError&) {
            }
            continue;
        }
        auto out = corpus::k_core_filter(ds, 5);
        std::set<std::pair<std::string, std::string>> got;
        for (const auto& e : out.interactions) got.emplace(e.user_id, e.item_id);
        expect(got == expected_set, "k-core output differs from the oracle");

        auto again = corpus::k_core_filter(out, 5);
        std::set<std::pair<std::string, std::string>> fixpoint;
        for (const auto& e : again.interactions) fixpoint.emplace(e.user_id, e.item_id);
        expect(fixpoint == got, "k-core output is not a fixpoint");
    }
}

// ---------------------------------------------------------------- criterion 6

void criterion_prompt_goldens() {
    using namespace prompting;
    corpus::Item item;
    item.item_id = "golden-item";
    item.title = "Golden Title";
    item.description = "A golden description.";
    item.image_ref = "https://images.invalid/golden.jpg";
    Intermediates inter{"R-TEXT", "R-IMAGE"};

    auto subst = [](std::string text, const std::string& ph, const std::string& value) {
        std::size_t pos;
        while ((pos = text.find(ph)) != std::string::npos) text.replace(pos, ph.size(), value);
        return text;
    };

    for (Strategy s : kAllStrategies) {
        std::string tag(strategy_tag(s));
        std::string golden = xrec::test::slurp(fs::path(XREC_PROMPTS_DIR) / (tag + ".txt"));
        expect(!golden.empty(), "missing golden file for " + tag);
        expect(std::string(template_text(s)) == golden, "template drifted for " + tag);

        std::string expected = golden;
        expected = subst(expected, "{item description}", item.description);
        expected = subst(expected, "{item}", item.title);
        expected = subst(expected, "{category}", item.title);
        expected = subst(expected, "{scenario-specific factors}",
                         std::string(default_kar_factors()));
        expected = subst(expected, "{R_text}", inter.r_text);
        expected = subst(expected, "{R_image}", inter.r_image);
        auto rendered = render(s, item, inter);
        expect(rendered.text == expected, "render differs from golden for " + tag);
    }

    expect(render(Strategy::rec_gpt4v, item).text == "What's in this image?",
           "rec_gpt4v verbatim text drifted");
    expect(render(Strategy::visual_only, item).text == "Describe the image.",
           "visual_only verbatim text drifted");
    const std::string marker =
        "Evaluate whether the information presented in the item description and the image "
        "description are supportive of each other";
    expect(render(Strategy::xr_separate_fuse, item, inter).text.find(marker) != std::string::npos,
           "cross-reflection marker sentence missing");
}

// ---------------------------------------------------------------- criterion 7

void criterion_split_protocol() {
    SplitMix64 rng(505);
    for (int trial = 0; trial < 20; ++trial) {
        corpus::SyntheticSpec spec;
        spec.n_users = 10 + static_cast<int>(rng.next_below(30));
        spec.n_items = 40 + static_cast<int>(rng.next_below(160));
        spec.positives_per_user = 5 + static_cast<int>(rng.next_below(20));
        spec.embed_dim = 8;
        spec.seed = rng.next();
        auto ds = corpus::make_synthetic_dataset(spec);

        for (auto ratios :
             {corpus::SplitRatios{0.8, 0.1, 0.1}, corpus::SplitRatios{0.6, 0.2, 0.2}}) {
            auto splits = corpus::split_per_user(ds, ratios, rng.next());
            std::map<std::string, int> train_n, val_n, test_n;
            for (const auto& e : splits.train) ++train_n[e.user_id];
            for (const auto& e : splits.val) ++val_n[e.user_id];
            for (const auto& e : splits.test) ++test_n[e.user_id];

            for (const auto& [user, tn] : train_n) {
                int n = tn + val_n[user] + test_n[user];
                auto clamp = [n](double r) {
                    return std::max<long long>(1, std::llround(r * n));
                };
                expect(val_n[user] == clamp(ratios.val), "val count violates the rounding rule");
                expect(test_n[user] == clamp(ratios.test),
                       "test count violates the rounding rule");
                expect(val_n[user] >= 1 && test_n[user] >= 1, "val/test minimum violated");
                expect(tn == n - val_n[user] - test_n[user], "train is not the remainder");
            }

            splits.eval_candidates = corpus::build_eval_candidates(splits, 1000, rng.next());
            std::map<std::string, std::set<std::string>> interacted;
            for (const auto* part : {&splits.train, &splits.val, &splits.test}) {
                for (const auto& e : *part) interacted[e.user_id].insert(e.item_id);
            }
            std::map<std::string, int> positives;
            for (const auto* part : {&splits.val, &splits.test}) {
                for (const auto& e : *part) ++positives[e.user_id];
            }
            for (const auto& [user, cand] : splits.eval_candidates) {
                std::size_t eligible = splits.all_items.size() - interacted[user].size();
                expect(cand.size() == static_cast<std::size_t>(positives[user]) +
                                          std::min<std::size_t>(1000, eligible),
                       "candidate size violates |positives| + min(1000, eligible)");
            }

            auto negs = corpus::sample_train_negatives(splits, 1, rng.next());
            for (const auto& e : negs) {
                const auto& cand = splits.eval_candidates.at(e.user_id);
                expect(std::find(cand.begin(), cand.end(), e.item_id) == cand.end(),
                       "train negative overlaps the eval candidates");
                expect(!interacted[e.user_id].count(e.item_id),
                       "train negative overlaps an observed interaction");
            }
        }
    }
}

// ------------------------------------------------------- criteria 8 and 9

pipeline::PipelineConfig e2e_config(const fs::path& dir, const fs::path& out, double pop_weight) {
    nlohmann::json j{
        {"dataset",
         {{"kind", "synthetic"},
          {"n_users", 200},
          {"n_items", 300},
          {"positives_per_user", 20},
          {"popularity_weight", pop_weight},
          {"seed", 7}}},
        {"seeds", {0, 1, 2, 3, 4}},
        {"k_core", 5},
        {"eval_negatives", 100},
        {"strategies", {"visual_only"}},
        {"combos", {"text"}},
        {"chat_backend", {{"endpoint_url", "mock://deterministic"}, {"model_id", "mock-lmm"}}},
        {"embedder", {{"kind", "hash"}, {"dim", 16}}},
        {"grid", {{"learning_rates", {0.002}}, {"dropouts", {0.1}}, {"seed", 0}}},
        {"hyperparams",
         {{"batch_size", 4096},
          {"eval_every", 5},
          {"patience", 6},
          {"max_epochs", 100},
          {"hidden", 64},
          {"out_dim", 128},
          {"neg_ratio", 4},
          {"learning_rate", 0.002},
          {"dropout", 0.1}}},
        {"out", out.string()},
    };
    fs::path cfg_path = dir / ("config_" + out.filename().string() + ".json");
    xrec::test::write_file(cfg_path, j.dump(2));
    return pipeline::PipelineConfig::from_file(cfg_path);
}

int run_pipeline_to_eval(const pipeline::PipelineConfig& cfg) {
    pipeline::GlobalOptions opts;
    return pipeline::run_stages(cfg, opts,
                                {"ingest", "enrich", "embed", "repr", "grid", "train", "eval"});
}

double aggregate_recall(const fs::path& out, const std::string& combo) {
    auto j = nlohmann::json::parse(xrec::test::slurp(out / "eval" / combo / "aggregate.json"));
    return j.at("recall_mean").get<double>();
}

double popularity_recall(const fs::path& out, const std::vector<int>& seeds) {
    double sum = 0.0;
    for (int s : seeds) {
        auto j = nlohmann::json::parse(xrec::test::slurp(
            out / "eval" / "item_popularity" / ("seed_" + std::to_string(s) + ".json")));
        sum += j.at("mean").at("recall").get<double>();
    }
    return sum / static_cast<double>(seeds.size());
}

double random_scorer_recall(const fs::path& out, std::uint64_t salt) {
    auto splits = corpus::load_splits(out / "splits" / "seed_0");
    eval::Scorer random_scorer = [salt](const std::string& user,
                                        const std::vector<std::string>& items) {
        std::vector<double> scores;
        scores.reserve(items.size());
        for (const auto& item : items) {
            scores.push_back(
                static_cast<double>(fnv1a64(std::to_string(salt) + "|" + user + "|" + item)));
        }
        return scores;
    };
    return eval::evaluate_split(random_scorer, splits, eval::Part::test, 10).mean.recall;
}

std::string plain_run_summary;

void criterion_end_to_end(const fs::path& scratch) {
    auto start = std::chrono::steady_clock::now();
    auto cfg = e2e_config(scratch, scratch / "plain_a", 0.0);
    expect(run_pipeline_to_eval(cfg) == 0, "plain pipeline run failed");
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    double model = aggregate_recall(scratch / "plain_a", "text");
    double random = random_scorer_recall(scratch / "plain_a", 99);
    expect(model >= 0.50, "trained recall@10 " + std::to_string(model) + " < 0.50");
    expect(std::abs(random - 10.0 / 110.0) < 0.05,
           "random baseline " + std::to_string(random) + " far from 10/110");
    expect(secs < 300.0, "full run took " + std::to_string(secs) + "s (limit 300s)");

    // Popularity-skewed variant: random < popularity < model, strictly.
    auto skew_cfg = e2e_config(scratch, scratch / "skew", 0.15);
    expect(run_pipeline_to_eval(skew_cfg) == 0, "skewed pipeline run failed");
    double skew_model = aggregate_recall(scratch / "skew", "text");
    double skew_pop = popularity_recall(scratch / "skew", {0, 1, 2, 3, 4});
    double skew_random = random_scorer_recall(scratch / "skew", 123);
    expect(skew_random < skew_pop, "popularity " + std::to_string(skew_pop) +
                                       " does not beat random " + std::to_string(skew_random));
    expect(skew_pop < skew_model, "model " + std::to_string(skew_model) +
                                      " does not beat popularity " + std::to_string(skew_pop));

    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "model %.3f, random %.3f, skewed model/pop/random %.3f/%.3f/%.3f, %.1fs", model,
                  random, skew_model, skew_pop, skew_random, secs);
    plain_run_summary = buf;
}

void criterion_determinism(const fs::path& scratch) {
    auto cfg = e2e_config(scratch, scratch / "plain_b", 0.0);
    expect(run_pipeline_to_eval(cfg) == 0, "repeat pipeline run failed");

    auto a = xrec::test::slurp(scratch / "plain_a" / "eval" / "table.csv");
    auto b = xrec::test::slurp(scratch / "plain_b" / "eval" / "table.csv");
    expect(!a.empty(), "first run produced no eval table");
    expect(a == b, "eval tables differ between identical runs");

    for (int s : {0, 1, 2, 3, 4}) {
        auto ra = xrec::test::slurp(scratch / "plain_a" / "eval" / "text" /
                                    ("seed_" + std::to_string(s) + ".json"));
        auto rb = xrec::test::slurp(scratch / "plain_b" / "eval" / "text" /
                                    ("seed_" + std::to_string(s) + ".json"));
        expect(ra == rb, "per-seed eval reports differ at seed " + std::to_string(s));
    }
}

// --------------------------------------------------------------- criterion 10

void criterion_xreflect_composition() {
    embedding::HashEmbedder embedder(384);
    corpus::Item item;
    item.item_id = "xr-item";
    item.title = "XR";
    item.description = "base description";

    std::map<std::string, gateway::EnrichmentRecord> records;
    records["xr_separate_fuse"] = gateway::EnrichmentRecord{"xr-item", "xr_separate_fuse", "m",
                                                            "h1", "separate response", ""};
    records["xr_combined"] =
        gateway::EnrichmentRecord{"xr-item", "xr_combined", "m", "h2", "combined response", ""};

    auto rep = embedding::build_representation("x_reflect", item, records, nullptr, embedder);
    expect(rep.vector.dim() == 768, "x_reflect dim is " + std::to_string(rep.vector.dim()));

    auto sep = embedder.embed("separate response");
    auto comb = embedder.embed("combined response");
    for (int i = 0; i < 384; ++i) {
        expect(rep.vector.values[static_cast<std::size_t>(i)] ==
                   sep.values[static_cast<std::size_t>(i)],
               "first slice does not recover the separate response embedding");
        expect(rep.vector.values[static_cast<std::size_t>(384 + i)] ==
                   comb.values[static_cast<std::size_t>(i)],
               "second slice does not recover the combined response embedding");
    }
}

// --------------------------------------------------------------- criterion 11

void criterion_gateway_resilience(const fs::path& scratch) {
    // Two 429s then success: exactly three attempts.
    {
        xrec::test::FakeChatServer server([](int n) { return n <= 2 ? 429 : 200; });
        gateway::BackendConfig cfg;
        cfg.endpoint_url = server.url();
        cfg.model_id = "test-model";
        cfg.max_retries = 3;
        cfg.backoff_base_ms = 5;
        gateway::HttpChatBackend backend(cfg);

        corpus::Item item;
        item.item_id = "net-item";
        item.image_ref = "https://images.invalid/x.jpg";
        auto prompt = prompting::render(prompting::Strategy::visual_only, item);
        std::string text = backend.complete(prompt, item.item_id);
        expect(text == "fake reply", "unexpected fake-server payload");
        expect(server.requests() == 3,
               "expected exactly 3 attempts, saw " + std::to_string(server.requests()));
    }

    // Warm cache rerun: zero network calls; crash-resume equals uninterrupted.
    corpus::SyntheticSpec spec;
    spec.n_users = 5;
    spec.n_items = 25;
    spec.positives_per_user = 3;
    spec.embed_dim = 8;
    auto items = corpus::make_synthetic_dataset(spec).items;

    gateway::BackendConfig mock_cfg;
    mock_cfg.endpoint_url = "mock://deterministic";
    mock_cfg.model_id = "mock-lmm";

    auto keys = [](const std::vector<gateway::EnrichmentRecord>& records) {
        std::set<std::string> out;
        for (const auto& r : records) {
            out.insert(r.item_id + "|" + r.strategy_tag + "|" + r.prompt_hash + "|" +
                       r.response_text);
        }
        return out;
    };

    gateway::MockChatBackend warm_backend(mock_cfg);
    gateway::EnrichmentCache warm_cache(scratch / "warm_cache.jsonl");
    auto first = gateway::enrich_corpus(items, prompting::Strategy::visual_only, warm_backend,
                                        warm_cache, scratch / "warm_journal.jsonl");
    expect(first.records.size() == items.size(), "cold run incomplete");
    warm_backend.reset_counters();
    auto warm = gateway::enrich_corpus(items, prompting::Strategy::visual_only, warm_backend,
                                       warm_cache, scratch / "warm_journal.jsonl");
    expect(warm_backend.total_calls() == 0, "warm rerun issued network calls");
    expect(keys(warm.records) == keys(first.records), "warm rerun changed the record set");

    // Crash-resume.
    class CrashingBackend : public gateway::ChatBackend {
    public:
        CrashingBackend(gateway::MockChatBackend& inner, int budget)
            : gateway::ChatBackend(inner.config()), inner_(inner), budget_(budget) {}
        std::string complete(const prompting::RenderedPrompt& prompt,
                             const std::string& item_id) override {
            if (budget_-- <= 0) {
                throw gateway::GatewayError(gateway::ErrorKind::network, "injected crash");
            }
            return inner_.complete(prompt, item_id);
        }

    private:
        gateway::MockChatBackend& inner_;
        int budget_;
    };

    gateway::MockChatBackend crash_inner(mock_cfg);
    {
        CrashingBackend crashing(crash_inner, 9);
        gateway::EnrichmentCache cache(scratch / "crash_cache.jsonl");
        auto partial = gateway::enrich_corpus(items, prompting::Strategy::visual_only, crashing,
                                              cache, scratch / "crash_journal.jsonl");
        expect(partial.records.size() == 9, "crash run should complete 9 items");
    }
    gateway::EnrichmentCache cache(scratch / "crash_cache.jsonl");
    auto resumed = gateway::enrich_corpus(items, prompting::Strategy::visual_only, crash_inner,
                                          cache, scratch / "crash_journal.jsonl");
    expect(crash_inner.total_calls() == static_cast<int>(items.size()),
           "resume re-fetched already-done items");
    expect(keys(resumed.records) == keys(first.records),
           "crash-resume record set differs from the uninterrupted run");
}

// --------------------------------------------------------------- criterion 12

void criterion_analysis_oracle() {
    embedding::HashEmbedder embedder(64);
    std::vector<corpus::Item> items;
    std::map<std::string, std::map<std::string, gateway::EnrichmentRecord>> records;
    SplitMix64 rng(606);
    for (int i = 0; i < 500; ++i) {
        char id[16];
        std::snprintf(id, sizeof(id), "it%04d", i);
        corpus::Item item;
        item.item_id = id;
        item.title = id;
        item.description = "description " + std::to_string(rng.next());
        item.image_ref = "https://images.invalid/x.jpg";
        items.push_back(item);
        records[id]["visual_only"] = gateway::EnrichmentRecord{
            id, "visual_only", "m", "h", "image text " + std::to_string(rng.next()), ""};
        // Half the items respond with their own description.
        std::string resp =
            (i % 2 == 0) ? items.back().description : "response " + std::to_string(rng.next());
        records[id]["cot"] = gateway::EnrichmentRecord{id, "cot", "m", "h", resp, ""};
    }

    auto table = analysis::similarity_table(items, records, embedder, {"cot"});
    expect(table.rows.size() == 500, "similarity table dropped rows");
    for (const auto& row : table.rows) {
        const auto& item = *std::find_if(items.begin(), items.end(), [&](const corpus::Item& it) {
            return it.item_id == row.item_id;
        });
        auto desc = embedder.embed(item.description).values;
        auto image = embedder.embed(records[row.item_id]["visual_only"].response_text).values;
        auto resp = embedder.embed(records[row.item_id]["cot"].response_text).values;
        expect(std::abs(row.reference_sim - xrec::test::cosine_oracle(desc, image)) < 1e-9,
               "reference similarity differs from the oracle");
        expect(std::abs(row.strategy_sims[0].second - xrec::test::cosine_oracle(desc, resp)) < 1e-9,
               "strategy similarity differs from the oracle");
        if (records[row.item_id]["cot"].response_text == item.description) {
            expect(std::abs(row.strategy_sims[0].second - 1.0) < 1e-6,
                   "self-response similarity is not 1");
        }
    }
}

}  // namespace

int main() {
    xrec::test::TempDir scratch("xrec_acceptance");

    struct Criterion {
        int id;
        const char* name;
        std::function<void()> run;
    };
    std::vector<Criterion> criteria = {
        {1, "metric oracle equivalence (1000 instances, @1 and @10, <10s)",
         [] { criterion_metric_oracle(); }},
        {2, "gradient correctness (100 configs, central FD 1e-5, <60s)",
         [] { criterion_gradient_fd(); }},
        {3, "adamw trajectories match the reference to 1e-12", [] { criterion_adamw_oracle(); }},
        {4, "bce analytic points and zero-loss gradient", [] { criterion_loss_points(); }},
        {5, "k-core equals brute force on 50 random graphs (k=5)", [] { criterion_kcore(); }},
        {6, "prompt goldens byte-exact for all 11 strategies", [] { criterion_prompt_goldens(); }},
        {7, "split/protocol invariants on 20 random fixtures", [] { criterion_split_protocol(); }},
        {8, "end-to-end synthetic run (recall gate, baselines, <5min)",
         [&] { criterion_end_to_end(scratch.path()); }},
        {9, "byte-identical eval outputs on rerun", [&] { criterion_determinism(scratch.path()); }},
        {10, "x_reflect composition: 768 dims, bit-exact slices",
         [] { criterion_xreflect_composition(); }},
        {11, "gateway resilience: retries, warm cache, crash-resume",
         [&] { criterion_gateway_resilience(scratch.path()); }},
        {12, "analysis similarity oracle on 500 items", [] { criterion_analysis_oracle(); }},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        auto start = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = true;
        try {
            c.run();
        } catch (const Failure& f) {
            ok = false;
            detail = f.detail;
        } catch (const std::exception& e) {
            ok = false;
            detail = std::string("exception: ") + e.what();
        }
        double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (ok) {
            std::printf("[%2d] PASS  %s (%.2fs)", c.id, c.name, secs);
            if (c.id == 8 && !plain_run_summary.empty()) {
                std::printf("  [%s]", plain_run_summary.c_str());
            }
            std::printf("\n");
        } else {
            ++failures;
            std::printf("[%2d] FAIL  %s (%.2fs): %s\n", c.id, c.name, secs, detail.c_str());
        }
        std::fflush(stdout);
    }

    if (failures > 0) {
        std::printf("%d of %zu criteria failed\n", failures, criteria.size());
        return 1;
    }
    std::printf("all %zu criteria passed\n", criteria.size());
    return 0;
}
