#include "xrec/recsys.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>

#include "xrec/common.hpp"
#include "xrec/errors.hpp"
#include "xrec/eval.hpp"

#include <json.hpp>

using nlohmann::json;

namespace xrec::recsys {

namespace {

constexpr double kProbEps = 1e-7;

void fill_normal(Matrix& m, double stddev, SplitMix64& rng) {
    for (auto& v : m.a) v = rng.next_normal() * stddev;
}

double clamp_prob(double p) { return std::min(1.0 - kProbEps, std::max(kProbEps, p)); }

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Item tower shared by forward, backward and predict_scores so batched and
// per-example scoring agree bit for bit.
struct TowerScratch {
    std::vector<double> x;      // dropped input
    std::vector<double> h_pre;  // hidden pre-activation
    std::vector<double> h;      // hidden post-relu
    std::vector<double> emb;    // output embedding
};

void item_tower(const TwoTowerParams& p,
                std::span<const float> item_vec,
                const std::vector<std::uint8_t>* mask,
                double dropout_p,
                TowerScratch& s) {
    const int d = p.shape.d_item;
    const int h = p.shape.hidden;
    const int o = p.shape.out;
    s.x.assign(static_cast<std::size_t>(d), 0.0);
    s.h_pre.assign(static_cast<std::size_t>(h), 0.0);
    s.h.assign(static_cast<std::size_t>(h), 0.0);
    s.emb.assign(static_cast<std::size_t>(o), 0.0);

    const double scale = mask != nullptr ? 1.0 / (1.0 - dropout_p) : 1.0;
    for (int j = 0; j < d; ++j) {
        double v = static_cast<double>(item_vec[static_cast<std::size_t>(j)]);
        if (mask != nullptr) {
            v = (*mask)[static_cast<std::size_t>(j)] ? v * scale : 0.0;
        }
        s.x[static_cast<std::size_t>(j)] = v;
    }
    for (int k = 0; k < h; ++k) s.h_pre[static_cast<std::size_t>(k)] = p.item_b1[static_cast<std::size_t>(k)];
    for (int j = 0; j < d; ++j) {
        double xj = s.x[static_cast<std::size_t>(j)];
        if (xj == 0.0) continue;
        const double* w_row = p.item_w1.row(j);
        for (int k = 0; k < h; ++k) s.h_pre[static_cast<std::size_t>(k)] += xj * w_row[k];
    }
    for (int k = 0; k < h; ++k) {
        s.h[static_cast<std::size_t>(k)] = s.h_pre[static_cast<std::size_t>(k)] > 0.0
                                               ? s.h_pre[static_cast<std::size_t>(k)]
                                               : 0.0;
    }
    for (int c = 0; c < o; ++c) s.emb[static_cast<std::size_t>(c)] = p.item_b2[static_cast<std::size_t>(c)];
    for (int k = 0; k < h; ++k) {
        double hk = s.h[static_cast<std::size_t>(k)];
        if (hk == 0.0) continue;
        const double* w_row = p.item_w2.row(k);
        for (int c = 0; c < o; ++c) s.emb[static_cast<std::size_t>(c)] += hk * w_row[c];
    }
}

}  // namespace

TwoTowerParams init_params(const ModelShape& shape, std::uint64_t seed) {
    if (shape.n_users < 1 || shape.d_item < 1 || shape.hidden < 1 || shape.out < 1) {
        throw ValidationError("model shape dimensions must be >= 1");
    }
    TwoTowerParams p;
    p.shape = shape;
    p.user_table = Matrix(shape.n_users, shape.out);
    p.item_w1 = Matrix(shape.d_item, shape.hidden);
    p.item_b1.assign(static_cast<std::size_t>(shape.hidden), 0.0);
    p.item_w2 = Matrix(shape.hidden, shape.out);
    p.item_b2.assign(static_cast<std::size_t>(shape.out), 0.0);

    SplitMix64 rng_user(mix_seed(seed, "init-user-table"));
    fill_normal(p.user_table, 0.01, rng_user);
    SplitMix64 rng_w1(mix_seed(seed, "init-item-w1"));
    fill_normal(p.item_w1, 1.0 / std::sqrt(static_cast<double>(shape.d_item)), rng_w1);
    SplitMix64 rng_w2(mix_seed(seed, "init-item-w2"));
    fill_normal(p.item_w2, 1.0 / std::sqrt(static_cast<double>(shape.hidden)), rng_w2);
    return p;
}

ForwardResult forward(const TwoTowerParams& params,
                      int user_index,
                      std::span<const float> item_vec,
                      const std::vector<std::uint8_t>* dropout_mask,
                      double dropout_p) {
    if (user_index < 0 || user_index >= params.shape.n_users) {
        throw ValidationError("unknown user index " + std::to_string(user_index));
    }
    if (static_cast<int>(item_vec.size()) != params.shape.d_item) {
        throw ValidationError("item vector dim mismatch");
    }
    TowerScratch s;
    item_tower(params, item_vec, dropout_mask, dropout_p, s);
    const double* u = params.user_table.row(user_index);
    double logit = 0.0;
    for (int c = 0; c < params.shape.out; ++c) logit += u[c] * s.emb[static_cast<std::size_t>(c)];
    return ForwardResult{logit, sigmoid(logit)};
}

double bce_loss_sum(const std::vector<double>& probs, const std::vector<int>& labels) {
    if (probs.size() != labels.size()) {
        throw ValidationError("probs and labels must have equal length");
    }
    double loss = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        double p = clamp_prob(probs[i]);
        loss -= labels[i] == 1 ? std::log(p) : std::log(1.0 - p);
    }
    return loss;
}

double bce_loss_mean(const std::vector<double>& probs, const std::vector<int>& labels) {
    if (probs.empty()) return 0.0;
    return bce_loss_sum(probs, labels) / static_cast<double>(probs.size());
}

OptimizerState OptimizerState::zeros_like(const TwoTowerParams& p) {
    OptimizerState s;
    s.m_user = Matrix(p.user_table.rows, p.user_table.cols);
    s.v_user = Matrix(p.user_table.rows, p.user_table.cols);
    s.m_w1 = Matrix(p.item_w1.rows, p.item_w1.cols);
    s.v_w1 = Matrix(p.item_w1.rows, p.item_w1.cols);
    s.m_b1.assign(p.item_b1.size(), 0.0);
    s.v_b1.assign(p.item_b1.size(), 0.0);
    s.m_w2 = Matrix(p.item_w2.rows, p.item_w2.cols);
    s.v_w2 = Matrix(p.item_w2.rows, p.item_w2.cols);
    s.m_b2.assign(p.item_b2.size(), 0.0);
    s.v_b2.assign(p.item_b2.size(), 0.0);
    return s;
}

BackwardResult backward(const TwoTowerParams& params, const Batch& batch) {
    const int d = params.shape.d_item;
    const int h = params.shape.hidden;
    const int o = params.shape.out;
    const std::size_t n = batch.user_idx.size();
    if (batch.item_vecs.size() != n || batch.labels.size() != n) {
        throw ValidationError("batch fields must have equal length");
    }
    const bool use_dropout = !batch.dropout_masks.empty();
    if (use_dropout && batch.dropout_masks.size() != n) {
        throw ValidationError("dropout masks must cover the batch");
    }

    BackwardResult out;
    out.grads.user_table = Matrix(params.user_table.rows, params.user_table.cols);
    out.grads.item_w1 = Matrix(params.item_w1.rows, params.item_w1.cols);
    out.grads.item_b1.assign(params.item_b1.size(), 0.0);
    out.grads.item_w2 = Matrix(params.item_w2.rows, params.item_w2.cols);
    out.grads.item_b2.assign(params.item_b2.size(), 0.0);

    const double scale = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
    TowerScratch s;
    std::vector<double> g_emb(static_cast<std::size_t>(o));
    std::vector<double> g_hpre(static_cast<std::size_t>(h));

    for (std::size_t i = 0; i < n; ++i) {
        int u = batch.user_idx[i];
        if (u < 0 || u >= params.shape.n_users) {
            throw ValidationError("unknown user index in batch");
        }
        std::span<const float> vec(batch.item_vecs[i], static_cast<std::size_t>(batch.d_item));
        const std::vector<std::uint8_t>* mask = use_dropout ? &batch.dropout_masks[i] : nullptr;
        item_tower(params, vec, mask, batch.dropout_p, s);

        const double* u_row = params.user_table.row(u);
        double logit = 0.0;
        for (int c = 0; c < o; ++c) logit += u_row[c] * s.emb[static_cast<std::size_t>(c)];
        double prob = sigmoid(logit);
        double y = static_cast<double>(batch.labels[i]);

        double p_clamped = clamp_prob(prob);
        out.loss_sum -= batch.labels[i] == 1 ? std::log(p_clamped) : std::log(1.0 - p_clamped);

        // The clamp saturates the loss outside [eps, 1-eps], so its exact
        // gradient there is zero.
        double g_logit = 0.0;
        if (prob > kProbEps && prob < 1.0 - kProbEps) {
            g_logit = (prob - y) * scale;
        }
        if (g_logit == 0.0) continue;

        double* gu_row = out.grads.user_table.row(u);
        for (int c = 0; c < o; ++c) {
            gu_row[c] += g_logit * s.emb[static_cast<std::size_t>(c)];
            g_emb[static_cast<std::size_t>(c)] = g_logit * u_row[c];
        }
        for (int c = 0; c < o; ++c) out.grads.item_b2[static_cast<std::size_t>(c)] += g_emb[static_cast<std::size_t>(c)];
        for (int k = 0; k < h; ++k) {
            double hk = s.h[static_cast<std::size_t>(k)];
            double acc = 0.0;
            const double* w2_row = params.item_w2.row(k);
            double* gw2_row = out.grads.item_w2.row(k);
            for (int c = 0; c < o; ++c) {
                if (hk != 0.0) gw2_row[c] += hk * g_emb[static_cast<std::size_t>(c)];
                acc += w2_row[c] * g_emb[static_cast<std::size_t>(c)];
            }
            g_hpre[static_cast<std::size_t>(k)] =
                s.h_pre[static_cast<std::size_t>(k)] > 0.0 ? acc : 0.0;
        }
        for (int k = 0; k < h; ++k) out.grads.item_b1[static_cast<std::size_t>(k)] += g_hpre[static_cast<std::size_t>(k)];
        for (int j = 0; j < d; ++j) {
            double xj = s.x[static_cast<std::size_t>(j)];
            if (xj == 0.0) continue;
            double* gw1_row = out.grads.item_w1.row(j);
            for (int k = 0; k < h; ++k) gw1_row[k] += xj * g_hpre[static_cast<std::size_t>(k)];
        }
    }
    return out;
}

namespace {

void adamw_tensor(std::vector<double>& theta,
                  const std::vector<double>& grad,
                  std::vector<double>& m,
                  std::vector<double>& v,
                  const Hyperparams& hp,
                  double bias1,
                  double bias2,
                  bool decay) {
    for (std::size_t i = 0; i < theta.size(); ++i) {
        m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * grad[i];
        v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * grad[i] * grad[i];
        double m_hat = m[i] / bias1;
        double v_hat = v[i] / bias2;
        double update = m_hat / (std::sqrt(v_hat) + hp.epsilon);
        if (decay) update += hp.weight_decay * theta[i];
        theta[i] -= hp.learning_rate * update;
    }
}

}  // namespace

void adamw_step(TwoTowerParams& params,
                const Gradients& grads,
                OptimizerState& state,
                const Hyperparams& hp) {
    state.t += 1;
    double bias1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.t));
    double bias2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));
    adamw_tensor(params.user_table.a, grads.user_table.a, state.m_user.a, state.v_user.a, hp,
                 bias1, bias2, /*decay=*/true);
    adamw_tensor(params.item_w1.a, grads.item_w1.a, state.m_w1.a, state.v_w1.a, hp, bias1, bias2,
                 /*decay=*/true);
    adamw_tensor(params.item_b1, grads.item_b1, state.m_b1, state.v_b1, hp, bias1, bias2,
                 /*decay=*/false);
    adamw_tensor(params.item_w2.a, grads.item_w2.a, state.m_w2.a, state.v_w2.a, hp, bias1, bias2,
                 /*decay=*/true);
    adamw_tensor(params.item_b2, grads.item_b2, state.m_b2, state.v_b2, hp, bias1, bias2,
                 /*decay=*/false);
}

std::vector<double> predict_scores(const TwoTowerParams& params,
                                   int user_index,
                                   const std::vector<const float*>& item_vecs,
                                   int d_item) {
    if (user_index < 0 || user_index >= params.shape.n_users) {
        throw ValidationError("unknown user index " + std::to_string(user_index));
    }
    if (d_item != params.shape.d_item) {
        throw ValidationError("item vector dim mismatch");
    }
    std::vector<double> logits;
    logits.reserve(item_vecs.size());
    TowerScratch s;
    const double* u = params.user_table.row(user_index);
    for (const float* vec : item_vecs) {
        item_tower(params, std::span<const float>(vec, static_cast<std::size_t>(d_item)), nullptr,
                   0.0, s);
        double logit = 0.0;
        for (int c = 0; c < params.shape.out; ++c) logit += u[c] * s.emb[static_cast<std::size_t>(c)];
        logits.push_back(logit);
    }
    return logits;
}

UserIndex UserIndex::from_splits(const corpus::DatasetSplits& splits) {
    std::set<std::string> ids;
    for (const auto* part : {&splits.train, &splits.val, &splits.test}) {
        for (const auto& e : *part) ids.insert(e.user_id);
    }
    UserIndex idx;
    idx.ids.assign(ids.begin(), ids.end());
    for (std::size_t i = 0; i < idx.ids.size(); ++i) {
        idx.to_index.emplace(idx.ids[i], static_cast<int>(i));
    }
    return idx;
}

int UserIndex::require(const std::string& user_id) const {
    auto it = to_index.find(user_id);
    if (it == to_index.end()) {
        throw ValidationError("unknown user " + user_id);
    }
    return it->second;
}

namespace {

struct Example {
    int user_idx;
    const float* item_vec;
    int label;
};

void check_coverage(const corpus::DatasetSplits& splits,
                    const embedding::RepresentationSet& repr) {
    auto check = [&repr](const std::string& item_id) {
        if (!repr.contains(item_id)) {
            throw ValidationError("representations missing item " + item_id);
        }
    };
    for (const auto* part : {&splits.train, &splits.val, &splits.test}) {
        for (const auto& e : *part) check(e.item_id);
    }
    for (const auto& [user, cands] : splits.eval_candidates) {
        for (const auto& c : cands) check(c);
    }
}

}  // namespace

TrainResult train(const corpus::DatasetSplits& splits,
                  const embedding::RepresentationSet& repr,
                  const Hyperparams& hp) {
    if (splits.eval_candidates.empty()) {
        throw ValidationError("splits must carry eval candidates before training");
    }
    check_coverage(splits, repr);

    UserIndex users = UserIndex::from_splits(splits);
    ModelShape shape{static_cast<int>(users.ids.size()), repr.dim, hp.hidden, hp.out_dim};
    TwoTowerParams params = init_params(shape, hp.seed);
    OptimizerState state = OptimizerState::zeros_like(params);

    TrainReport report;
    report.hp = hp;

    TwoTowerParams best_params = params;
    int best_epoch = 0;
    double best_recall = -1.0;
    int strikes = 0;
    bool stopped = false;
    int last_epoch = 0;

    auto val_recall = [&](const TwoTowerParams& p) {
        eval::Scorer scorer = [&](const std::string& user,
                                  const std::vector<std::string>& items) {
            std::vector<const float*> vecs;
            vecs.reserve(items.size());
            for (const auto& item : items) vecs.push_back(repr.row_of(item));
            return predict_scores(p, users.require(user), vecs, repr.dim);
        };
        return eval::evaluate_split(scorer, splits, eval::Part::val, hp.k).mean.recall;
    };

    for (int epoch = 1; epoch <= hp.max_epochs; ++epoch) {
        last_epoch = epoch;
        auto negatives = corpus::sample_train_negatives(
            splits, hp.neg_ratio, mix_seed(hp.seed, "train-negatives", static_cast<std::uint64_t>(epoch)));

        std::vector<Example> examples;
        examples.reserve(splits.train.size() + negatives.size());
        for (const auto& e : splits.train) {
            examples.push_back({users.require(e.user_id), repr.row_of(e.item_id), 1});
        }
        for (const auto& e : negatives) {
            examples.push_back({users.require(e.user_id), repr.row_of(e.item_id), 0});
        }
        SplitMix64 shuffle_rng(mix_seed(hp.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
        deterministic_shuffle(examples, shuffle_rng);

        SplitMix64 mask_rng(mix_seed(hp.seed, "dropout", static_cast<std::uint64_t>(epoch)));
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < examples.size(); start += static_cast<std::size_t>(hp.batch_size)) {
            std::size_t end = std::min(examples.size(), start + static_cast<std::size_t>(hp.batch_size));
            Batch batch;
            batch.d_item = repr.dim;
            batch.dropout_p = hp.dropout;
            for (std::size_t i = start; i < end; ++i) {
                batch.user_idx.push_back(examples[i].user_idx);
                batch.item_vecs.push_back(examples[i].item_vec);
                batch.labels.push_back(examples[i].label);
            }
            if (hp.dropout > 0.0) {
                batch.dropout_masks.resize(batch.user_idx.size());
                for (auto& mask : batch.dropout_masks) {
                    mask.resize(static_cast<std::size_t>(repr.dim));
                    for (auto& bit : mask) {
                        bit = mask_rng.next_double() >= hp.dropout ? 1 : 0;
                    }
                }
            }
            BackwardResult bw = backward(params, batch);
            adamw_step(params, bw.grads, state, hp);
            epoch_loss += bw.loss_sum;
            seen += batch.user_idx.size();
        }
        report.train_loss_per_epoch.push_back(seen > 0 ? epoch_loss / static_cast<double>(seen)
                                                       : 0.0);

        if (epoch % hp.eval_every == 0) {
            double recall = val_recall(params);
            report.val_recall_curve.push_back(recall);
            if (recall > best_recall) {
                best_recall = recall;
                best_params = params;
                best_epoch = epoch;
                strikes = 0;
            } else {
                ++strikes;
            }
            if (strikes >= hp.patience) {
                stopped = true;
                break;
            }
        }
    }

    if (best_epoch == 0) {
        best_params = params;
        best_epoch = last_epoch;
        best_recall = report.val_recall_curve.empty() ? 0.0 : report.val_recall_curve.back();
    }

    report.best_epoch = best_epoch;
    report.best_val_recall = std::max(0.0, best_recall);
    report.stopped_early = stopped;

    TrainResult result;
    result.model.params = std::move(best_params);
    result.model.users = std::move(users);
    result.model.hp = hp;
    result.model.epoch = best_epoch;
    result.report = std::move(report);
    return result;
}

GridResult grid_search(const corpus::DatasetSplits& splits,
                       const embedding::RepresentationSet& repr,
                       const std::vector<double>& learning_rates,
                       const std::vector<double>& dropouts,
                       const Hyperparams& base) {
    if (learning_rates.empty() || dropouts.empty()) {
        throw ValidationError("grid search requires nonempty grids");
    }
    GridResult out;
    bool have_best = false;
    for (double lr : learning_rates) {
        for (double dropout : dropouts) {
            Hyperparams hp = base;
            hp.learning_rate = lr;
            hp.dropout = dropout;
            TrainResult result = train(splits, repr, hp);
            double recall = result.report.best_val_recall;
            bool better = false;
            if (!have_best || recall > out.best_val_recall) {
                better = true;
            } else if (recall == out.best_val_recall) {
                if (lr < out.best.learning_rate ||
                    (lr == out.best.learning_rate && dropout < out.best.dropout)) {
                    better = true;
                }
            }
            if (better) {
                out.best = hp;
                out.best_val_recall = recall;
                have_best = true;
            }
            out.reports.push_back(std::move(result.report));
        }
    }
    return out;
}

namespace {

json hp_to_json(const Hyperparams& hp) {
    return json{{"learning_rate", hp.learning_rate},
                {"dropout", hp.dropout},
                {"weight_decay", hp.weight_decay},
                {"batch_size", hp.batch_size},
                {"beta1", hp.beta1},
                {"beta2", hp.beta2},
                {"epsilon", hp.epsilon},
                {"eval_every", hp.eval_every},
                {"patience", hp.patience},
                {"max_epochs", hp.max_epochs},
                {"neg_ratio", hp.neg_ratio},
                {"hidden", hp.hidden},
                {"out_dim", hp.out_dim},
                {"k", hp.k},
                {"seed", hp.seed}};
}

Hyperparams hp_from_json(const json& j) {
    Hyperparams hp;
    hp.learning_rate = j.value("learning_rate", hp.learning_rate);
    hp.dropout = j.value("dropout", hp.dropout);
    hp.weight_decay = j.value("weight_decay", hp.weight_decay);
    hp.batch_size = j.value("batch_size", hp.batch_size);
    hp.beta1 = j.value("beta1", hp.beta1);
    hp.beta2 = j.value("beta2", hp.beta2);
    hp.epsilon = j.value("epsilon", hp.epsilon);
    hp.eval_every = j.value("eval_every", hp.eval_every);
    hp.patience = j.value("patience", hp.patience);
    hp.max_epochs = j.value("max_epochs", hp.max_epochs);
    hp.neg_ratio = j.value("neg_ratio", hp.neg_ratio);
    hp.hidden = j.value("hidden", hp.hidden);
    hp.out_dim = j.value("out_dim", hp.out_dim);
    hp.k = j.value("k", hp.k);
    hp.seed = j.value("seed", hp.seed);
    return hp;
}

void append_f32(std::string& out, const std::vector<double>& values) {
    for (double v : values) {
        float f = static_cast<float>(v);
        char bytes[sizeof(float)];
        std::memcpy(bytes, &f, sizeof(float));
        out.append(bytes, sizeof(float));
    }
}

std::size_t read_f32(const std::string& bytes, std::size_t offset, std::vector<double>& into) {
    for (auto& v : into) {
        float f = 0.0f;
        std::memcpy(&f, bytes.data() + offset, sizeof(float));
        offset += sizeof(float);
        v = static_cast<double>(f);
    }
    return offset;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& base_path, const TrainedModel& model) {
    std::filesystem::path bin = base_path;
    bin += ".bin";
    std::filesystem::path manifest = base_path;
    manifest += ".json";
    if (base_path.has_parent_path()) std::filesystem::create_directories(base_path.parent_path());

    std::string payload;
    const auto& p = model.params;
    payload.reserve((p.user_table.a.size() + p.item_w1.a.size() + p.item_b1.size() +
                     p.item_w2.a.size() + p.item_b2.size()) *
                    sizeof(float));
    append_f32(payload, p.user_table.a);
    append_f32(payload, p.item_w1.a);
    append_f32(payload, p.item_b1);
    append_f32(payload, p.item_w2.a);
    append_f32(payload, p.item_b2);
    write_text_file_atomic(bin, payload);

    json j{{"shape",
            {{"n_users", p.shape.n_users},
             {"d_item", p.shape.d_item},
             {"hidden", p.shape.hidden},
             {"out", p.shape.out}}},
           {"hp", hp_to_json(model.hp)},
           {"epoch", model.epoch},
           {"users", model.users.ids},
           {"dtype", "float32-le"},
           {"tensor_order", {"user_table", "item_w1", "item_b1", "item_w2", "item_b2"}}};
    write_text_file_atomic(manifest, j.dump(2) + "\n");
}

TrainedModel load_checkpoint(const std::filesystem::path& base_path) {
    std::filesystem::path bin = base_path;
    bin += ".bin";
    std::filesystem::path manifest = base_path;
    manifest += ".json";

    json j = json::parse(read_text_file(manifest));
    TrainedModel model;
    ModelShape shape;
    shape.n_users = j.at("shape").at("n_users").get<int>();
    shape.d_item = j.at("shape").at("d_item").get<int>();
    shape.hidden = j.at("shape").at("hidden").get<int>();
    shape.out = j.at("shape").at("out").get<int>();
    model.hp = hp_from_json(j.at("hp"));
    model.epoch = j.value("epoch", 0);
    model.users.ids = j.at("users").get<std::vector<std::string>>();
    for (std::size_t i = 0; i < model.users.ids.size(); ++i) {
        model.users.to_index.emplace(model.users.ids[i], static_cast<int>(i));
    }

    auto& p = model.params;
    p.shape = shape;
    p.user_table = Matrix(shape.n_users, shape.out);
    p.item_w1 = Matrix(shape.d_item, shape.hidden);
    p.item_b1.assign(static_cast<std::size_t>(shape.hidden), 0.0);
    p.item_w2 = Matrix(shape.hidden, shape.out);
    p.item_b2.assign(static_cast<std::size_t>(shape.out), 0.0);

    std::string bytes = read_text_file(bin);
    std::size_t expected = (p.user_table.a.size() + p.item_w1.a.size() + p.item_b1.size() +
                            p.item_w2.a.size() + p.item_b2.size()) *
                           sizeof(float);
    if (bytes.size() != expected) {
        throw ValidationError("checkpoint payload size mismatch: " + bin.string());
    }
    std::size_t offset = 0;
    offset = read_f32(bytes, offset, p.user_table.a);
    offset = read_f32(bytes, offset, p.item_w1.a);
    offset = read_f32(bytes, offset, p.item_b1);
    offset = read_f32(bytes, offset, p.item_w2.a);
    offset = read_f32(bytes, offset, p.item_b2);
    return model;
}

}  // namespace xrec::recsys
