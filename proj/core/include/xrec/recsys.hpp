#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "xrec/corpus.hpp"
#include "xrec/embedding.hpp"

namespace xrec::recsys {

// Dense row-major matrix. Training math runs in double precision end to end
// so that gradient and optimizer checks hold at tight tolerances; checkpoints
// serialize float32.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }
    double* row(int r) { return a.data() + static_cast<std::size_t>(r) * cols; }
    const double* row(int r) const { return a.data() + static_cast<std::size_t>(r) * cols; }
};

struct ModelShape {
    int n_users = 0;
    int d_item = 0;
    int hidden = 256;
    int out = 128;  // shared output dimension of both towers
};

// User tower: embedding table lookup. Item tower:
// dropout(input) -> linear(d_item -> hidden) -> relu -> linear(hidden -> out).
struct TwoTowerParams {
    ModelShape shape;
    Matrix user_table;            // n_users x out
    Matrix item_w1;               // d_item x hidden
    std::vector<double> item_b1;  // hidden
    Matrix item_w2;               // hidden x out
    std::vector<double> item_b2;  // out
};

struct Hyperparams {
    double learning_rate = 0.0005;
    double dropout = 0.1;
    double weight_decay = 0.0005;
    int batch_size = 4096;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int eval_every = 5;   // epochs between validation passes
    int patience = 5;     // evaluations without improvement before stopping
    int max_epochs = 200;
    int neg_ratio = 1;    // pseudo-negatives per positive, resampled each epoch
    int hidden = 256;
    int out_dim = 128;
    int k = 10;           // validation Recall@k
    std::uint64_t seed = 0;
};

// User table entries ~ N(0, 0.01^2); item tower weights ~ N(0, 1/fan_in);
// biases zero. Deterministic in the seed.
TwoTowerParams init_params(const ModelShape& shape, std::uint64_t seed);

struct ForwardResult {
    double logit = 0.0;
    double prob = 0.0;
};

// Dropout (inverted, scaled by 1/(1-p)) applies only when a mask is given.
ForwardResult forward(const TwoTowerParams& params,
                      int user_index,
                      std::span<const float> item_vec,
                      const std::vector<std::uint8_t>* dropout_mask = nullptr,
                      double dropout_p = 0.0);

// Probabilities are clamped to [1e-7, 1-1e-7] before the logs. Sum over the
// batch; the mean variant divides by the batch size.
double bce_loss_sum(const std::vector<double>& probs, const std::vector<int>& labels);
double bce_loss_mean(const std::vector<double>& probs, const std::vector<int>& labels);

struct Batch {
    std::vector<int> user_idx;
    std::vector<const float*> item_vecs;
    std::vector<int> labels;
    // One mask per example when dropout is active, else empty.
    std::vector<std::vector<std::uint8_t>> dropout_masks;
    double dropout_p = 0.0;
    int d_item = 0;
};

struct Gradients {
    Matrix user_table;
    Matrix item_w1;
    std::vector<double> item_b1;
    Matrix item_w2;
    std::vector<double> item_b2;
};

struct BackwardResult {
    Gradients grads;
    double loss_sum = 0.0;  // clamped BCE, summed over the batch
};

// Exact gradients of the clamped batch-mean loss. Users absent from the batch
// get zero user-table rows.
BackwardResult backward(const TwoTowerParams& params, const Batch& batch);

struct OptimizerState {
    Matrix m_user, v_user;
    Matrix m_w1, v_w1;
    std::vector<double> m_b1, v_b1;
    Matrix m_w2, v_w2;
    std::vector<double> m_b2, v_b2;
    std::int64_t t = 0;

    static OptimizerState zeros_like(const TwoTowerParams& params);
};

// Decoupled weight decay on the user table and both weight matrices, never on
// biases: theta -= lr * (m_hat / (sqrt(v_hat) + eps) + lambda * theta).
void adamw_step(TwoTowerParams& params,
                const Gradients& grads,
                OptimizerState& state,
                const Hyperparams& hp);

// Inference-mode logits for a candidate list; identical arithmetic to forward.
std::vector<double> predict_scores(const TwoTowerParams& params,
                                   int user_index,
                                   const std::vector<const float*>& item_vecs,
                                   int d_item);

struct UserIndex {
    std::vector<std::string> ids;  // sorted
    std::unordered_map<std::string, int> to_index;

    static UserIndex from_splits(const corpus::DatasetSplits& splits);
    int require(const std::string& user_id) const;
};

struct TrainReport {
    std::vector<double> val_recall_curve;    // one entry per evaluation
    std::vector<double> train_loss_per_epoch;  // mean clamped BCE per example
    int best_epoch = 0;
    double best_val_recall = 0.0;
    bool stopped_early = false;
    Hyperparams hp;
};

struct TrainedModel {
    TwoTowerParams params;
    UserIndex users;
    Hyperparams hp;
    int epoch = 0;
};

struct TrainResult {
    TrainedModel model;
    TrainReport report;
};

// Epochs iterate shuffled positives plus freshly sampled pseudo-negatives in
// batches; validation Recall@k runs every eval_every epochs; training stops
// after `patience` evaluations without improvement and returns the parameters
// from the best evaluation.
TrainResult train(const corpus::DatasetSplits& splits,
                  const embedding::RepresentationSet& representations,
                  const Hyperparams& hp);

struct GridResult {
    Hyperparams best;
    double best_val_recall = 0.0;
    std::vector<TrainReport> reports;  // lr-major order over the grids
};

// Trains every (learning rate, dropout) combination and keeps the highest
// validation Recall@k; ties prefer the lower learning rate, then the lower
// dropout.
GridResult grid_search(const corpus::DatasetSplits& splits,
                       const embedding::RepresentationSet& representations,
                       const std::vector<double>& learning_rates,
                       const std::vector<double>& dropouts,
                       const Hyperparams& base);

// Checkpoint: <base>.bin holds float32 tensors in a fixed order, <base>.json
// the shapes, hyperparameters, epoch and user index.
void save_checkpoint(const std::filesystem::path& base_path, const TrainedModel& model);
TrainedModel load_checkpoint(const std::filesystem::path& base_path);

}  // namespace xrec::recsys
