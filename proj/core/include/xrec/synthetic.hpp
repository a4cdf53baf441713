#pragma once

#include <cstdint>
#include <string>

#include "xrec/corpus.hpp"

namespace xrec::corpus {

// Synthetic catalog with a planted user-item affinity: each user prefers
// items whose description embedding (under the deterministic hash embedder)
// aligns with the user's latent direction. A nonzero popularity weight mixes
// in a shared per-item bias so popularity-driven baselines have signal.
struct SyntheticSpec {
    int n_users = 200;
    int n_items = 300;
    int positives_per_user = 15;
    double popularity_weight = 0.0;
    std::uint64_t seed = 7;
    int embed_dim = 384;
    std::string embedder_model_id = "hash-embedder-v1";
};

Dataset make_synthetic_dataset(const SyntheticSpec& spec);

}  // namespace xrec::corpus
