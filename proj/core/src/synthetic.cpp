#include "xrec/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "xrec/common.hpp"
#include "xrec/embedding.hpp"
#include "xrec/errors.hpp"

namespace xrec::corpus {

namespace {

constexpr std::array<std::string_view, 40> kLexicon = {
    "alder",   "breeze", "cinder", "dapple", "ember",  "fathom", "glint",  "hollow",
    "inlet",   "jasper", "kelp",   "lumen",  "mosaic", "nectar", "opal",   "pebble",
    "quill",   "ripple", "sierra", "thicket", "umbra",  "vellum", "wicker", "yonder",
    "zenith",  "arbor",  "bramble", "cove",   "darner", "eddy",   "fen",    "grove",
    "heath",   "isle",   "knoll",  "lagoon", "marsh",  "nook",   "orchard", "pine",
};

std::string item_description(int index, SplitMix64& rng) {
    std::string out = "synthetic item " + std::to_string(index) + ":";
    for (int w = 0; w < 12; ++w) {
        out += ' ';
        out += kLexicon[static_cast<std::size_t>(rng.next_below(kLexicon.size()))];
    }
    return out;
}

}  // namespace

Dataset make_synthetic_dataset(const SyntheticSpec& spec) {
    if (spec.n_users < 1 || spec.n_items < 1 || spec.positives_per_user < 1) {
        throw ValidationError("synthetic spec dimensions must be >= 1");
    }
    if (spec.positives_per_user > spec.n_items) {
        throw ValidationError("positives_per_user cannot exceed n_items");
    }

    Dataset ds;
    ds.source = Source::synthetic;

    embedding::HashEmbedder embedder(spec.embed_dim, spec.embedder_model_id);
    std::vector<std::vector<float>> item_vecs(static_cast<std::size_t>(spec.n_items));
    std::vector<double> item_bias(static_cast<std::size_t>(spec.n_items), 0.0);

    SplitMix64 pop_rng(mix_seed(spec.seed, "synthetic-popularity"));
    char id_buf[16];
    for (int i = 0; i < spec.n_items; ++i) {
        std::snprintf(id_buf, sizeof(id_buf), "i%04d", i);
        SplitMix64 desc_rng(mix_seed(spec.seed, "synthetic-item", static_cast<std::uint64_t>(i)));
        Item item;
        item.item_id = id_buf;
        item.title = "Synthetic Item " + std::to_string(i);
        item.description = item_description(i, desc_rng);
        item.image_ref = "https://images.invalid/" + item.item_id + ".jpg";
        item.source = Source::synthetic;
        item_vecs[static_cast<std::size_t>(i)] = embedder.embed(item.description).values;
        item_bias[static_cast<std::size_t>(i)] = std::abs(pop_rng.next_normal());
        ds.items.push_back(std::move(item));
    }

    for (int u = 0; u < spec.n_users; ++u) {
        std::snprintf(id_buf, sizeof(id_buf), "u%04d", u);
        std::string user_id = id_buf;

        SplitMix64 user_rng(mix_seed(spec.seed, "synthetic-user", static_cast<std::uint64_t>(u)));
        std::vector<double> latent(static_cast<std::size_t>(spec.embed_dim));
        double norm_sq = 0.0;
        for (auto& v : latent) {
            v = user_rng.next_normal();
            norm_sq += v * v;
        }
        double inv_norm = 1.0 / std::sqrt(norm_sq);
        for (auto& v : latent) v *= inv_norm;

        std::vector<std::pair<double, int>> scored;
        scored.reserve(static_cast<std::size_t>(spec.n_items));
        for (int i = 0; i < spec.n_items; ++i) {
            double affinity = 0.0;
            const auto& vec = item_vecs[static_cast<std::size_t>(i)];
            for (int d = 0; d < spec.embed_dim; ++d) {
                affinity += latent[static_cast<std::size_t>(d)] *
                            static_cast<double>(vec[static_cast<std::size_t>(d)]);
            }
            affinity += spec.popularity_weight * item_bias[static_cast<std::size_t>(i)];
            scored.emplace_back(-affinity, i);  // ascending sort -> highest affinity first
        }
        std::sort(scored.begin(), scored.end());

        for (int rank = 0; rank < spec.positives_per_user; ++rank) {
            int item_idx = scored[static_cast<std::size_t>(rank)].second;
            Rating r;
            r.user_id = user_id;
            r.item_id = ds.items[static_cast<std::size_t>(item_idx)].item_id;
            r.value = 5.0;
            r.timestamp = static_cast<std::int64_t>(u) * 1000 + rank;
            ds.ratings.push_back(std::move(r));
        }
    }

    ds.interactions = to_implicit(ds.ratings);
    return ds;
}

}  // namespace xrec::corpus
