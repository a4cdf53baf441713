#pragma once

#include <map>
#include <string>
#include <vector>

#include "xrec/corpus.hpp"
#include "xrec/embedding.hpp"
#include "xrec/gateway.hpp"

namespace xrec::analysis {

struct SimilarityRow {
    std::string item_id;
    // cos(embed(description), embed(image description)); the visual-only
    // response serves as the image description.
    double reference_sim = 0.0;
    std::vector<std::pair<std::string, double>> strategy_sims;  // in requested order
};

struct SimilarityTable {
    std::vector<std::string> strategies;
    std::vector<SimilarityRow> rows;  // sorted by item id
    int skipped = 0;                  // items missing any required input
};

// One row per item that has a description, a visual-only record and a record
// for every requested strategy; everything else is skipped and counted.
SimilarityTable similarity_table(
    const std::vector<corpus::Item>& items,
    const std::map<std::string, std::map<std::string, gateway::EnrichmentRecord>>& records_by_item,
    embedding::EmbeddingBackend& backend,
    const std::vector<std::string>& strategy_tags);

struct DiversitySummary {
    double fraction_below_reference = 0.0;
    double mean_sim = 0.0;
    double mean_reference = 0.0;
    int n = 0;
};

DiversitySummary diversity_summary(const SimilarityTable& table, const std::string& strategy_tag);

// Columns: item_id, reference_sim, then one column per strategy.
std::string similarity_csv(const SimilarityTable& table);

}  // namespace xrec::analysis
