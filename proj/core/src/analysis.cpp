#include "xrec/analysis.hpp"

#include <algorithm>
#include <cstdio>

#include "xrec/errors.hpp"

namespace xrec::analysis {

SimilarityTable similarity_table(
    const std::vector<corpus::Item>& items,
    const std::map<std::string, std::map<std::string, gateway::EnrichmentRecord>>& records_by_item,
    embedding::EmbeddingBackend& backend,
    const std::vector<std::string>& strategy_tags) {
    SimilarityTable table;
    table.strategies = strategy_tags;

    std::vector<const corpus::Item*> ordered;
    ordered.reserve(items.size());
    for (const auto& item : items) ordered.push_back(&item);
    std::sort(ordered.begin(), ordered.end(),
              [](const corpus::Item* a, const corpus::Item* b) { return a->item_id < b->item_id; });

    for (const auto* item : ordered) {
        if (item->description.empty()) {
            ++table.skipped;
            continue;
        }
        auto rec_it = records_by_item.find(item->item_id);
        if (rec_it == records_by_item.end()) {
            ++table.skipped;
            continue;
        }
        const auto& records = rec_it->second;
        auto image_it = records.find("visual_only");
        if (image_it == records.end() || image_it->second.response_text.empty()) {
            ++table.skipped;
            continue;
        }
        bool complete = true;
        for (const auto& tag : strategy_tags) {
            auto it = records.find(tag);
            if (it == records.end() || it->second.response_text.empty()) {
                complete = false;
                break;
            }
        }
        if (!complete) {
            ++table.skipped;
            continue;
        }

        auto desc_emb = backend.embed(item->description);
        SimilarityRow row;
        row.item_id = item->item_id;
        row.reference_sim = embedding::cosine(desc_emb, backend.embed(image_it->second.response_text));
        for (const auto& tag : strategy_tags) {
            double sim = embedding::cosine(desc_emb, backend.embed(records.at(tag).response_text));
            row.strategy_sims.emplace_back(tag, sim);
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

DiversitySummary diversity_summary(const SimilarityTable& table, const std::string& strategy_tag) {
    if (table.rows.empty()) {
        throw ValidationError("similarity table has no rows");
    }
    DiversitySummary out;
    for (const auto& row : table.rows) {
        auto it = std::find_if(row.strategy_sims.begin(), row.strategy_sims.end(),
                               [&](const auto& p) { return p.first == strategy_tag; });
        if (it == row.strategy_sims.end()) {
            throw ValidationError("strategy " + strategy_tag + " absent from similarity table");
        }
        out.mean_sim += it->second;
        out.mean_reference += row.reference_sim;
        if (it->second < row.reference_sim) out.fraction_below_reference += 1.0;
        ++out.n;
    }
    out.mean_sim /= out.n;
    out.mean_reference /= out.n;
    out.fraction_below_reference /= out.n;
    return out;
}

std::string similarity_csv(const SimilarityTable& table) {
    std::string out = "item_id,reference_sim";
    for (const auto& tag : table.strategies) out += "," + tag;
    out += "\n";
    char buf[40];
    for (const auto& row : table.rows) {
        out += row.item_id;
        std::snprintf(buf, sizeof(buf), ",%.9g", row.reference_sim);
        out += buf;
        for (const auto& [tag, sim] : row.strategy_sims) {
            std::snprintf(buf, sizeof(buf), ",%.9g", sim);
            out += buf;
        }
        out += "\n";
    }
    return out;
}

}  // namespace xrec::analysis
