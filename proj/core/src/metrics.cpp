#include "xrec/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "xrec/errors.hpp"

namespace xrec::metrics {

std::vector<std::string> rank_candidates(const std::unordered_map<std::string, double>& scores) {
    if (scores.empty()) {
        throw ValidationError("rank_candidates requires at least one score");
    }
    std::vector<std::pair<std::string, double>> entries(scores.begin(), scores.end());
    for (const auto& [item, score] : entries) {
        if (std::isnan(score)) {
            throw ValidationError("NaN score for item " + item);
        }
    }
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<std::string> out;
    out.reserve(entries.size());
    for (auto& [item, score] : entries) out.push_back(std::move(item));
    return out;
}

RankingMetrics metrics_at_k(const std::vector<std::string>& ranking,
                            const std::unordered_set<std::string>& relevant,
                            int k) {
    if (k < 1) {
        throw ValidationError("k must be >= 1");
    }
    if (relevant.empty()) {
        throw ValidationError("relevant set must be nonempty");
    }

    int hits = 0;
    double dcg = 0.0;
    int top = std::min<int>(k, static_cast<int>(ranking.size()));
    for (int r = 1; r <= top; ++r) {
        if (relevant.count(ranking[static_cast<std::size_t>(r - 1)])) {
            ++hits;
            dcg += 1.0 / std::log2(static_cast<double>(r) + 1.0);
        }
    }
    double idcg = 0.0;
    int ideal = std::min<int>(k, static_cast<int>(relevant.size()));
    for (int r = 1; r <= ideal; ++r) {
        idcg += 1.0 / std::log2(static_cast<double>(r) + 1.0);
    }

    RankingMetrics m;
    m.k = k;
    m.precision = static_cast<double>(hits) / static_cast<double>(k);
    m.recall = static_cast<double>(hits) / static_cast<double>(relevant.size());
    m.ndcg = idcg > 0.0 ? dcg / idcg : 0.0;
    return m;
}

AggregateReport aggregate_splits(const std::vector<EvalReport>& reports) {
    if (reports.empty()) {
        throw ValidationError("aggregate_splits requires at least one report");
    }
    AggregateReport agg;
    agg.k = reports.front().k;
    agg.n_splits = static_cast<int>(reports.size());
    for (const auto& r : reports) {
        if (r.k != agg.k) {
            throw ValidationError("reports disagree on k");
        }
        agg.mean.precision += r.mean.precision;
        agg.mean.recall += r.mean.recall;
        agg.mean.ndcg += r.mean.ndcg;
    }
    double n = static_cast<double>(agg.n_splits);
    agg.mean.precision /= n;
    agg.mean.recall /= n;
    agg.mean.ndcg /= n;

    if (agg.n_splits == 1) {
        agg.single_split = true;
        return agg;
    }
    double vp = 0.0, vr = 0.0, vn = 0.0;
    for (const auto& r : reports) {
        vp += (r.mean.precision - agg.mean.precision) * (r.mean.precision - agg.mean.precision);
        vr += (r.mean.recall - agg.mean.recall) * (r.mean.recall - agg.mean.recall);
        vn += (r.mean.ndcg - agg.mean.ndcg) * (r.mean.ndcg - agg.mean.ndcg);
    }
    agg.stddev.precision = std::sqrt(vp / (n - 1.0));
    agg.stddev.recall = std::sqrt(vr / (n - 1.0));
    agg.stddev.ndcg = std::sqrt(vn / (n - 1.0));
    return agg;
}

PopularityScorer::PopularityScorer(const std::vector<corpus::Interaction>& train) {
    if (train.empty()) {
        throw ValidationError("popularity baseline requires train interactions");
    }
    for (const auto& e : train) {
        if (e.label == 1) ++counts_[e.item_id];
    }
}

double PopularityScorer::score(const std::string& item_id) const {
    auto it = counts_.find(item_id);
    return it == counts_.end() ? 0.0 : static_cast<double>(it->second);
}

}  // namespace xrec::metrics
