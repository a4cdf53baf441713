#pragma once

#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "xrec/corpus.hpp"

namespace xrec::metrics {

struct RankingMetrics {
    int k = 10;
    double precision = 0.0;
    double recall = 0.0;
    double ndcg = 0.0;
};

// Descending score, ties broken by ascending item id. NaN scores are an error.
std::vector<std::string> rank_candidates(const std::unordered_map<std::string, double>& scores);

// Binary-gain metrics over the top k of a ranking. DCG discounts hits at rank
// r by 1/log2(r+1); IDCG places all relevant items at the top.
RankingMetrics metrics_at_k(const std::vector<std::string>& ranking,
                            const std::unordered_set<std::string>& relevant,
                            int k);

struct MetricSummary {
    double precision = 0.0;
    double recall = 0.0;
    double ndcg = 0.0;
};

struct EvalReport {
    int k = 10;
    std::vector<std::pair<std::string, RankingMetrics>> per_user;  // sorted by user id
    MetricSummary mean;
};

struct AggregateReport {
    int k = 10;
    int n_splits = 0;
    MetricSummary mean;
    MetricSummary stddev;       // sample standard deviation (n-1)
    bool single_split = false;  // stddev forced to 0 for a single report
};

AggregateReport aggregate_splits(const std::vector<EvalReport>& reports);

// Scores every item by its train positive-interaction count, independent of
// the user.
class PopularityScorer {
public:
    explicit PopularityScorer(const std::vector<corpus::Interaction>& train);

    double score(const std::string& item_id) const;

private:
    std::unordered_map<std::string, int> counts_;
};

}  // namespace xrec::metrics
