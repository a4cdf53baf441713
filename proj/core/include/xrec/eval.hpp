#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "xrec/corpus.hpp"
#include "xrec/embedding.hpp"
#include "xrec/metrics.hpp"
#include "xrec/recsys.hpp"

namespace xrec::eval {

// Scores a candidate list for one user; the returned vector is parallel to
// the item list.
using Scorer = std::function<std::vector<double>(const std::string& user,
                                                 const std::vector<std::string>& items)>;

enum class Part { val, test };

// Per user with positives in the chosen part: rank that part's positives
// against the user's sampled candidate negatives (the other part's positives
// are held out of the list), then average the metrics over users in sorted
// user order.
metrics::EvalReport evaluate_split(const Scorer& scorer,
                                   const corpus::DatasetSplits& splits,
                                   Part part,
                                   int k);

Scorer make_model_scorer(const recsys::TrainedModel& model,
                         const embedding::RepresentationSet& representations);

Scorer make_popularity_scorer(const metrics::PopularityScorer& scorer);

metrics::EvalReport evaluate_model(const recsys::TrainedModel& model,
                                   const corpus::DatasetSplits& splits,
                                   const embedding::RepresentationSet& representations,
                                   int k = 10);

std::string report_to_json(const metrics::EvalReport& report);
metrics::EvalReport report_from_json(const std::string& text);

struct TableRow {
    std::string label;
    metrics::AggregateReport aggregate;
};

// CSV with one row per combo: label, then mean and std per metric.
std::string metrics_table_csv(const std::vector<TableRow>& rows, int k);

}  // namespace xrec::eval
