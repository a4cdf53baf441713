#include "xrec/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <unordered_set>

#include "xrec/errors.hpp"

#include <json.hpp>

using nlohmann::json;

namespace xrec::eval {

metrics::EvalReport evaluate_split(const Scorer& scorer,
                                   const corpus::DatasetSplits& splits,
                                   Part part,
                                   int k) {
    const auto& positives_src = part == Part::val ? splits.val : splits.test;
    const auto& heldout_src = part == Part::val ? splits.test : splits.val;

    std::map<std::string, std::unordered_set<std::string>> positives;
    for (const auto& e : positives_src) positives[e.user_id].insert(e.item_id);
    std::map<std::string, std::unordered_set<std::string>> heldout;
    for (const auto& e : heldout_src) heldout[e.user_id].insert(e.item_id);

    metrics::EvalReport report;
    report.k = k;
    for (const auto& [user, relevant] : positives) {
        auto cand_it = splits.eval_candidates.find(user);
        if (cand_it == splits.eval_candidates.end()) {
            throw ValidationError("no eval candidates for user " + user);
        }
        const auto& held = heldout[user];
        std::vector<std::string> candidates;
        candidates.reserve(cand_it->second.size());
        for (const auto& item : cand_it->second) {
            if (!held.count(item)) candidates.push_back(item);
        }
        std::vector<double> scores = scorer(user, candidates);
        if (scores.size() != candidates.size()) {
            throw ValidationError("scorer returned " + std::to_string(scores.size()) +
                                  " scores for " + std::to_string(candidates.size()) +
                                  " candidates");
        }
        std::unordered_map<std::string, double> score_map;
        score_map.reserve(scores.size());
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            score_map.emplace(candidates[i], scores[i]);
        }
        auto ranking = metrics::rank_candidates(score_map);
        auto m = metrics::metrics_at_k(ranking, relevant, k);
        report.per_user.emplace_back(user, m);
    }

    if (report.per_user.empty()) {
        throw ValidationError("no users with positives in the requested split");
    }
    for (const auto& [user, m] : report.per_user) {
        report.mean.precision += m.precision;
        report.mean.recall += m.recall;
        report.mean.ndcg += m.ndcg;
    }
    double n = static_cast<double>(report.per_user.size());
    report.mean.precision /= n;
    report.mean.recall /= n;
    report.mean.ndcg /= n;
    return report;
}

Scorer make_model_scorer(const recsys::TrainedModel& model,
                         const embedding::RepresentationSet& repr) {
    return [&model, &repr](const std::string& user, const std::vector<std::string>& items) {
        std::vector<const float*> vecs;
        vecs.reserve(items.size());
        for (const auto& item : items) vecs.push_back(repr.row_of(item));
        return recsys::predict_scores(model.params, model.users.require(user), vecs, repr.dim);
    };
}

Scorer make_popularity_scorer(const metrics::PopularityScorer& scorer) {
    return [&scorer](const std::string& user, const std::vector<std::string>& items) {
        (void)user;
        std::vector<double> out;
        out.reserve(items.size());
        for (const auto& item : items) out.push_back(scorer.score(item));
        return out;
    };
}

metrics::EvalReport evaluate_model(const recsys::TrainedModel& model,
                                   const corpus::DatasetSplits& splits,
                                   const embedding::RepresentationSet& repr,
                                   int k) {
    return evaluate_split(make_model_scorer(model, repr), splits, Part::test, k);
}

std::string report_to_json(const metrics::EvalReport& report) {
    json users = json::array();
    for (const auto& [user, m] : report.per_user) {
        users.push_back({{"user_id", user},
                         {"precision", m.precision},
                         {"recall", m.recall},
                         {"ndcg", m.ndcg}});
    }
    json j{{"k", report.k},
           {"mean",
            {{"precision", report.mean.precision},
             {"recall", report.mean.recall},
             {"ndcg", report.mean.ndcg}}},
           {"users", users}};
    return j.dump(2) + "\n";
}

metrics::EvalReport report_from_json(const std::string& text) {
    json j = json::parse(text);
    metrics::EvalReport report;
    report.k = j.at("k").get<int>();
    report.mean.precision = j.at("mean").at("precision").get<double>();
    report.mean.recall = j.at("mean").at("recall").get<double>();
    report.mean.ndcg = j.at("mean").at("ndcg").get<double>();
    for (const auto& u : j.at("users")) {
        metrics::RankingMetrics m;
        m.k = report.k;
        m.precision = u.at("precision").get<double>();
        m.recall = u.at("recall").get<double>();
        m.ndcg = u.at("ndcg").get<double>();
        report.per_user.emplace_back(u.at("user_id").get<std::string>(), m);
    }
    return report;
}

std::string metrics_table_csv(const std::vector<TableRow>& rows, int k) {
    std::string ks = std::to_string(k);
    std::string out = "combo,precision_at_" + ks + "_mean,precision_at_" + ks +
                      "_std,recall_at_" + ks + "_mean,recall_at_" + ks + "_std,ndcg_at_" + ks +
                      "_mean,ndcg_at_" + ks + "_std\n";
    char buf[160];
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", row.label.c_str(),
                      row.aggregate.mean.precision, row.aggregate.stddev.precision,
                      row.aggregate.mean.recall, row.aggregate.stddev.recall,
                      row.aggregate.mean.ndcg, row.aggregate.stddev.ndcg);
        out += buf;
    }
    return out;
}

}  // namespace xrec::eval
