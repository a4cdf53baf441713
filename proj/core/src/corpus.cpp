#include "xrec/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "xrec/common.hpp"
#include "xrec/errors.hpp"

#include <json.hpp>

using nlohmann::json;

namespace xrec::corpus {

std::string source_name(Source s) {
    switch (s) {
        case Source::movielens: return "movielens";
        case Source::amazon: return "amazon";
        case Source::synthetic: return "synthetic";
    }
    return "synthetic";
}

Source source_from_name(const std::string& name) {
    if (name == "movielens") return Source::movielens;
    if (name == "amazon") return Source::amazon;
    if (name == "synthetic") return Source::synthetic;
    throw ValidationError("unknown dataset source: " + name);
}

namespace {

// Two-column CSV with a header row. The value is everything after the first
// comma; values may be double-quoted with "" escapes.
std::unordered_map<std::string, std::string> read_two_column_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("cannot open file: " + path.string());
    }
    std::unordered_map<std::string, std::string> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1) continue;  // header
        if (line.empty()) continue;
        std::size_t comma = line.find(',');
        if (comma == std::string::npos) {
            throw ParseError(path.string(), line_no, "expected two columns");
        }
        std::string id = line.substr(0, comma);
        std::string value = line.substr(comma + 1);
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
            std::string unescaped;
            unescaped.reserve(value.size());
            for (std::size_t i = 1; i + 1 < value.size(); ++i) {
                if (value[i] == '"' && i + 2 < value.size() && value[i + 1] == '"') {
                    unescaped.push_back('"');
                    ++i;
                } else {
                    unescaped.push_back(value[i]);
                }
            }
            value = unescaped;
        }
        out[id] = value;
    }
    return out;
}

bool parse_int64(const std::string& s, std::int64_t& out) {
    if (s.empty()) return false;
    std::size_t pos = 0;
    try {
        out = std::stoll(s, &pos);
    } catch (...) {
        return false;
    }
    return pos == s.size();
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    std::size_t pos = 0;
    try {
        out = std::stod(s, &pos);
    } catch (...) {
        return false;
    }
    return pos == s.size();
}

}  // namespace

Dataset parse_movielens(const std::filesystem::path& ratings_path,
                        const std::filesystem::path& posters_path,
                        const std::filesystem::path& descriptions_path) {
    auto posters = read_two_column_csv(posters_path);
    auto descriptions = read_two_column_csv(descriptions_path);

    std::ifstream in(ratings_path, std::ios::binary);
    if (!in) {
        throw ValidationError("cannot open file: " + ratings_path.string());
    }

    Dataset ds;
    ds.source = Source::movielens;

    // Keep-last for duplicate (user,movie) pairs.
    std::unordered_map<std::string, std::size_t> seen;  // "user\x1fitem" -> index into ratings
    std::vector<std::string> movie_order;
    std::unordered_set<std::string> movie_seen;

    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;

        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            std::size_t pos = line.find("::", start);
            if (pos == std::string::npos) {
                fields.push_back(line.substr(start));
                break;
            }
            fields.push_back(line.substr(start, pos - start));
            start = pos + 2;
        }
        if (fields.size() != 4) {
            throw ParseError(ratings_path.string(), line_no,
                             "expected UserID::MovieID::Rating::Timestamp");
        }
        double value = 0.0;
        std::int64_t ts = 0;
        if (fields[0].empty() || fields[1].empty() || !parse_double(fields[2], value) ||
            !parse_int64(fields[3], ts)) {
            throw ParseError(ratings_path.string(), line_no, "malformed rating record");
        }

        Rating r{fields[0], fields[1], value, ts};
        std::string key = r.user_id + '\x1f' + r.item_id;
        auto it = seen.find(key);
        if (it != seen.end()) {
            ds.ratings[it->second] = r;  // keep last
            ++ds.duplicate_rating_count;
        } else {
            seen.emplace(std::move(key), ds.ratings.size());
            ds.ratings.push_back(r);
        }
        if (movie_seen.insert(r.item_id).second) {
            movie_order.push_back(r.item_id);
        }
    }

    for (const auto& movie_id : movie_order) {
        Item item;
        item.item_id = movie_id;
        item.title = movie_id;  // ratings carry no titles
        item.source = Source::movielens;
        if (auto it = descriptions.find(movie_id); it != descriptions.end()) {
            item.description = it->second;
        }
        if (auto it = posters.find(movie_id); it != posters.end()) {
            item.image_ref = it->second;
        }
        ds.items.push_back(std::move(item));
    }

    if (ds.duplicate_rating_count > 0) {
        ds.warnings.push_back("duplicate ratings collapsed (kept last): " +
                              std::to_string(ds.duplicate_rating_count));
    }
    return ds;
}

Dataset parse_amazon(const std::filesystem::path& metadata_path,
                     const std::filesystem::path& reviews_path) {
    Dataset ds;
    ds.source = Source::amazon;

    std::unordered_map<std::string, std::size_t> item_index;

    auto get_string = [](const json& j, const char* key) -> std::string {
        auto it = j.find(key);
        if (it == j.end() || !it->is_string()) return {};
        return it->get<std::string>();
    };

    {
        std::ifstream in(metadata_path, std::ios::binary);
        if (!in) {
            throw ValidationError("cannot open file: " + metadata_path.string());
        }
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (trim(line).empty()) continue;
            json j = json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.is_object()) {
                throw ParseError(metadata_path.string(), line_no, "invalid JSON");
            }
            std::string id = get_string(j, "asin");
            if (id.empty()) id = get_string(j, "item_id");
            if (id.empty()) {
                ++ds.skipped_metadata_count;
                continue;
            }
            Item item;
            item.item_id = id;
            item.title = get_string(j, "title");
            item.source = Source::amazon;

            if (auto it = j.find("description"); it != j.end()) {
                if (it->is_string()) {
                    item.description = it->get<std::string>();
                } else if (it->is_array()) {
                    std::string joined;
                    for (const auto& part : *it) {
                        if (!part.is_string()) continue;
                        if (!joined.empty()) joined += ' ';
                        joined += part.get<std::string>();
                    }
                    item.description = joined;
                }
            }
            for (const char* key : {"imageURLHighRes", "imageURL", "image"}) {
                auto it = j.find(key);
                if (it == j.end()) continue;
                if (it->is_array() && !it->empty() && (*it)[0].is_string()) {
                    item.image_ref = (*it)[0].get<std::string>();
                    break;
                }
                if (it->is_string()) {
                    item.image_ref = it->get<std::string>();
                    break;
                }
            }

            auto idx = item_index.find(id);
            if (idx == item_index.end()) {
                item_index.emplace(id, ds.items.size());
                ds.items.push_back(std::move(item));
            } else {
                ds.items[idx->second] = std::move(item);  // later metadata wins
            }
        }
        if (ds.skipped_metadata_count > 0) {
            ds.warnings.push_back("metadata records without item id skipped: " +
                                  std::to_string(ds.skipped_metadata_count));
        }
    }

    {
        std::ifstream in(reviews_path, std::ios::binary);
        if (!in) {
            throw ValidationError("cannot open file: " + reviews_path.string());
        }
        std::unordered_map<std::string, std::size_t> seen;
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (trim(line).empty()) continue;
            json j = json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.is_object()) {
                throw ParseError(reviews_path.string(), line_no, "invalid JSON");
            }
            std::string user = get_string(j, "reviewerID");
            if (user.empty()) user = get_string(j, "user_id");
            std::string item = get_string(j, "asin");
            if (item.empty()) item = get_string(j, "item_id");
            double value = 0.0;
            if (auto it = j.find("overall"); it != j.end() && it->is_number()) {
                value = it->get<double>();
            } else if (auto it2 = j.find("rating"); it2 != j.end() && it2->is_number()) {
                value = it2->get<double>();
            } else {
                throw ParseError(reviews_path.string(), line_no, "review record missing rating");
            }
            if (user.empty() || item.empty()) {
                throw ParseError(reviews_path.string(), line_no, "review record missing ids");
            }
            std::int64_t ts = 0;
            if (auto it = j.find("unixReviewTime"); it != j.end() && it->is_number_integer()) {
                ts = it->get<std::int64_t>();
            }

            if (item_index.find(item) == item_index.end()) {
                Item stub;
                stub.item_id = item;
                stub.title = item;
                stub.source = Source::amazon;
                item_index.emplace(item, ds.items.size());
                ds.items.push_back(std::move(stub));
            }

            Rating r{user, item, value, ts};
            std::string key = user + '\x1f' + item;
            auto it = seen.find(key);
            if (it != seen.end()) {
                ds.ratings[it->second] = r;
                ++ds.duplicate_rating_count;
            } else {
                seen.emplace(std::move(key), ds.ratings.size());
                ds.ratings.push_back(r);
            }
        }
        if (ds.duplicate_rating_count > 0) {
            ds.warnings.push_back("duplicate reviews collapsed (kept last): " +
                                  std::to_string(ds.duplicate_rating_count));
        }
    }

    return ds;
}

std::vector<Interaction> to_implicit(const std::vector<Rating>& ratings) {
    std::vector<Interaction> out;
    std::unordered_set<std::string> seen;
    out.reserve(ratings.size());
    for (const auto& r : ratings) {
        std::string key = r.user_id + '\x1f' + r.item_id;
        if (!seen.insert(std::move(key)).second) continue;
        out.push_back(Interaction{r.user_id, r.item_id, 1, Origin::observed});
    }
    return out;
}

Dataset k_core_filter(const Dataset& dataset, int k) {
    if (k < 1) {
        throw ValidationError("k-core requires k >= 1");
    }
    std::vector<Interaction> edges = dataset.interactions;

    bool changed = true;
    while (changed) {
        changed = false;
        std::unordered_map<std::string, int> user_deg;
        std::unordered_map<std::string, int> item_deg;
        for (const auto& e : edges) {
            ++user_deg[e.user_id];
            ++item_deg[e.item_id];
        }
        std::vector<Interaction> kept;
        kept.reserve(edges.size());
        for (auto& e : edges) {
            if (user_deg[e.user_id] >= k && item_deg[e.item_id] >= k) {
                kept.push_back(std::move(e));
            } else {
                changed = true;
            }
        }
        edges = std::move(kept);
    }

    if (edges.empty()) {
        throw ValidationError("empty after filtering: no user/item satisfies the " +
                              std::to_string(k) + "-core condition");
    }

    std::unordered_set<std::string> kept_items;
    std::unordered_set<std::string> kept_users;
    for (const auto& e : edges) {
        kept_items.insert(e.item_id);
        kept_users.insert(e.user_id);
    }

    Dataset out;
    out.source = dataset.source;
    out.interactions = std::move(edges);
    for (const auto& item : dataset.items) {
        if (kept_items.count(item.item_id)) out.items.push_back(item);
    }
    for (const auto& r : dataset.ratings) {
        if (kept_users.count(r.user_id) && kept_items.count(r.item_id)) out.ratings.push_back(r);
    }
    out.warnings = dataset.warnings;
    out.duplicate_rating_count = dataset.duplicate_rating_count;
    out.skipped_metadata_count = dataset.skipped_metadata_count;
    return out;
}

DatasetSplits split_per_user(const Dataset& dataset, const SplitRatios& ratios, std::uint64_t seed) {
    double sum = ratios.train + ratios.val + ratios.test;
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ValidationError("split ratios must sum to 1");
    }

    std::map<std::string, std::vector<Interaction>> by_user;
    for (const auto& e : dataset.interactions) {
        if (e.origin != Origin::observed) {
            throw ValidationError("split input must contain only observed interactions");
        }
        by_user[e.user_id].push_back(e);
    }

    DatasetSplits splits;
    splits.seed = seed;
    for (const auto& [user, list] : by_user) {
        std::size_t n = list.size();
        if (n < 3) {
            throw ValidationError("user " + user + " has " + std::to_string(n) +
                                  " interactions; at least 3 are required to populate every split");
        }
        auto shuffled = list;
        SplitMix64 rng(mix_seed(seed, "split", fnv1a64(user)));
        deterministic_shuffle(shuffled, rng);

        auto clamp_part = [n](double ratio) {
            auto c = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
            return std::max<std::size_t>(1, c);
        };
        std::size_t n_val = clamp_part(ratios.val);
        std::size_t n_test = clamp_part(ratios.test);
        if (n_val + n_test >= n) {
            n_val = 1;
            n_test = 1;
        }
        std::size_t n_train = n - n_val - n_test;

        for (std::size_t i = 0; i < n_train; ++i) splits.train.push_back(shuffled[i]);
        for (std::size_t i = n_train; i < n_train + n_val; ++i) splits.val.push_back(shuffled[i]);
        for (std::size_t i = n_train + n_val; i < n; ++i) splits.test.push_back(shuffled[i]);
    }

    std::set<std::string> items;
    for (const auto& item : dataset.items) items.insert(item.item_id);
    for (const auto& e : dataset.interactions) items.insert(e.item_id);
    splits.all_items.assign(items.begin(), items.end());
    return splits;
}

namespace {

std::map<std::string, std::set<std::string>> interacted_by_user(const DatasetSplits& splits) {
    std::map<std::string, std::set<std::string>> m;
    for (const auto* part : {&splits.train, &splits.val, &splits.test}) {
        for (const auto& e : *part) m[e.user_id].insert(e.item_id);
    }
    return m;
}

}  // namespace

std::map<std::string, std::vector<std::string>> build_eval_candidates(const DatasetSplits& splits,
                                                                      int n,
                                                                      std::uint64_t rng_seed,
                                                                      std::vector<std::string>* warnings) {
    if (n < 0) {
        throw ValidationError("candidate count must be >= 0");
    }
    auto interacted = interacted_by_user(splits);

    std::map<std::string, std::vector<std::string>> positives;
    for (const auto* part : {&splits.val, &splits.test}) {
        for (const auto& e : *part) positives[e.user_id].push_back(e.item_id);
    }

    std::map<std::string, std::vector<std::string>> out;
    int short_users = 0;
    for (const auto& [user, pos] : positives) {
        const auto& seen = interacted[user];
        std::vector<std::string> eligible;
        eligible.reserve(splits.all_items.size());
        for (const auto& item : splits.all_items) {
            if (!seen.count(item)) eligible.push_back(item);
        }
        SplitMix64 rng(mix_seed(rng_seed, "candidates", fnv1a64(user)));
        auto sampled = sample_without_replacement(std::move(eligible), static_cast<std::size_t>(n), rng);
        if (sampled.size() < static_cast<std::size_t>(n)) {
            ++short_users;
            if (warnings) {
                warnings->push_back("user " + user + ": only " + std::to_string(sampled.size()) +
                                    " eligible candidate negatives (requested " + std::to_string(n) + ")");
            }
        }
        std::vector<std::string> cand = pos;
        cand.insert(cand.end(), sampled.begin(), sampled.end());
        out.emplace(user, std::move(cand));
    }
    (void)short_users;
    return out;
}

std::vector<Interaction> sample_train_negatives(const DatasetSplits& splits,
                                                int ratio,
                                                std::uint64_t rng_seed,
                                                std::vector<std::string>* warnings) {
    if (ratio < 1) {
        throw ValidationError("negative ratio must be >= 1");
    }
    if (splits.eval_candidates.empty()) {
        throw ValidationError("eval candidates must be built before sampling train negatives");
    }
    auto interacted = interacted_by_user(splits);

    std::map<std::string, int> train_count;
    for (const auto& e : splits.train) ++train_count[e.user_id];

    std::vector<Interaction> out;
    for (const auto& [user, count] : train_count) {
        const auto& seen = interacted[user];
        std::set<std::string> excluded = seen;
        if (auto it = splits.eval_candidates.find(user); it != splits.eval_candidates.end()) {
            for (const auto& c : it->second) excluded.insert(c);
        }
        std::vector<std::string> eligible;
        for (const auto& item : splits.all_items) {
            if (!excluded.count(item)) eligible.push_back(item);
        }
        if (eligible.empty()) {
            if (warnings) {
                warnings->push_back("user " + user + ": no eligible train negatives, skipped");
            }
            continue;
        }
        std::size_t want = static_cast<std::size_t>(count) * static_cast<std::size_t>(ratio);
        SplitMix64 rng(mix_seed(rng_seed, "negatives", fnv1a64(user)));
        auto sampled = sample_without_replacement(std::move(eligible), want, rng);
        if (sampled.size() < want && warnings) {
            warnings->push_back("user " + user + ": only " + std::to_string(sampled.size()) +
                                " eligible train negatives (requested " + std::to_string(want) + ")");
        }
        for (auto& item : sampled) {
            out.push_back(Interaction{user, std::move(item), 0, Origin::pseudo_negative});
        }
    }
    return out;
}

void save_splits(const std::filesystem::path& dir, const DatasetSplits& splits) {
    std::filesystem::create_directories(dir);

    std::ostringstream lines;
    auto emit = [&lines](const char* part, const Interaction& e) {
        json j{{"split", part},
               {"user_id", e.user_id},
               {"item_id", e.item_id},
               {"label", e.label},
               {"origin", e.origin == Origin::observed ? "observed" : "pseudo_negative"}};
        lines << j.dump() << '\n';
    };
    for (const auto& e : splits.train) emit("train", e);
    for (const auto& e : splits.val) emit("val", e);
    for (const auto& e : splits.test) emit("test", e);
    write_text_file_atomic(dir / "splits.jsonl", lines.str());

    std::ostringstream cand;
    for (const auto& [user, items] : splits.eval_candidates) {
        cand << user;
        for (const auto& item : items) cand << ',' << item;
        cand << '\n';
    }
    write_text_file_atomic(dir / "candidates.csv", cand.str());

    json meta{{"seed", splits.seed},
              {"all_items", splits.all_items},
              {"counts",
               {{"train", splits.train.size()}, {"val", splits.val.size()}, {"test", splits.test.size()}}},
              {"warnings", splits.warnings}};
    write_text_file_atomic(dir / "meta.json", meta.dump(2) + "\n");
}

DatasetSplits load_splits(const std::filesystem::path& dir) {
    DatasetSplits splits;

    json meta = json::parse(read_text_file(dir / "meta.json"));
    splits.seed = meta.at("seed").get<std::uint64_t>();
    splits.all_items = meta.at("all_items").get<std::vector<std::string>>();
    if (meta.contains("warnings")) {
        splits.warnings = meta["warnings"].get<std::vector<std::string>>();
    }

    std::ifstream in(dir / "splits.jsonl", std::ios::binary);
    if (!in) {
        throw ValidationError("cannot open file: " + (dir / "splits.jsonl").string());
    }
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            throw ParseError((dir / "splits.jsonl").string(), line_no, "invalid JSON");
        }
        Interaction e;
        e.user_id = j.at("user_id").get<std::string>();
        e.item_id = j.at("item_id").get<std::string>();
        e.label = j.at("label").get<int>();
        e.origin = j.at("origin").get<std::string>() == "observed" ? Origin::observed
                                                                   : Origin::pseudo_negative;
        std::string part = j.at("split").get<std::string>();
        if (part == "train") {
            splits.train.push_back(std::move(e));
        } else if (part == "val") {
            splits.val.push_back(std::move(e));
        } else if (part == "test") {
            splits.test.push_back(std::move(e));
        } else {
            throw ParseError((dir / "splits.jsonl").string(), line_no, "unknown split: " + part);
        }
    }

    std::ifstream cand(dir / "candidates.csv", std::ios::binary);
    if (cand) {
        while (std::getline(cand, line)) {
            if (trim(line).empty()) continue;
            auto fields = split_string(line, ',');
            std::vector<std::string> items(fields.begin() + 1, fields.end());
            splits.eval_candidates.emplace(fields[0], std::move(items));
        }
    }
    return splits;
}

void save_items(const std::filesystem::path& path, const std::vector<Item>& items) {
    std::ostringstream lines;
    for (const auto& item : items) {
        json j{{"item_id", item.item_id},
               {"title", item.title},
               {"description", item.description},
               {"image_ref", item.image_ref},
               {"source", source_name(item.source)}};
        lines << j.dump() << '\n';
    }
    std::filesystem::create_directories(path.parent_path());
    write_text_file_atomic(path, lines.str());
}

std::vector<Item> load_items(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ValidationError("cannot open file: " + path.string());
    }
    std::vector<Item> items;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            throw ParseError(path.string(), line_no, "invalid JSON");
        }
        Item item;
        item.item_id = j.at("item_id").get<std::string>();
        item.title = j.value("title", "");
        item.description = j.value("description", "");
        item.image_ref = j.value("image_ref", "");
        item.source = source_from_name(j.value("source", "synthetic"));
        items.push_back(std::move(item));
    }
    return items;
}

}  // namespace xrec::corpus
