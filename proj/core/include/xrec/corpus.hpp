#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace xrec::corpus {

enum class Source { movielens, amazon, synthetic };

std::string source_name(Source s);
Source source_from_name(const std::string& name);

struct Item {
    std::string item_id;
    std::string title;
    std::string description;  // may be empty
    std::string image_ref;    // URI or local path; empty means absent
    Source source = Source::synthetic;
};

struct Rating {
    std::string user_id;
    std::string item_id;
    double value = 0.0;
    std::int64_t timestamp = 0;  // parsed but unused (splits are random, not temporal)
};

enum class Origin { observed, pseudo_negative };

struct Interaction {
    std::string user_id;
    std::string item_id;
    int label = 1;
    Origin origin = Origin::observed;
};

struct Dataset {
    Source source = Source::synthetic;
    std::vector<Item> items;
    std::vector<Rating> ratings;
    std::vector<Interaction> interactions;  // implicit feedback, filled by to_implicit
    std::vector<std::string> warnings;
    int duplicate_rating_count = 0;
    int skipped_metadata_count = 0;
};

struct SplitRatios {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

struct DatasetSplits {
    std::vector<Interaction> train;  // observed positives
    std::vector<Interaction> val;    // observed only
    std::vector<Interaction> test;   // observed only
    std::map<std::string, std::vector<std::string>> eval_candidates;
    std::vector<std::string> all_items;  // catalog at split time, sorted
    std::uint64_t seed = 0;
    std::vector<std::string> warnings;
};

// MovieLens ratings use UserID::MovieID::Rating::Timestamp records; the
// posters and descriptions sidecars are two-column CSV (id,value) with a
// header row. Malformed lines raise ParseError with the line number;
// duplicate (user,movie) ratings keep the last occurrence and are counted.
Dataset parse_movielens(const std::filesystem::path& ratings_path,
                        const std::filesystem::path& posters_path,
                        const std::filesystem::path& descriptions_path);

// Amazon metadata and reviews are JSON-lines. List-valued descriptions are
// joined with single spaces; the first image URL becomes image_ref. Reviews
// for items absent from metadata keep the interaction and create a stub item.
Dataset parse_amazon(const std::filesystem::path& metadata_path,
                     const std::filesystem::path& reviews_path);

// Every rating, regardless of value, becomes one observed interaction with
// label 1; duplicate (user,item) pairs collapse to one.
std::vector<Interaction> to_implicit(const std::vector<Rating>& ratings);

// Iteratively removes users with fewer than k items and items with fewer
// than k unique users until a fixpoint. Throws ValidationError if nothing
// survives.
Dataset k_core_filter(const Dataset& dataset, int k);

// Per-user random partition. Val and test each receive max(1, round(ratio*n))
// interactions, train the remainder. Users with fewer than 3 interactions are
// an error (cannot give one to each partition).
DatasetSplits split_per_user(const Dataset& dataset, const SplitRatios& ratios, std::uint64_t seed);

// Per user present in val or test: that user's val/test positives plus up to
// n sampled items the user never interacted with in any split. Sampling is
// seeded independently per user.
std::map<std::string, std::vector<std::string>> build_eval_candidates(const DatasetSplits& splits,
                                                                      int n,
                                                                      std::uint64_t rng_seed,
                                                                      std::vector<std::string>* warnings = nullptr);

// Per train positive, `ratio` pseudo-negatives drawn uniformly from items the
// user never interacted with and that are not in the user's eval candidate
// set. Requires eval_candidates to be populated.
std::vector<Interaction> sample_train_negatives(const DatasetSplits& splits,
                                                int ratio,
                                                std::uint64_t rng_seed,
                                                std::vector<std::string>* warnings = nullptr);

// Serialization: splits.jsonl (one interaction per line), candidates.csv
// (user_id followed by comma-joined item ids) and meta.json.
void save_splits(const std::filesystem::path& dir, const DatasetSplits& splits);
DatasetSplits load_splits(const std::filesystem::path& dir);

void save_items(const std::filesystem::path& path, const std::vector<Item>& items);
std::vector<Item> load_items(const std::filesystem::path& path);

}  // namespace xrec::corpus
