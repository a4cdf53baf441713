#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>

#include "xrec/common.hpp"
#include "xrec/corpus.hpp"
#include "xrec/errors.hpp"
#include "xrec/synthetic.hpp"
#include "support/oracles.hpp"
#include "support/test_util.hpp"

using namespace xrec;
using namespace xrec::corpus;
using xrec::test::TempDir;
using xrec::test::write_file;

namespace {

Dataset dataset_from_edges(const std::vector<std::pair<std::string, std::string>>& edges) {
    Dataset ds;
    std::set<std::string> items;
    for (const auto& [u, i] : edges) {
        ds.interactions.push_back(Interaction{u, i, 1, Origin::observed});
        items.insert(i);
    }
    for (const auto& i : items) {
        Item item;
        item.item_id = i;
        item.title = i;
        ds.items.push_back(item);
    }
    return ds;
}

std::set<std::pair<std::string, std::string>> edge_set(const std::vector<Interaction>& edges) {
    std::set<std::pair<std::string, std::string>> out;
    for (const auto& e : edges) out.emplace(e.user_id, e.item_id);
    return out;
}

}  // namespace

TEST_CASE("movielens parser reads the :: record format") {
    TempDir tmp("xrec_ml");
    write_file(tmp / "ratings.dat", "1::1193::5::978300760\n2::1193::4::978300761\n");
    write_file(tmp / "posters.csv", "item_id,url\n1193,http://img/1193.jpg\n");
    write_file(tmp / "descriptions.csv", "item_id,description\n1193,\"A drama, widely praised.\"\n");

    Dataset ds = parse_movielens(tmp / "ratings.dat", tmp / "posters.csv", tmp / "descriptions.csv");
    REQUIRE(ds.ratings.size() == 2);
    CHECK(ds.ratings[0].user_id == "1");
    CHECK(ds.ratings[0].item_id == "1193");
    CHECK(ds.ratings[0].value == 5.0);
    CHECK(ds.ratings[0].timestamp == 978300760);
    REQUIRE(ds.items.size() == 1);
    CHECK(ds.items[0].image_ref == "http://img/1193.jpg");
    CHECK(ds.items[0].description == "A drama, widely praised.");
    CHECK(ds.items[0].source == Source::movielens);
}

TEST_CASE("movielens parser: empty ratings file") {
    TempDir tmp("xrec_ml_empty");
    write_file(tmp / "ratings.dat", "");
    write_file(tmp / "posters.csv", "item_id,url\n");
    write_file(tmp / "descriptions.csv", "item_id,description\n");
    Dataset ds = parse_movielens(tmp / "ratings.dat", tmp / "posters.csv", tmp / "descriptions.csv");
    CHECK(ds.ratings.empty());
    CHECK(ds.items.empty());
    CHECK(to_implicit(ds.ratings).empty());
}

TEST_CASE("movielens parser names the malformed line") {
    TempDir tmp("xrec_ml_bad");
    write_file(tmp / "ratings.dat",
               "1::10::5::100\n1::11::4::101\n2::10::3::102\n2::11::oops\n");
    write_file(tmp / "posters.csv", "item_id,url\n");
    write_file(tmp / "descriptions.csv", "item_id,description\n");
    try {
        parse_movielens(tmp / "ratings.dat", tmp / "posters.csv", tmp / "descriptions.csv");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 4);
        CHECK(std::string(e.what()).find(":4:") != std::string::npos);
    }
}

TEST_CASE("movielens parser keeps the last duplicate and counts it") {
    TempDir tmp("xrec_ml_dup");
    write_file(tmp / "ratings.dat", "1::10::5::100\n1::10::2::200\n");
    write_file(tmp / "posters.csv", "item_id,url\n");
    write_file(tmp / "descriptions.csv", "item_id,description\n");
    Dataset ds = parse_movielens(tmp / "ratings.dat", tmp / "posters.csv", tmp / "descriptions.csv");
    REQUIRE(ds.ratings.size() == 1);
    CHECK(ds.ratings[0].value == 2.0);
    CHECK(ds.duplicate_rating_count == 1);
    CHECK(!ds.warnings.empty());
}

TEST_CASE("amazon parser joins list descriptions with single spaces") {
    TempDir tmp("xrec_az");
    write_file(tmp / "meta.jsonl",
               R"({"asin":"B01","title":"Tool","description":["a","b"],"imageURL":["http://img/1.jpg","http://img/2.jpg"]})"
               "\n");
    write_file(tmp / "reviews.jsonl",
               R"({"reviewerID":"u1","asin":"B01","overall":4.0,"unixReviewTime":1500000000})"
               "\n");
    Dataset ds = parse_amazon(tmp / "meta.jsonl", tmp / "reviews.jsonl");
    REQUIRE(ds.items.size() == 1);
    CHECK(ds.items[0].description == "a b");
    CHECK(ds.items[0].image_ref == "http://img/1.jpg");  // first URL wins
    REQUIRE(ds.ratings.size() == 1);
    CHECK(ds.ratings[0].value == 4.0);
}

TEST_CASE("amazon parser creates stubs for unknown review items") {
    TempDir tmp("xrec_az_stub");
    write_file(tmp / "meta.jsonl", "");
    write_file(tmp / "reviews.jsonl", R"({"reviewerID":"u1","asin":"B09","overall":5.0})"
                                      "\n");
    Dataset ds = parse_amazon(tmp / "meta.jsonl", tmp / "reviews.jsonl");
    REQUIRE(ds.items.size() == 1);
    CHECK(ds.items[0].item_id == "B09");
    CHECK(ds.items[0].description.empty());
    CHECK(ds.ratings.size() == 1);
}

TEST_CASE("amazon parser: zero-byte metadata yields zero items") {
    TempDir tmp("xrec_az_empty");
    write_file(tmp / "meta.jsonl", "");
    write_file(tmp / "reviews.jsonl", "");
    Dataset ds = parse_amazon(tmp / "meta.jsonl", tmp / "reviews.jsonl");
    CHECK(ds.items.empty());
    CHECK(ds.ratings.empty());
}

TEST_CASE("amazon parser flags invalid JSON lines and counts skipped metadata") {
    TempDir tmp("xrec_az_bad");
    write_file(tmp / "meta.jsonl", R"({"title":"no id"})"
                                   "\n{not json\n");
    write_file(tmp / "reviews.jsonl", "");
    try {
        parse_amazon(tmp / "meta.jsonl", tmp / "reviews.jsonl");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }

    write_file(tmp / "meta2.jsonl", R"({"title":"no id"})"
                                    "\n");
    Dataset ds = parse_amazon(tmp / "meta2.jsonl", tmp / "reviews.jsonl");
    CHECK(ds.items.empty());
    CHECK(ds.skipped_metadata_count == 1);
}

TEST_CASE("to_implicit labels every rating 1 and collapses duplicates") {
    std::vector<Rating> ratings = {{"u", "i", 1.0, 0}, {"u", "j", 5.0, 0}};
    auto inter = to_implicit(ratings);
    REQUIRE(inter.size() == 2);
    for (const auto& e : inter) {
        CHECK(e.label == 1);
        CHECK(e.origin == Origin::observed);
    }

    std::vector<Rating> dup = {{"u", "i", 3.0, 0}, {"u", "i", 4.0, 0}};
    CHECK(to_implicit(dup).size() == 1);
}

TEST_CASE("k-core: fixpoint inputs pass through unchanged") {
    auto ds = dataset_from_edges({{"u1", "i1"}, {"u1", "i2"}, {"u2", "i1"}, {"u2", "i2"}});
    auto out = k_core_filter(ds, 2);
    CHECK(edge_set(out.interactions) == edge_set(ds.interactions));
}

TEST_CASE("k-core: chain cascade matches the removal oracle") {
    auto ds = dataset_from_edges({{"u1", "i1"}, {"u1", "i2"}, {"u2", "i2"}});
    auto expected = xrec::test::kcore_oracle(ds.interactions, 2);
    if (expected.empty()) {
        CHECK_THROWS_AS(k_core_filter(ds, 2), ValidationError);
    } else {
        auto out = k_core_filter(ds, 2);
        CHECK(edge_set(out.interactions) == edge_set(expected));
    }
}

TEST_CASE("k-core: k=1 removes nothing") {
    auto ds = dataset_from_edges({{"u1", "i1"}, {"u2", "i2"}, {"u3", "i1"}});
    auto out = k_core_filter(ds, 1);
    CHECK(edge_set(out.interactions) == edge_set(ds.interactions));
}

TEST_CASE("k-core equals the oracle on random graphs and is a fixpoint") {
    SplitMix64 rng(42);
    for (int trial = 0; trial < 10; ++trial) {
        std::set<std::pair<std::string, std::string>> edges;
        int n_edges = 20 + static_cast<int>(rng.next_below(180));
        while (static_cast<int>(edges.size()) < n_edges) {
            edges.emplace("u" + std::to_string(rng.next_below(25)),
                          "i" + std::to_string(rng.next_below(25)));
        }
        Dataset ds = dataset_from_edges({edges.begin(), edges.end()});
        auto expected = xrec::test::kcore_oracle(ds.interactions, 3);
        if (expected.empty()) {
            CHECK_THROWS_AS(k_core_filter(ds, 3), ValidationError);
            continue;
        }
        auto out = k_core_filter(ds, 3);
        CHECK(edge_set(out.interactions) == edge_set(expected));
        auto again = k_core_filter(out, 3);
        CHECK(edge_set(again.interactions) == edge_set(out.interactions));
    }
}

TEST_CASE("split_per_user respects the ratio presets") {
    Dataset ds;
    for (int i = 0; i < 10; ++i) {
        ds.interactions.push_back(Interaction{"u", "i" + std::to_string(i), 1, Origin::observed});
        Item item;
        item.item_id = "i" + std::to_string(i);
        ds.items.push_back(item);
    }
    auto splits = split_per_user(ds, SplitRatios{0.8, 0.1, 0.1}, 3);
    CHECK(splits.train.size() == 8);
    CHECK(splits.val.size() == 1);
    CHECK(splits.test.size() == 1);

    Dataset five;
    for (int i = 0; i < 5; ++i) {
        five.interactions.push_back(Interaction{"u", "i" + std::to_string(i), 1, Origin::observed});
        Item item;
        item.item_id = "i" + std::to_string(i);
        five.items.push_back(item);
    }
    auto s2 = split_per_user(five, SplitRatios{0.6, 0.2, 0.2}, 3);
    CHECK(s2.train.size() == 3);
    CHECK(s2.val.size() == 1);
    CHECK(s2.test.size() == 1);
}

TEST_CASE("split_per_user: same seed gives identical partitions, partitions cover") {
    SyntheticSpec spec;
    spec.n_users = 12;
    spec.n_items = 40;
    spec.positives_per_user = 8;
    spec.embed_dim = 8;
    Dataset ds = make_synthetic_dataset(spec);

    auto a = split_per_user(ds, SplitRatios{0.8, 0.1, 0.1}, 99);
    auto b = split_per_user(ds, SplitRatios{0.8, 0.1, 0.1}, 99);
    CHECK(edge_set(a.train) == edge_set(b.train));
    CHECK(edge_set(a.val) == edge_set(b.val));
    CHECK(edge_set(a.test) == edge_set(b.test));

    // Union and disjointness per user.
    auto all = edge_set(a.train);
    for (const auto& e : a.val) CHECK(all.insert({e.user_id, e.item_id}).second);
    for (const auto& e : a.test) CHECK(all.insert({e.user_id, e.item_id}).second);
    CHECK(all == edge_set(ds.interactions));

    std::map<std::string, int> val_count, test_count;
    for (const auto& e : a.val) ++val_count[e.user_id];
    for (const auto& e : a.test) ++test_count[e.user_id];
    for (int u = 0; u < spec.n_users; ++u) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "u%04d", u);
        CHECK(val_count[buf] >= 1);
        CHECK(test_count[buf] >= 1);
    }
}

TEST_CASE("split_per_user rejects users with fewer than 3 interactions") {
    Dataset ds = dataset_from_edges({{"u1", "i1"}, {"u1", "i2"}});
    CHECK_THROWS_AS(split_per_user(ds, SplitRatios{0.8, 0.1, 0.1}, 1), ValidationError);
}

TEST_CASE("eval candidates: size, n=0 case, and per-user independent sampling") {
    SyntheticSpec spec;
    spec.n_users = 10;
    spec.n_items = 50;
    spec.positives_per_user = 6;
    spec.embed_dim = 8;
    Dataset ds = make_synthetic_dataset(spec);
    auto splits = split_per_user(ds, SplitRatios{0.6, 0.2, 0.2}, 5);

    std::map<std::string, std::set<std::string>> interacted;
    for (const auto* part : {&splits.train, &splits.val, &splits.test}) {
        for (const auto& e : *part) interacted[e.user_id].insert(e.item_id);
    }
    std::map<std::string, int> positives;
    for (const auto* part : {&splits.val, &splits.test}) {
        for (const auto& e : *part) ++positives[e.user_id];
    }

    auto cands = build_eval_candidates(splits, 20, 5);
    for (const auto& [user, list] : cands) {
        std::size_t eligible = splits.all_items.size() - interacted[user].size();
        CHECK(list.size() ==
              static_cast<std::size_t>(positives[user]) + std::min<std::size_t>(20, eligible));
        // No sampled candidate may be an interacted item, except the positives up front.
        std::set<std::string> seen;
        for (std::size_t i = 0; i < list.size(); ++i) {
            CHECK(seen.insert(list[i]).second);  // no duplicates
            if (i >= static_cast<std::size_t>(positives[user])) {
                CHECK(!interacted[user].count(list[i]));
            }
        }
    }

    auto zero = build_eval_candidates(splits, 0, 5);
    for (const auto& [user, list] : zero) {
        CHECK(list.size() == static_cast<std::size_t>(positives[user]));
    }

    // Same seed reproduces; different users draw independently.
    auto again = build_eval_candidates(splits, 20, 5);
    CHECK(again == cands);
    auto it = cands.begin();
    auto first = it->second;
    ++it;
    CHECK(it->second != first);
}

TEST_CASE("eval candidates at catalog scale: 3 positives + 1000 sampled = 1003") {
    DatasetSplits splits;
    splits.seed = 1;
    for (int i = 0; i < 1729; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "i%04d", i);
        splits.all_items.push_back(buf);
    }
    // One user: 5 train, 1 val, 2 test positives.
    for (int i = 0; i < 5; ++i) {
        splits.train.push_back(Interaction{"u1", splits.all_items[static_cast<std::size_t>(i)], 1,
                                           Origin::observed});
    }
    splits.val.push_back(Interaction{"u1", splits.all_items[5], 1, Origin::observed});
    splits.test.push_back(Interaction{"u1", splits.all_items[6], 1, Origin::observed});
    splits.test.push_back(Interaction{"u1", splits.all_items[7], 1, Origin::observed});

    auto cands = build_eval_candidates(splits, 1000, 1);
    REQUIRE(cands.count("u1") == 1);
    CHECK(cands.at("u1").size() == 1003);
}

TEST_CASE("eval candidates warn when the catalog runs short") {
    Dataset ds = dataset_from_edges(
        {{"u1", "i1"}, {"u1", "i2"}, {"u1", "i3"}, {"u2", "i1"}, {"u2", "i2"}, {"u2", "i3"}});
    auto splits = split_per_user(ds, SplitRatios{0.34, 0.33, 0.33}, 1);
    std::vector<std::string> warnings;
    auto cands = build_eval_candidates(splits, 1000, 1, &warnings);
    CHECK(!warnings.empty());
    for (const auto& [user, list] : cands) {
        CHECK(list.size() < 1000);
    }
}

TEST_CASE("train negatives: counts, labels, and disjointness from eval candidates") {
    SyntheticSpec spec;
    spec.n_users = 15;
    spec.n_items = 60;
    spec.positives_per_user = 8;
    spec.embed_dim = 8;
    Dataset ds = make_synthetic_dataset(spec);
    auto splits = split_per_user(ds, SplitRatios{0.8, 0.1, 0.1}, 2);
    splits.eval_candidates = build_eval_candidates(splits, 15, 2);

    auto negs = sample_train_negatives(splits, 1, 2);
    std::map<std::string, int> train_count, neg_count;
    for (const auto& e : splits.train) ++train_count[e.user_id];
    for (const auto& e : negs) {
        CHECK(e.label == 0);
        CHECK(e.origin == Origin::pseudo_negative);
        ++neg_count[e.user_id];
    }

    std::map<std::string, std::set<std::string>> interacted;
    for (const auto* part : {&splits.train, &splits.val, &splits.test}) {
        for (const auto& e : *part) interacted[e.user_id].insert(e.item_id);
    }
    for (const auto& e : negs) {
        CHECK(!interacted[e.user_id].count(e.item_id));
        const auto& cand = splits.eval_candidates.at(e.user_id);
        CHECK(std::find(cand.begin(), cand.end(), e.item_id) == cand.end());
    }

    for (const auto& [user, c] : train_count) {
        CHECK(neg_count[user] <= c);
        CHECK(neg_count[user] >= 1);
    }

    // ratio=2 doubles the request.
    auto negs2 = sample_train_negatives(splits, 2, 2);
    CHECK(negs2.size() >= negs.size());
}

TEST_CASE("train negatives: forced single choice") {
    // User u1 interacted with every item except i9; candidates add nothing (n=0).
    std::vector<std::pair<std::string, std::string>> edges;
    for (int i = 0; i < 9; ++i) edges.emplace_back("u1", "i" + std::to_string(i));
    for (int i = 0; i < 9; ++i) edges.emplace_back("u2", "i" + std::to_string(i));
    auto ds = dataset_from_edges(edges);
    Item extra;
    extra.item_id = "i9";
    extra.title = "i9";
    ds.items.push_back(extra);

    auto splits = split_per_user(ds, SplitRatios{0.8, 0.1, 0.1}, 4);
    splits.eval_candidates = build_eval_candidates(splits, 0, 4);
    auto negs = sample_train_negatives(splits, 1, 4);
    REQUIRE(!negs.empty());
    for (const auto& e : negs) CHECK(e.item_id == "i9");
}

TEST_CASE("train negatives: user with no eligible items is skipped with a warning") {
    std::vector<std::pair<std::string, std::string>> edges;
    for (int i = 0; i < 6; ++i) edges.emplace_back("u1", "i" + std::to_string(i));
    for (int i = 0; i < 6; ++i) edges.emplace_back("u2", "i" + std::to_string(i));
    auto ds = dataset_from_edges(edges);  // both users saw the whole catalog

    auto splits = split_per_user(ds, SplitRatios{0.8, 0.1, 0.1}, 4);
    splits.eval_candidates = build_eval_candidates(splits, 0, 4);
    std::vector<std::string> warnings;
    auto negs = sample_train_negatives(splits, 1, 4, &warnings);
    CHECK(negs.empty());
    CHECK(warnings.size() == 2);
}

TEST_CASE("splits serialization round-trips") {
    SyntheticSpec spec;
    spec.n_users = 8;
    spec.n_items = 30;
    spec.positives_per_user = 6;
    spec.embed_dim = 8;
    Dataset ds = make_synthetic_dataset(spec);
    auto splits = split_per_user(ds, SplitRatios{0.8, 0.1, 0.1}, 11);
    splits.eval_candidates = build_eval_candidates(splits, 10, 11);

    TempDir tmp("xrec_splits");
    save_splits(tmp.path(), splits);
    auto loaded = load_splits(tmp.path());
    CHECK(loaded.seed == splits.seed);
    CHECK(edge_set(loaded.train) == edge_set(splits.train));
    CHECK(edge_set(loaded.val) == edge_set(splits.val));
    CHECK(edge_set(loaded.test) == edge_set(splits.test));
    CHECK(loaded.eval_candidates == splits.eval_candidates);
    CHECK(loaded.all_items == splits.all_items);

    save_items(tmp / "items.jsonl", ds.items);
    auto items = load_items(tmp / "items.jsonl");
    REQUIRE(items.size() == ds.items.size());
    CHECK(items[0].item_id == ds.items[0].item_id);
    CHECK(items[0].description == ds.items[0].description);
}
