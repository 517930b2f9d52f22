#include "cargait/global_ranking.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace cargait;

TEST(StripDistance, IdenticalMapsAreZero) {
    Rng rng(1);
    const auto a = oracle::random_map(rng, "a", "x", 5, 7);
    EXPECT_EQ(strip_distance(a, a), 0.0);
}

TEST(StripDistance, HandExample) {
    const FeatureMap a{"a", "x", 2, 1, {0.0f, 0.0f}};
    const FeatureMap b{"b", "y", 2, 1, {3.0f, 4.0f}};
    EXPECT_EQ(strip_distance(a, b), 3.5);
}

TEST(StripDistance, MatchesPerStripOracle) {
    Rng rng(2);
    for (int i = 0; i < 200; ++i) {
        const auto a = oracle::random_map(rng, "a", "x", 5, 7);
        const auto b = oracle::random_map(rng, "b", "x", 5, 7);
        const double want = oracle::strip_distance(oracle::grid(a), oracle::grid(b));
        EXPECT_NEAR(strip_distance(a, b), want, 1e-12 * want);
    }
}

TEST(StripDistance, MetricAxioms) {
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        const auto a = oracle::random_map(rng, "a", "x", 4, 3);
        const auto b = oracle::random_map(rng, "b", "x", 4, 3);
        const auto c = oracle::random_map(rng, "c", "x", 4, 3);
        EXPECT_EQ(strip_distance(a, b), strip_distance(b, a));
        EXPECT_GT(strip_distance(a, b), 0.0);
        EXPECT_LE(strip_distance(a, c), strip_distance(a, b) + strip_distance(b, c) + 1e-12);
    }
}

TEST(StripDistance, ShapeMismatchThrows) {
    const FeatureMap a{"a", "x", 2, 1, {0.0f, 0.0f}};
    const FeatureMap b{"b", "y", 1, 2, {3.0f, 4.0f}};
    try {
        strip_distance(a, b);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::shape);
    }
}

TEST(RankGallery, SingleCandidate) {
    Rng rng(4);
    FeatureSet gallery{3, 2, Partition::gallery, {oracle::random_map(rng, "g", "x", 3, 2)}};
    const auto probe = oracle::random_map(rng, "p", "y", 3, 2);
    EXPECT_EQ(rank_gallery(probe, gallery, 10).items.size(), 1u);
}

TEST(RankGallery, KeepsTheTwoSmallestInOrder) {
    const FeatureMap probe{"p", "x", 1, 1, {0.0f}};
    FeatureSet gallery{1, 1, Partition::gallery,
                       {{"c2", "a", 1, 1, {2.0f}}, {"c1", "b", 1, 1, {1.0f}}, {"c3", "c", 1, 1, {3.0f}}}};
    const auto list = rank_gallery(probe, gallery, 2);
    ASSERT_EQ(list.items.size(), 2u);
    EXPECT_EQ(list.items[0], (RankedItem{"c1", 1.0}));
    EXPECT_EQ(list.items[1], (RankedItem{"c2", 2.0}));
}

TEST(RankGallery, TiesOrderedBySequenceId) {
    const FeatureMap probe{"p", "x", 1, 1, {0.0f}};
    FeatureSet gallery{1, 1, Partition::gallery, {{"zeta", "a", 1, 1, {1.0f}}, {"alpha", "b", 1, 1, {-1.0f}}}};
    const auto list = rank_gallery(probe, gallery, 2);
    EXPECT_EQ(list.items[0].candidate_id, "alpha");
    EXPECT_EQ(list.items[1].candidate_id, "zeta");
}

TEST(RankGallery, ExcludesProbeAndRejectsEmptyGallery) {
    Rng rng(5);
    const auto probe = oracle::random_map(rng, "p", "x", 2, 2);
    FeatureSet gallery{2, 2, Partition::gallery, {probe}};
    try {
        rank_gallery(probe, gallery, 3);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::empty_input);
    }
    gallery.entries.push_back(oracle::random_map(rng, "q", "x", 2, 2));
    const auto list = rank_gallery(probe, gallery, 3);
    ASSERT_EQ(list.items.size(), 1u);
    EXPECT_EQ(list.items[0].candidate_id, "q");
}

TEST(RankGallery, ZeroKIsInvalid) {
    Rng rng(6);
    const auto probe = oracle::random_map(rng, "p", "x", 2, 2);
    FeatureSet gallery{2, 2, Partition::gallery, {oracle::random_map(rng, "q", "x", 2, 2)}};
    EXPECT_THROW(rank_gallery(probe, gallery, 0), Error);
}

TEST(RankAll, MatchesBruteForceOracle) {
    Rng rng(7);
    auto gallery = random_set(rng, 10, 5, 3, 4);
    auto probes = random_set(rng, 4, 5, 3, 4);
    for (auto& p : probes.entries) p.sequence_id = "probe_" + p.sequence_id;
    const auto lists = rank_all(probes, gallery, 10);
    ASSERT_EQ(lists.size(), 20u);
    for (std::size_t i = 0; i < lists.size(); ++i) {
        EXPECT_EQ(lists[i], rank_gallery(probes.entries[i], gallery, 10));
        const auto want = oracle::rank(probes.entries[i], gallery, 10);
        ASSERT_EQ(lists[i].items.size(), want.size());
        for (std::size_t j = 0; j < want.size(); ++j) {
            EXPECT_EQ(lists[i].items[j].candidate_id, want[j].first);
            EXPECT_NEAR(lists[i].items[j].distance, want[j].second, 1e-12);
        }
    }
}

TEST(RankAll, EmptyProbesGiveEmptyResult) {
    Rng rng(8);
    const auto gallery = random_set(rng, 2, 2, 2, 2);
    EXPECT_TRUE(rank_all(FeatureSet{2, 2, Partition::probe, {}}, gallery, 5).empty());
}

TEST(RankAll, PrefixOfFullSortAndThreadIndependent) {
    Rng rng(9);
    const auto set = random_set(rng, 12, 4, 2, 3);
    const auto full = rank_all(set, set, set.size());
    const auto top = rank_all(set, set, 7, 3);
    for (std::size_t i = 0; i < set.size(); ++i) {
        ASSERT_EQ(top[i].items.size(), 7u);
        for (std::size_t j = 0; j < 7; ++j) EXPECT_EQ(top[i].items[j], full[i].items[j]);
        for (std::size_t j = 1; j < full[i].items.size(); ++j)
            EXPECT_LE(full[i].items[j - 1].distance, full[i].items[j].distance);
    }
}

TEST(RankAll, ErrorsNameTheProbe) {
    Rng rng(10);
    FeatureSet probes{2, 2, Partition::probe, {oracle::random_map(rng, "lonely", "x", 2, 2)}};
    try {
        rank_all(probes, probes, 3);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("lonely"), std::string::npos);
    }
}

TEST(RankedListsJson, RoundTripWithExtraFields) {
    TempDir dir;
    Rng rng(11);
    const auto set = random_set(rng, 3, 3, 2, 2);
    const auto lists = rank_all(set, set, 4);
    save_ranked_lists(lists, dir.file("l.jsonl"), {nlohmann::json{{"latency_ms", 1.5}}});
    EXPECT_EQ(load_ranked_lists(dir.file("l.jsonl")), lists);
}
