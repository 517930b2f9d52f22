#include "cargait/metrics.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace cargait;

namespace {

/// Probe "p" (identity P) with candidates c0..; positives at the given 1-based ranks.
std::pair<RankedList, IdentityTable> list_with_positives(std::size_t length, std::vector<std::size_t> positive_ranks) {
    RankedList list{"p", {}};
    IdentityTable ids{{"p", "P"}};
    for (std::size_t i = 1; i <= length; ++i) {
        const std::string id = "c" + std::to_string(i);
        list.items.push_back({id, static_cast<double>(i)});
        const bool pos = std::find(positive_ranks.begin(), positive_ranks.end(), i) != positive_ranks.end();
        ids[id] = pos ? "P" : "N" + std::to_string(i);
    }
    return {list, ids};
}

/// Random lists over a random labelling: n probes, gallery of g, identities drawn from `labels`.
struct RandomLists {
    std::vector<RankedList> lists;
    IdentityTable ids;
};

RandomLists random_lists(Rng& rng, std::size_t probes, std::size_t gallery, std::size_t labels) {
    RandomLists out;
    for (std::size_t j = 0; j < gallery; ++j) out.ids["g" + std::to_string(j)] = "L" + std::to_string(rng.index(labels));
    for (std::size_t i = 0; i < probes; ++i) {
        const std::string pid = "p" + std::to_string(i);
        out.ids[pid] = "L" + std::to_string(rng.index(labels));
        RankedList list{pid, {}};
        for (std::size_t j = 0; j < gallery; ++j) list.items.push_back({"g" + std::to_string(j), rng.uniform()});
        std::sort(list.items.begin(), list.items.end(), ranks_before);
        out.lists.push_back(std::move(list));
    }
    return out;
}

} // namespace

TEST(RankK, FirstPositionCountsForEveryK) {
    const auto [list, ids] = list_with_positives(10, {1});
    const auto acc = rank_k_accuracy({list}, ids, {1, 5, 10});
    EXPECT_EQ(acc.at(1), 1.0);
    EXPECT_EQ(acc.at(5), 1.0);
    EXPECT_EQ(acc.at(10), 1.0);
}

TEST(RankK, PositiveAtSixMissesRank5HitsRank10) {
    const auto [list, ids] = list_with_positives(10, {6});
    const auto acc = rank_k_accuracy({list}, ids, {5, 10});
    EXPECT_EQ(acc.at(5), 0.0);
    EXPECT_EQ(acc.at(10), 1.0);
}

TEST(RankK, MatchesMembershipScanAndIsMonotone) {
    Rng rng(1);
    const auto r = random_lists(rng, 50, 30, 8);
    const auto acc = rank_k_accuracy(r.lists, r.ids, {1, 2, 3, 5, 10, 30});
    double prev = 0.0;
    for (const auto& [k, value] : acc) {
        std::size_t hits = 0;
        for (const auto& list : r.lists) {
            bool hit = false;
            for (std::size_t j = 0; j < k && j < list.items.size(); ++j)
                hit = hit || r.ids.at(list.items[j].candidate_id) == r.ids.at(list.probe_id);
            hits += hit;
        }
        EXPECT_EQ(value, static_cast<double>(hits) / 50.0);
        EXPECT_GE(value, prev);
        prev = value;
    }
}

TEST(RankK, UnknownIdIsAnError) {
    auto [list, ids] = list_with_positives(3, {3});
    ids.erase("c2");
    EXPECT_THROW(rank_k_accuracy({list}, ids, {3}), Error);
}

TEST(MeanAveragePrecision, HandExamples) {
    const auto [one, ids1] = list_with_positives(5, {1});
    EXPECT_EQ(mean_average_precision({one}, ids1), 1.0);
    const auto [two, ids2] = list_with_positives(5, {1, 3});
    EXPECT_DOUBLE_EQ(mean_average_precision({two}, ids2), 5.0 / 6.0);
}

TEST(MeanAveragePrecision, ProbesWithoutPositivesAreExcluded) {
    auto [a, ids] = list_with_positives(4, {2});
    RankedList b{"q", {{"c1", 1.0}, {"c3", 2.0}}};
    ids["q"] = "Q";
    EXPECT_DOUBLE_EQ(mean_average_precision({a, b}, ids), 0.5);
    EXPECT_THROW(mean_average_precision({b}, ids), Error);
}

TEST(MeanAveragePrecision, MatchesNaiveOracle) {
    Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        const auto r = random_lists(rng, 5, 30, 6);
        double sum = 0;
        std::size_t counted = 0;
        for (const auto& list : r.lists) {
            std::vector<int> rel;
            for (const auto& item : list.items) rel.push_back(r.ids.at(item.candidate_id) == r.ids.at(list.probe_id));
            if (std::count(rel.begin(), rel.end(), 1) == 0) continue;
            sum += oracle::average_precision(rel);
            ++counted;
        }
        if (counted == 0) continue;
        EXPECT_NEAR(mean_average_precision(r.lists, r.ids), sum / static_cast<double>(counted), 1e-12);
    }
}

TEST(AveragePrecision, OneExactlyWhenPositivesLead) {
    const auto [lead, ids1] = list_with_positives(6, {1, 2, 3});
    EXPECT_EQ(average_precision(lead, ids1), 1.0);
    const auto [gap, ids2] = list_with_positives(6, {1, 2, 4});
    EXPECT_LT(average_precision(gap, ids2), 1.0);
}

TEST(TprAtFpr, PerfectSeparationGivesFullTpr) {
    const auto [list, ids] = list_with_positives(10, {1, 2, 3});
    const auto tpr = tpr_at_fpr({list}, ids, 1000, {1e-3, 1e-2, 0.5, 1.0});
    for (const auto& [fpr, value] : tpr) EXPECT_EQ(value, 1.0) << fpr;
}

TEST(TprAtFpr, IdenticalScoresOnlyPassAtFprOne) {
    RankedList list{"p", {{"a", 1.0}, {"b", 1.0}, {"c", 1.0}, {"d", 1.0}}};
    const IdentityTable ids{{"p", "P"}, {"a", "P"}, {"b", "X"}, {"c", "Y"}, {"d", "Z"}};
    const auto tpr = tpr_at_fpr({list}, ids, 1000, {1e-2, 1.0});
    EXPECT_EQ(tpr.at(1e-2), 0.0);
    EXPECT_EQ(tpr.at(1.0), 1.0);
}

TEST(TprAtFpr, MatchesThresholdSweepOracle) {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        // 10 probes x 20 candidates = 200 pooled pairs; coarse distances force ties.
        auto r = random_lists(rng, 10, 20, 4);
        for (auto& list : r.lists) {
            for (auto& item : list.items) item.distance = std::floor(item.distance * 20) / 20;
            std::sort(list.items.begin(), list.items.end(), ranks_before);
        }
        std::vector<std::pair<double, bool>> scored;
        for (const auto& list : r.lists)
            for (const auto& item : list.items)
                scored.emplace_back(-item.distance, r.ids.at(item.candidate_id) == r.ids.at(list.probe_id));
        const bool degenerate = std::all_of(scored.begin(), scored.end(), [&](auto& p) { return p.second; }) ||
                                std::none_of(scored.begin(), scored.end(), [&](auto& p) { return p.second; });
        if (degenerate) continue;
        const std::vector<double> targets{0.0, 1e-2, 0.05, 0.3, 1.0};
        const auto got = tpr_at_fpr(r.lists, r.ids, 1000, targets);
        for (double t : targets) EXPECT_EQ(got.at(t), oracle::tpr_at_fpr(scored, t)) << t;
    }
}

TEST(TprAtFpr, DepthTruncatesThePool) {
    const auto [list, ids] = list_with_positives(10, {1, 9});
    // Depth 3 pools one positive and two negatives; the positive leads.
    EXPECT_EQ(tpr_at_fpr({list}, ids, 3, {0.0}).at(0.0), 1.0);
    EXPECT_EQ(tpr_at_fpr({list}, ids, 10, {0.0}).at(0.0), 0.5);
}

TEST(TprAtFpr, DegeneratePoolsThrow) {
    const auto [list, ids] = list_with_positives(3, {});
    EXPECT_THROW(tpr_at_fpr({list}, ids, 10, {0.01}), Error);
}

TEST(OracleCeiling, DefinitionAndBounds) {
    const auto [late, ids] = list_with_positives(20, {12, 15});
    EXPECT_EQ(oracle_rank1_ceiling({late}, ids, 10), 0.0);
    Rng rng(4);
    const auto r = random_lists(rng, 40, 25, 10);
    const double ceiling = oracle_rank1_ceiling(r.lists, r.ids, 10);
    EXPECT_EQ(ceiling, rank_k_accuracy(r.lists, r.ids, {10}).at(10));
    EXPECT_GE(ceiling, rank_k_accuracy(r.lists, r.ids, {1}).at(1));
}

TEST(StripCosine, SelfHasUnitDiagonal) {
    Rng rng(5);
    const auto a = oracle::random_map(rng, "a", "x", 6, 9);
    const auto m = strip_cosine_matrix(a, a);
    for (int i = 0; i < 6; ++i) EXPECT_NEAR(m(i, i), 1.0, 1e-12);
    EXPECT_LE(m.maxCoeff(), 1.0);
    EXPECT_GE(m.minCoeff(), -1.0);
}

TEST(StripCosine, OrthogonalStripsGiveZeroOffDiagonal) {
    const FeatureMap a{"a", "x", 3, 3, {2, 0, 0, 0, 5, 0, 0, 0, 0.5f}};
    const auto m = strip_cosine_matrix(a, a);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) EXPECT_EQ(m(i, j), i == j ? 1.0 : 0.0);
}

TEST(StripCosine, MatchesDoubleLoopOracle) {
    Rng rng(6);
    const auto a = oracle::random_map(rng, "a", "x", 15, 256);
    const auto b = oracle::random_map(rng, "b", "x", 15, 256);
    const auto m = strip_cosine_matrix(a, b);
    const auto ga = oracle::grid(a), gb = oracle::grid(b);
    for (int i = 0; i < 15; ++i) {
        for (int j = 0; j < 15; ++j) {
            double dot = 0, na = 0, nb = 0;
            for (int c = 0; c < 256; ++c) {
                dot += ga[i][c] * gb[j][c];
                na += ga[i][c] * ga[i][c];
                nb += gb[j][c] * gb[j][c];
            }
            EXPECT_NEAR(m(i, j), dot / std::sqrt(na * nb), 1e-10);
        }
    }
}

TEST(StripCosine, ZeroStripIsAnError) {
    const FeatureMap a{"a", "x", 2, 2, {1, 1, 0, 0}};
    EXPECT_THROW(strip_cosine_matrix(a, a), Error);
}

TEST(MetricsReport, JsonCarriesEveryField) {
    Rng rng(7);
    const auto r = random_lists(rng, 20, 30, 5);
    const auto report = evaluate(r.lists, r.ids, EvalConfig{{1, 5}, {0.01, 0.1}, 1000, 10});
    const auto j = to_json(report);
    EXPECT_EQ(j.at("probe_count"), 20);
    EXPECT_EQ(j.at("rank_k").at("5"), report.rank_k.at(5));
    EXPECT_EQ(j.at("tpr_at_fpr").at("0.01"), report.tpr_at_fpr.at(0.01));
    EXPECT_EQ(j.at("map"), report.map_score);
    EXPECT_EQ(j.at("oracle_rank1_ceiling"), report.oracle_rank1_ceiling);
}
