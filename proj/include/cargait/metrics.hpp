#pragma once

/**
 * @file metrics.hpp
 *
 * @brief Retrieval and verification metrics over ranked lists, plus the
 * strip-by-strip cosine diagnostic.
 */

#include "cargait/error.hpp"
#include "cargait/feature_store.hpp"
#include "cargait/global_ranking.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace cargait {

using IdentityTable = std::unordered_map<std::string, std::string>;

namespace detail {

inline const std::string& identity_of(const IdentityTable& identities, const std::string& sequence_id) {
    auto it = identities.find(sequence_id);
    if (it == identities.end()) {
        fail(ErrorKind::missing_feature, "no identity label for sequence '" + sequence_id + "'");
    }
    return it->second;
}

/// 1-based position of the first same-identity candidate, 0 if none.
inline std::size_t first_hit(const RankedList& list, const IdentityTable& identities) {
    const auto& probe_identity = identity_of(identities, list.probe_id);
    for (std::size_t i = 0; i < list.items.size(); ++i) {
        if (identity_of(identities, list.items[i].candidate_id) == probe_identity) {
            return i + 1;
        }
    }
    return 0;
}

} // namespace detail

/// Fraction of probes with a same-identity candidate within the first K items, per K.
inline std::map<std::size_t, double> rank_k_accuracy(const std::vector<RankedList>& lists,
                                                     const IdentityTable& identities,
                                                     const std::vector<std::size_t>& ks) {
    if (lists.empty()) {
        fail(ErrorKind::empty_input, "rank_k_accuracy: no ranked lists");
    }
    std::vector<std::size_t> hits;
    hits.reserve(lists.size());
    for (const auto& list : lists) {
        hits.push_back(detail::first_hit(list, identities));
    }
    std::map<std::size_t, double> out;
    for (std::size_t k : ks) {
        if (k == 0) {
            fail(ErrorKind::invalid_argument, "rank_k_accuracy: K must be positive");
        }
        const auto n = std::count_if(hits.begin(), hits.end(), [k](std::size_t h) { return h != 0 && h <= k; });
        out[k] = static_cast<double>(n) / static_cast<double>(lists.size());
    }
    return out;
}

/// Average precision of one list: mean over hits of (hits so far / position).
/// Returns -1 when the list holds no positives.
inline double average_precision(const RankedList& list, const IdentityTable& identities) {
    const auto& probe_identity = detail::identity_of(identities, list.probe_id);
    std::size_t hits = 0;
    double sum = 0.0;
    for (std::size_t i = 0; i < list.items.size(); ++i) {
        if (detail::identity_of(identities, list.items[i].candidate_id) == probe_identity) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(i + 1);
        }
    }
    return hits == 0 ? -1.0 : sum / static_cast<double>(hits);
}

/// mAP over probes that have at least one positive. Lists must cover the full gallery.
inline double mean_average_precision(const std::vector<RankedList>& lists, const IdentityTable& identities) {
    double sum = 0.0;
    std::size_t counted = 0;
    for (const auto& list : lists) {
        const double ap = average_precision(list, identities);
        if (ap >= 0.0) {
            sum += ap;
            ++counted;
        }
    }
    if (counted == 0) {
        fail(ErrorKind::empty_input, "mean_average_precision: no probe has a positive in its list");
    }
    return sum / static_cast<double>(counted);
}

/**
 * Verification TPR at each target FPR. Every (probe, candidate) pair within the
 * first `depth` items of each list is pooled with score = -distance. A pair is
 * accepted when its score is >= the threshold; the reported TPR is the highest
 * one reachable by any threshold (including +inf) whose FPR stays <= target.
 */
inline std::map<double, double> tpr_at_fpr(const std::vector<RankedList>& lists, const IdentityTable& identities,
                                           std::size_t depth, const std::vector<double>& fprs) {
    if (depth == 0) {
        fail(ErrorKind::invalid_argument, "tpr_at_fpr: depth must be positive");
    }
    std::vector<std::pair<double, bool>> pool;
    for (const auto& list : lists) {
        const auto& probe_identity = detail::identity_of(identities, list.probe_id);
        const std::size_t n = std::min(depth, list.items.size());
        for (std::size_t i = 0; i < n; ++i) {
            const auto& item = list.items[i];
            pool.emplace_back(-item.distance, detail::identity_of(identities, item.candidate_id) == probe_identity);
        }
    }
    const auto positives = static_cast<std::size_t>(
        std::count_if(pool.begin(), pool.end(), [](const auto& p) { return p.second; }));
    const std::size_t negatives = pool.size() - positives;
    if (positives == 0 || negatives == 0) {
        fail(ErrorKind::empty_input, "tpr_at_fpr: pooled pairs need at least one positive and one negative (got " +
                                         std::to_string(positives) + " / " + std::to_string(negatives) + ")");
    }
    std::sort(pool.begin(), pool.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

    // Operating points after admitting each block of equal scores, starting from threshold +inf.
    std::vector<std::pair<double, double>> points{{0.0, 0.0}}; // (fpr, tpr)
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < pool.size();) {
        std::size_t j = i;
        while (j < pool.size() && pool[j].first == pool[i].first) {
            (pool[j].second ? tp : fp) += 1;
            ++j;
        }
        points.emplace_back(static_cast<double>(fp) / static_cast<double>(negatives),
                            static_cast<double>(tp) / static_cast<double>(positives));
        i = j;
    }
    std::map<double, double> out;
    for (double target : fprs) {
        double best = 0.0;
        for (const auto& [fpr, tpr] : points) {
            if (fpr <= target) {
                best = std::max(best, tpr);
            }
        }
        out[target] = best;
    }
    return out;
}

/// Best Rank-1 any re-ranker of depth k could reach: share of probes with a positive in the top k.
inline double oracle_rank1_ceiling(const std::vector<RankedList>& lists, const IdentityTable& identities,
                                   std::size_t k) {
    return rank_k_accuracy(lists, identities, {k}).at(k);
}

/// Cosine similarity between every strip of `a` and every strip of `b` (s x s).
template <typename DerivedA, typename DerivedB>
Eigen::MatrixXd strip_cosine_matrix(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        fail(ErrorKind::shape, "strip_cosine_matrix: operands are " + std::to_string(a.rows()) + "x" +
                                   std::to_string(a.cols()) + " and " + std::to_string(b.rows()) + "x" +
                                   std::to_string(b.cols()));
    }
    auto normalized = [](const auto& m, const char* side) {
        Eigen::MatrixXd out = m.template cast<double>();
        for (Eigen::Index i = 0; i < out.rows(); ++i) {
            const double norm = out.row(i).norm();
            if (norm == 0.0) {
                fail(ErrorKind::invalid_argument,
                     std::string("strip_cosine_matrix: strip ") + std::to_string(i) + " of " + side + " has zero norm");
            }
            out.row(i) /= norm;
        }
        return out;
    };
    const Eigen::MatrixXd na = normalized(a, "a");
    const Eigen::MatrixXd nb = normalized(b, "b");
    Eigen::MatrixXd out = na * nb.transpose();
    return out.cwiseMax(-1.0).cwiseMin(1.0);
}

inline Eigen::MatrixXd strip_cosine_matrix(const FeatureMap& a, const FeatureMap& b) {
    using Map = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    return strip_cosine_matrix(Map(a.values.data(), static_cast<Eigen::Index>(a.s), static_cast<Eigen::Index>(a.d)),
                               Map(b.values.data(), static_cast<Eigen::Index>(b.s), static_cast<Eigen::Index>(b.d)));
}

inline void save_matrix_csv(const Eigen::MatrixXd& m, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        fail(ErrorKind::io, "cannot open '" + path + "' for writing");
    }
    out.precision(17);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            out << (j ? "," : "") << m(i, j);
        }
        out << '\n';
    }
}

struct EvalConfig {
    std::vector<std::size_t> ks{1, 5, 10};
    std::vector<double> fprs{1e-2};
    std::size_t tpr_depth = 1000;
    std::size_t ceiling_k = 10;
};

struct MetricsReport {
    std::map<std::size_t, double> rank_k;
    double map_score = 0.0;
    std::map<double, double> tpr_at_fpr;
    std::size_t probe_count = 0;
    double oracle_rank1_ceiling = 0.0;
    std::size_t ceiling_k = 10;
};

inline MetricsReport evaluate(const std::vector<RankedList>& lists, const IdentityTable& identities,
                              const EvalConfig& cfg = {}) {
    MetricsReport r;
    r.rank_k = rank_k_accuracy(lists, identities, cfg.ks);
    r.map_score = mean_average_precision(lists, identities);
    r.tpr_at_fpr = tpr_at_fpr(lists, identities, cfg.tpr_depth, cfg.fprs);
    r.probe_count = lists.size();
    r.ceiling_k = cfg.ceiling_k;
    r.oracle_rank1_ceiling = oracle_rank1_ceiling(lists, identities, cfg.ceiling_k);
    return r;
}

inline nlohmann::json to_json(const MetricsReport& r) {
    nlohmann::json rank_k = nlohmann::json::object();
    for (const auto& [k, v] : r.rank_k) {
        rank_k[std::to_string(k)] = v;
    }
    nlohmann::json tpr = nlohmann::json::object();
    for (const auto& [fpr, v] : r.tpr_at_fpr) {
        tpr[nlohmann::json(fpr).dump()] = v;
    }
    return {{"rank_k", rank_k},
            {"map", r.map_score},
            {"tpr_at_fpr", tpr},
            {"probe_count", r.probe_count},
            {"oracle_rank1_ceiling", r.oracle_rank1_ceiling},
            {"ceiling_k", r.ceiling_k}};
}

} // namespace cargait
