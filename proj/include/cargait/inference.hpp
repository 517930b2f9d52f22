#pragma once

/**
 * @file inference.hpp
 *
 * @brief Re-ranking of the top-K of an initial ranking, spliced onto the
 * untouched tail.
 */

#include "cargait/error.hpp"
#include "cargait/feature_store.hpp"
#include "cargait/global_ranking.hpp"
#include "cargait/parallel.hpp"
#include "cargait/reranker.hpp"

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <string>
#include <vector>

namespace cargait {

namespace detail {

/**
 * Reorders the first min(k, n) items by ascending `key` (ties by candidate id)
 * and stores `shown` for each as its distance. When a tail follows, the shown
 * values are scaled by first_tail / max(shown) so the whole list stays
 * nondecreasing. `shown` must be nonnegative and nondecreasing in `key`.
 * A one-item prefix has nothing to reorder and is returned as is.
 */
inline RankedList splice_prefix(const RankedList& initial, std::size_t k, const std::vector<double>& key,
                                const std::vector<double>& shown) {
    const std::size_t n = std::min(k, initial.items.size());
    if (n == 1) {
        return initial;
    }
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = i;
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (key[a] != key[b]) {
            return key[a] < key[b];
        }
        return initial.items[a].candidate_id < initial.items[b].candidate_id;
    });

    RankedList out{initial.probe_id, initial.items};
    double top = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        top = std::max(top, shown[i]);
    }
    const bool has_tail = n < initial.items.size();
    const double tail_start = has_tail ? initial.items[n].distance : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t src = order[i];
        double value = shown[src];
        if (has_tail) {
            value = top > 0.0 ? tail_start * (value / top) : 0.0;
        }
        out.items[i] = {initial.items[src].candidate_id, value};
    }
    return out;
}

inline void check_rerank_args(const RankedList& initial, std::size_t k) {
    if (k == 0) {
        fail(ErrorKind::invalid_argument, "rerank: k must be positive");
    }
    if (initial.items.empty()) {
        fail(ErrorKind::empty_input, "rerank: initial list for probe '" + initial.probe_id + "' is empty");
    }
}

} // namespace detail

/// Re-orders the first k candidates by re-rank distance; later items are copied unchanged.
template <typename T>
RankedList rerank(const FeatureMap& probe, const RankedList& initial, std::size_t k, const RerankerWeights<T>& weights,
                  const FeatureIndex& features) {
    detail::check_rerank_args(initial, k);
    const std::size_t n = std::min(k, initial.items.size());
    std::vector<double> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
        dist[i] = rerank_distance<T>(probe, features.at(initial.items[i].candidate_id), weights);
    }
    return detail::splice_prefix(initial, k, dist, dist);
}

struct RerankOutput {
    std::vector<RankedList> lists;
    std::vector<double> latency_ms; ///< per probe
    std::size_t pair_evaluations = 0;
};

/**
 * Re-ranks every list, in order. `score_list(probe, list)` does one probe; the
 * probe's features are looked up by the list's probe id.
 */
template <typename ScoreList>
RerankOutput rerank_lists(const std::vector<RankedList>& initial, std::size_t k, const FeatureIndex& features,
                          std::size_t threads, ScoreList&& score_list) {
    RerankOutput out;
    out.lists.resize(initial.size());
    out.latency_ms.resize(initial.size());
    parallel_for(initial.size(), threads, [&](std::size_t i) {
        const auto start = std::chrono::steady_clock::now();
        try {
            out.lists[i] = score_list(features.at(initial[i].probe_id), initial[i]);
        } catch (const Error& e) {
            throw Error(e.kind(), "probe '" + initial[i].probe_id + "': " + e.what());
        }
        out.latency_ms[i] =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    });
    for (const auto& list : initial) {
        out.pair_evaluations += std::min(k, list.items.size());
    }
    return out;
}

template <typename T>
RerankOutput rerank_all(const std::vector<RankedList>& initial, std::size_t k, const RerankerWeights<T>& weights,
                        const FeatureIndex& features, std::size_t threads = 1) {
    return rerank_lists(initial, k, features, threads, [&](const FeatureMap& probe, const RankedList& list) {
        return rerank<T>(probe, list, k, weights, features);
    });
}

} // namespace cargait
