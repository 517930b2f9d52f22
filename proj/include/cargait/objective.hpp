#pragma once

/**
 * @file objective.hpp
 *
 * @brief Damped pairwise ranking loss, cross-entropy regularizer, and the
 * batched forward/backward pass over triplets.
 *
 * For a triplet (p, pos, neg) with re-rank distances d_pos, d_neg:
 *
 *     L* = -log sigmoid(d_neg - d_pos)
 *     L  = beta * L*   if d_neg >= d_pos   (already correctly ranked)
 *        = L*          otherwise
 *
 * The batch objective is sum_i L_i + alpha * mean CE, the CE mean taken over
 * the four attended maps of every triplet (E_p and E_pos from the positive
 * pair, E_p and E_neg from the negative pair).
 */

#include "cargait/error.hpp"
#include "cargait/feature_store.hpp"
#include "cargait/parallel.hpp"
#include "cargait/reranker.hpp"

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace cargait {

/// -log sigmoid(x) without overflow.
inline double neg_log_sigmoid(double x) {
    return x >= 0.0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double ranking_loss(double d_pos, double d_neg, double beta) {
    const double margin = d_neg - d_pos;
    const double raw = neg_log_sigmoid(margin);
    return margin >= 0.0 ? beta * raw : raw;
}

/// d(ranking_loss)/d(d_neg); the derivative w.r.t. d_pos is its negation.
inline double ranking_loss_grad(double d_pos, double d_neg, double beta) {
    const double margin = d_neg - d_pos;
    const double g = -sigmoid(-margin);
    return margin >= 0.0 ? beta * g : g;
}

struct LossHyper {
    double alpha = 0.01;
    double beta = 0.1;
};

struct TripletRef {
    const FeatureMap* probe = nullptr;
    const FeatureMap* positive = nullptr;
    const FeatureMap* negative = nullptr;
    std::size_t probe_label = 0;
    std::size_t positive_label = 0;
    std::size_t negative_label = 0;
};

struct LossValue {
    double total = 0.0;
    double ranking = 0.0; ///< summed over triplets
    double ce = 0.0;      ///< mean over attended maps (0 when alpha == 0)
};

namespace detail {

template <typename T>
struct TripletWork {
    Matrix<T> f_p, f_pos, f_neg;
    PairTrace<T> pos_pair, neg_pair;
    ClassifyTrace<T> cls;
    RowVector<T> d_logits;
};

inline constexpr std::size_t triplets_per_chunk = 16;

/// Loss of one triplet; when `grad` is set, accumulates its gradient. `ce_weight`
/// multiplies each of the four CE terms (alpha / number of CE samples).
template <typename T>
void triplet_step(const TripletRef& t, const RerankerWeights<T>& w, const LossHyper& hyper, double ce_weight,
                  RerankerWeights<T>* grad, TripletWork<T>& work, double& ranking_out, double& ce_out) {
    work.f_p = to_matrix<T>(*t.probe);
    work.f_pos = to_matrix<T>(*t.positive);
    work.f_neg = to_matrix<T>(*t.negative);
    attended_pair(work.f_p, work.f_pos, w, work.pos_pair);
    attended_pair(work.f_p, work.f_neg, w, work.neg_pair);

    const double d_pos = strip_distance(work.pos_pair.e_p(), work.pos_pair.e_c());
    const double d_neg = strip_distance(work.neg_pair.e_p(), work.neg_pair.e_c());
    const double rank = ranking_loss(d_pos, d_neg, hyper.beta);

    Matrix<T> d_ep_pos, d_ec_pos, d_ep_neg, d_ec_neg;
    if (grad) {
        const double g_neg = ranking_loss_grad(d_pos, d_neg, hyper.beta);
        d_ep_pos = strip_distance_grad(work.pos_pair.e_p(), work.pos_pair.e_c(), -g_neg);
        d_ec_pos = -d_ep_pos;
        d_ep_neg = strip_distance_grad(work.neg_pair.e_p(), work.neg_pair.e_c(), g_neg);
        d_ec_neg = -d_ep_neg;
    }

    double ce = 0.0;
    if (hyper.alpha != 0.0) {
        const Matrix<T>* maps[4] = {&work.pos_pair.e_p(), &work.pos_pair.e_c(), &work.neg_pair.e_p(),
                                    &work.neg_pair.e_c()};
        const std::size_t labels[4] = {t.probe_label, t.positive_label, t.probe_label, t.negative_label};
        Matrix<T>* d_maps[4] = {&d_ep_pos, &d_ec_pos, &d_ep_neg, &d_ec_neg};
        for (int m = 0; m < 4; ++m) {
            classify(*maps[m], w, work.cls);
            ce += cross_entropy(work.cls.logits, labels[m], grad ? &work.d_logits : nullptr);
            if (grad) {
                work.d_logits *= static_cast<T>(ce_weight);
                classify_backward(work.cls, work.d_logits, w, *grad, *d_maps[m]);
            }
        }
    }

    if (!std::isfinite(rank) || !std::isfinite(ce)) {
        fail(ErrorKind::non_finite, "non-finite loss for triplet (" + t.probe->sequence_id + ", " +
                                        t.positive->sequence_id + ", " + t.negative->sequence_id + ")");
    }
    ranking_out += rank;
    ce_out += ce;

    if (grad) {
        attended_pair_backward(work.pos_pair, d_ep_pos, d_ec_pos, w, *grad);
        attended_pair_backward(work.neg_pair, d_ep_neg, d_ec_neg, w, *grad);
    }
}

} // namespace detail

/// Scratch buffers reused across forward_backward calls (one per trainer).
template <typename T>
struct GradientWorkspace {
    std::vector<RerankerWeights<T>> partial;
    std::vector<detail::TripletWork<T>> work;
};

/**
 * Batch objective and, when `grad` is non-null, its exact gradient (grad is
 * overwritten). Triplets are processed in fixed chunks whose partial sums are
 * reduced in chunk order, so the result does not depend on `threads`.
 */
template <typename T>
LossValue forward_backward(std::span<const TripletRef> batch, const RerankerWeights<T>& weights,
                           const LossHyper& hyper, RerankerWeights<T>* grad, std::size_t threads = 1,
                           GradientWorkspace<T>* workspace = nullptr) {
    const auto& cfg = weights.config();
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& t = batch[i];
        if (!t.probe || !t.positive || !t.negative) {
            fail(ErrorKind::invalid_argument, "triplet " + std::to_string(i) + " has a missing feature map");
        }
        if (hyper.alpha != 0.0 && (t.probe_label >= cfg.num_classes || t.positive_label >= cfg.num_classes ||
                                   t.negative_label >= cfg.num_classes)) {
            fail(ErrorKind::label_range, "triplet " + std::to_string(i) + " has a label outside [0, " +
                                             std::to_string(cfg.num_classes) + ")");
        }
    }
    if (grad) {
        if (!(grad->config() == cfg)) {
            *grad = RerankerWeights<T>(cfg);
        }
        grad->set_zero();
    }
    const double ce_weight = batch.empty() ? 0.0 : hyper.alpha / (4.0 * static_cast<double>(batch.size()));

    const std::size_t chunks = (batch.size() + detail::triplets_per_chunk - 1) / detail::triplets_per_chunk;
    std::vector<double> ranking(chunks, 0.0), ce(chunks, 0.0);
    GradientWorkspace<T> local_workspace;
    auto& ws = workspace ? *workspace : local_workspace;
    ws.work.resize(std::max(ws.work.size(), chunks));
    if (grad) {
        ws.partial.resize(std::max(ws.partial.size(), chunks));
        for (std::size_t c = 0; c < chunks; ++c) {
            if (!(ws.partial[c].config() == cfg)) {
                ws.partial[c] = RerankerWeights<T>(cfg);
            }
        }
    }
    auto& partial = ws.partial;
    parallel_for(chunks, threads, [&](std::size_t c) {
        auto& work = ws.work[c];
        RerankerWeights<T>* local = nullptr;
        if (grad) {
            partial[c].set_zero();
            local = &partial[c];
        }
        const std::size_t begin = c * detail::triplets_per_chunk;
        const std::size_t end = std::min(batch.size(), begin + detail::triplets_per_chunk);
        for (std::size_t i = begin; i < end; ++i) {
            detail::triplet_step(batch[i], weights, hyper, ce_weight, local, work, ranking[c], ce[c]);
        }
    });

    LossValue out;
    for (std::size_t c = 0; c < chunks; ++c) {
        out.ranking += ranking[c];
        out.ce += ce[c];
        if (grad) {
            auto dst = grad->values();
            const auto src = partial[c].values();
            for (std::size_t j = 0; j < dst.size(); ++j) {
                dst[j] += src[j];
            }
        }
    }
    if (!batch.empty() && hyper.alpha != 0.0) {
        out.ce /= 4.0 * static_cast<double>(batch.size());
    }
    out.total = out.ranking + hyper.alpha * out.ce;
    return out;
}

template <typename T>
LossValue total_loss(std::span<const TripletRef> batch, const RerankerWeights<T>& weights, const LossHyper& hyper,
                     std::size_t threads = 1) {
    return forward_backward<T>(batch, weights, hyper, nullptr, threads);
}

} // namespace cargait
