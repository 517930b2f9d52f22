#pragma once

/**
 * @file baseline.hpp
 *
 * @brief Attention-free comparison re-ranker: the probe and candidate maps are
 * stacked, flattened, and scored by a two-layer MLP as same / different
 * identity. Candidates are re-ordered by descending score.
 */

#include "cargait/adamw.hpp"
#include "cargait/container.hpp"
#include "cargait/error.hpp"
#include "cargait/feature_store.hpp"
#include "cargait/inference.hpp"
#include "cargait/objective.hpp"
#include "cargait/parallel.hpp"
#include "cargait/reranker.hpp"
#include "cargait/rng.hpp"
#include "cargait/training.hpp"
#include "cargait/trainset.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace cargait {

inline constexpr std::string_view baseline_magic = "CGBL";

struct BaselineConfig {
    std::size_t s = 0;
    std::size_t d = 0;
    std::size_t hidden = 256;

    std::size_t input_size() const { return 2 * s * d; }

    void check() const {
        if (s == 0 || d == 0 || hidden == 0) {
            fail(ErrorKind::invalid_argument, "baseline config: all dimensions must be >= 1");
        }
    }

    bool operator==(const BaselineConfig&) const = default;
};

/// Layout: w1 (2sd x hidden, row-major) | b1 (hidden) | w2 (hidden) | b2 (1).
inline std::size_t parameter_count(const BaselineConfig& c) { return c.input_size() * c.hidden + 2 * c.hidden + 1; }

template <typename T>
class BaselineWeights {
public:
    BaselineWeights() = default;

    explicit BaselineWeights(const BaselineConfig& config)
        : config_(config), values_(parameter_count(config), T(0)) {
        config_.check();
    }

    const BaselineConfig& config() const { return config_; }
    std::span<T> values() { return values_; }
    std::span<const T> values() const { return values_; }
    std::size_t size() const { return values_.size(); }

    auto w1() const { return detail::MatMap<const T>(values_.data(), config_.input_size(), config_.hidden); }
    auto b1() const { return detail::RowMap<const T>(values_.data() + b1_offset(), config_.hidden); }
    auto w2() const { return detail::RowMap<const T>(values_.data() + w2_offset(), config_.hidden); }
    T b2() const { return values_.back(); }

    auto w1() { return detail::MatMap<T>(values_.data(), config_.input_size(), config_.hidden); }
    auto b1() { return detail::RowMap<T>(values_.data() + b1_offset(), config_.hidden); }
    auto w2() { return detail::RowMap<T>(values_.data() + w2_offset(), config_.hidden); }
    T& b2() { return values_.back(); }

    void set_zero() { std::fill(values_.begin(), values_.end(), T(0)); }

    bool operator==(const BaselineWeights&) const = default;

private:
    std::size_t b1_offset() const { return config_.input_size() * config_.hidden; }
    std::size_t w2_offset() const { return b1_offset() + config_.hidden; }

    BaselineConfig config_;
    detail::ParamBuffer<T> values_;
};

/// Glorot-uniform matrices from a seeded generator, zero biases.
template <typename T = float>
BaselineWeights<T> init_baseline_weights(const BaselineConfig& config, std::uint64_t seed) {
    BaselineWeights<T> w(config);
    Rng rng(seed);
    auto fill = [&](auto&& m, std::size_t fan_in, std::size_t fan_out) {
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            m.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
        }
    };
    fill(w.w1(), config.input_size(), config.hidden);
    fill(w.w2(), config.hidden, 1);
    return w;
}

namespace detail {

template <typename T>
RowVector<T> stacked_input(const FeatureMap& f_p, const FeatureMap& f_c, const BaselineConfig& c) {
    if (f_p.s != c.s || f_p.d != c.d || f_c.s != c.s || f_c.d != c.d) {
        fail(ErrorKind::shape, "baseline: pair ('" + f_p.sequence_id + "', '" + f_c.sequence_id +
                                   "') does not match a " + std::to_string(c.s) + "x" + std::to_string(c.d) +
                                   " configuration");
    }
    RowVector<T> x(static_cast<Eigen::Index>(c.input_size()));
    const std::size_t half = c.s * c.d;
    for (std::size_t i = 0; i < half; ++i) {
        x(static_cast<Eigen::Index>(i)) = static_cast<T>(f_p.values[i]);
        x(static_cast<Eigen::Index>(half + i)) = static_cast<T>(f_c.values[i]);
    }
    return x;
}

template <typename T>
struct BaselineTrace {
    RowVector<T> x, pre_act, act;
    T logit{};
};

template <typename T>
T baseline_forward(const FeatureMap& f_p, const FeatureMap& f_c, const BaselineWeights<T>& w, BaselineTrace<T>& tr) {
    tr.x = stacked_input<T>(f_p, f_c, w.config());
    tr.pre_act.noalias() = tr.x * w.w1();
    tr.pre_act += w.b1();
    tr.act = tr.pre_act.unaryExpr([](T v) { return gelu(v); });
    tr.logit = tr.act.dot(w.w2()) + w.b2();
    return tr.logit;
}

template <typename T>
void baseline_backward(const BaselineTrace<T>& tr, T d_logit, const BaselineWeights<T>& w, BaselineWeights<T>& grad) {
    grad.w2() += d_logit * tr.act;
    grad.b2() += d_logit;
    RowVector<T> d_pre = (d_logit * w.w2()).cwiseProduct(tr.pre_act.unaryExpr([](T v) { return gelu_grad(v); }));
    grad.w1().noalias() += tr.x.transpose() * d_pre;
    grad.b1() += d_pre;
}

} // namespace detail

/// Same-identity logit for an ordered (probe, candidate) pair; not symmetric.
template <typename T>
T baseline_score(const FeatureMap& f_p, const FeatureMap& f_c, const BaselineWeights<T>& w) {
    detail::BaselineTrace<T> tr;
    const T logit = detail::baseline_forward(f_p, f_c, w, tr);
    if (!std::isfinite(static_cast<double>(logit))) {
        fail(ErrorKind::non_finite, "baseline: non-finite score for ('" + f_p.sequence_id + "', '" + f_c.sequence_id +
                                        "')");
    }
    return logit;
}

struct LabeledPair {
    const FeatureMap* probe = nullptr;
    const FeatureMap* candidate = nullptr;
    bool same = false;
};

/// Binary cross-entropy of a logit against a 0/1 label.
inline double binary_cross_entropy(double logit, bool same) {
    return same ? neg_log_sigmoid(logit) : neg_log_sigmoid(-logit);
}

/// Mean BCE over the pairs and, when `grad` is set, its gradient (overwritten).
template <typename T>
double baseline_forward_backward(std::span<const LabeledPair> pairs, const BaselineWeights<T>& w,
                                 BaselineWeights<T>* grad) {
    if (pairs.empty()) {
        fail(ErrorKind::empty_input, "baseline: empty pair batch");
    }
    if (grad) {
        if (!(grad->config() == w.config())) {
            *grad = BaselineWeights<T>(w.config());
        }
        grad->set_zero();
    }
    const double scale = 1.0 / static_cast<double>(pairs.size());
    double total = 0.0;
    detail::BaselineTrace<T> tr;
    for (const auto& p : pairs) {
        const double logit = static_cast<double>(detail::baseline_forward(*p.probe, *p.candidate, w, tr));
        const double loss = binary_cross_entropy(logit, p.same);
        if (!std::isfinite(loss)) {
            fail(ErrorKind::non_finite, "baseline: non-finite loss for ('" + p.probe->sequence_id + "', '" +
                                            p.candidate->sequence_id + "')");
        }
        total += loss;
        if (grad) {
            const double d_logit = (sigmoid(logit) - (p.same ? 1.0 : 0.0)) * scale;
            detail::baseline_backward(tr, static_cast<T>(d_logit), w, *grad);
        }
    }
    return total * scale;
}

struct BaselineTrainConfig {
    std::size_t hidden = 256;
    AdamWConfig optimizer{};
    BatchShape batch{};
    std::size_t negatives_per_positive = 1; ///< pos:neg balance of each step
    LoopSchedule schedule{};
    std::size_t val_triplets = 1024; ///< each yields one positive and one negative validation pair
    std::uint64_t seed = 0;
};

inline std::vector<LabeledPair> pairs_from_triplets(const std::vector<Triplet>& triplets, const FeatureIndex& features,
                                                    bool positives, bool negatives) {
    std::vector<LabeledPair> out;
    for (const auto& t : triplets) {
        const auto& p = features.at(t.probe);
        if (positives) {
            out.push_back({&p, &features.at(t.positive), true});
        }
        if (negatives) {
            out.push_back({&p, &features.at(t.negative), false});
        }
    }
    return out;
}

struct BaselineTrainResult {
    BaselineWeights<float> weights;
    CheckpointMeta meta;
    std::vector<TrainLogRow> log;
};

/**
 * Trains the pair classifier with the re-ranker's optimizer and stopping rule.
 * Each step takes the positives of one sampled triplet batch and the negatives
 * of `negatives_per_positive` batches.
 */
inline BaselineTrainResult train_baseline(const TrainingSet& train_set, const TrainingSet& val_set,
                                          const FeatureIndex& features, const BaselineTrainConfig& cfg,
                                          const LogCallback& on_log = {}) {
    if (train_set.entries.empty() || val_set.entries.empty()) {
        fail(ErrorKind::empty_input, "train_baseline: training and validation sets must be nonempty");
    }
    if (cfg.negatives_per_positive == 0) {
        fail(ErrorKind::invalid_argument, "train_baseline: negatives_per_positive must be >= 1");
    }
    const auto& first = features.at(train_set.entries.front().probe_id);
    const BaselineConfig bc{first.s, first.d, cfg.hidden};
    bc.check();

    const TripletSampler sampler(train_set);
    Rng rng(cfg.seed + 1);
    const auto val_pairs =
        pairs_from_triplets(fixed_triplet_sample(val_set, cfg.batch, cfg.val_triplets, cfg.seed + 2), features, true, true);

    BaselineWeights<float> grad(bc);
    AdamWState state;
    auto step = [&](BaselineWeights<float>& w) {
        auto pairs = pairs_from_triplets(sampler.sample(cfg.batch, rng), features, true, true);
        for (std::size_t extra = 1; extra < cfg.negatives_per_positive; ++extra) {
            auto more = pairs_from_triplets(sampler.sample(cfg.batch, rng), features, false, true);
            pairs.insert(pairs.end(), more.begin(), more.end());
        }
        const double loss = baseline_forward_backward<float>(pairs, w, &grad);
        adamw_step<float>(w.values(), std::as_const(grad).values(), state, cfg.optimizer);
        return loss;
    };
    auto validate = [&](const BaselineWeights<float>& w) {
        return baseline_forward_backward<float>(val_pairs, w, nullptr);
    };
    auto outcome = run_training_loop(init_baseline_weights<float>(bc, cfg.seed), cfg.schedule, step, validate, on_log);

    BaselineTrainResult result;
    result.weights = std::move(outcome.best);
    result.log = std::move(outcome.log);
    result.meta.iteration = outcome.best_iteration;
    result.meta.val_loss = outcome.best_val_loss;
    result.meta.seed = cfg.seed;
    result.meta.extra = {{"lr", cfg.optimizer.lr},
                         {"weight_decay", cfg.optimizer.weight_decay},
                         {"batch_probes", cfg.batch.probes},
                         {"batch_triplets_per_probe", cfg.batch.triplets_per_probe},
                         {"negatives_per_positive", cfg.negatives_per_positive},
                         {"iterations", cfg.schedule.iterations},
                         {"t_val", cfg.schedule.t_val},
                         {"val_triplets", cfg.val_triplets}};
    return result;
}

/// Re-orders the first k candidates by descending baseline score (ties by id).
template <typename T>
RankedList baseline_rerank(const FeatureMap& probe, const RankedList& initial, std::size_t k,
                           const BaselineWeights<T>& weights, const FeatureIndex& features) {
    detail::check_rerank_args(initial, k);
    const std::size_t n = std::min(k, initial.items.size());
    std::vector<double> key(n), shown(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double score =
            static_cast<double>(baseline_score<T>(probe, features.at(initial.items[i].candidate_id), weights));
        key[i] = -score;
        shown[i] = sigmoid(-score); // probability of a different identity
    }
    return detail::splice_prefix(initial, k, key, shown);
}

template <typename T>
RerankOutput baseline_rerank_all(const std::vector<RankedList>& initial, std::size_t k,
                                 const BaselineWeights<T>& weights, const FeatureIndex& features,
                                 std::size_t threads = 1) {
    return rerank_lists(initial, k, features, threads, [&](const FeatureMap& probe, const RankedList& list) {
        return baseline_rerank<T>(probe, list, k, weights, features);
    });
}

inline void save_baseline_checkpoint(const BaselineWeights<float>& w, const CheckpointMeta& meta,
                                     const std::string& path) {
    const auto& c = w.config();
    const std::uint32_t header[] = {static_cast<std::uint32_t>(c.s), static_cast<std::uint32_t>(c.d),
                                    static_cast<std::uint32_t>(c.hidden)};
    detail::save_container(path, baseline_magic, header, w.values(), meta);
}

struct BaselineCheckpoint {
    BaselineWeights<float> weights;
    CheckpointMeta meta;
};

inline BaselineCheckpoint load_baseline_checkpoint(const std::string& path) {
    auto c = detail::load_container(path, baseline_magic);
    if (c.header.size() != 3) {
        fail(ErrorKind::format, "'" + path + "': baseline header has " + std::to_string(c.header.size()) +
                                    " fields, expected 3");
    }
    const BaselineConfig cfg{c.header[0], c.header[1], c.header[2]};
    cfg.check();
    if (c.values.size() != parameter_count(cfg)) {
        fail(ErrorKind::shape, "'" + path + "': " + std::to_string(c.values.size()) +
                                   " parameters do not match the header configuration");
    }
    BaselineCheckpoint out{BaselineWeights<float>(cfg), std::move(c.meta)};
    std::copy(c.values.begin(), c.values.end(), out.weights.values().begin());
    return out;
}

} // namespace cargait
