#pragma once

/**
 * @file training.hpp
 *
 * @brief Re-ranker training: AdamW steps on sampled triplet batches with the
 * validation-loss argmin stopping rule.
 */

#include "cargait/adamw.hpp"
#include "cargait/container.hpp"
#include "cargait/error.hpp"
#include "cargait/feature_store.hpp"
#include "cargait/objective.hpp"
#include "cargait/reranker.hpp"
#include "cargait/rng.hpp"
#include "cargait/trainset.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace cargait {

struct TrainLogRow {
    std::uint64_t iteration = 0;
    double train_loss = 0.0; ///< mean batch loss since the previous row (NaN if no step was taken)
    double val_loss = 0.0;
    double wall_time_ms = 0.0;
};

using LogCallback = std::function<void(const TrainLogRow&)>;

inline void save_train_log(const std::vector<TrainLogRow>& log, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        fail(ErrorKind::io, "cannot open '" + path + "' for writing");
    }
    out.precision(10);
    out << "iteration,train_loss,val_loss,wall_time_ms\n";
    for (const auto& r : log) {
        out << r.iteration << ',' << r.train_loss << ',' << r.val_loss << ',' << r.wall_time_ms << '\n';
    }
}

struct LoopSchedule {
    std::uint64_t iterations = 100000;
    std::uint64_t t_val = 10000;
};

template <typename Weights>
struct LoopOutcome {
    Weights best;
    std::uint64_t best_iteration = 0;
    double best_val_loss = 0.0;
    std::vector<TrainLogRow> log;
};

/**
 * Shared stopping machinery. `step(weights)` computes the batch loss at the
 * current weights and applies one optimizer update; `validate(weights)`
 * returns the validation loss. Validation runs at iteration 0, every t_val
 * steps and after the last step; the lowest-loss snapshot is returned.
 */
template <typename Weights, typename StepFn, typename ValFn>
LoopOutcome<Weights> run_training_loop(Weights weights, const LoopSchedule& schedule, StepFn&& step,
                                       ValFn&& validate, const LogCallback& on_log = {}) {
    if (schedule.t_val == 0) {
        fail(ErrorKind::invalid_argument, "t_val must be positive");
    }
    const auto start = std::chrono::steady_clock::now();
    LoopOutcome<Weights> out;
    double pending = 0.0;
    std::uint64_t pending_steps = 0;
    bool have_best = false;
    for (std::uint64_t it = 0;; ++it) {
        if (it % schedule.t_val == 0 || it == schedule.iterations) {
            const double val = validate(weights);
            if (!std::isfinite(val)) {
                fail(ErrorKind::non_finite, "validation loss is not finite at iteration " + std::to_string(it));
            }
            TrainLogRow row{it,
                            pending_steps ? pending / static_cast<double>(pending_steps)
                                          : std::numeric_limits<double>::quiet_NaN(),
                            val,
                            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count()};
            out.log.push_back(row);
            if (on_log) {
                on_log(row);
            }
            pending = 0.0;
            pending_steps = 0;
            if (!have_best || val < out.best_val_loss) {
                out.best = weights;
                out.best_iteration = it;
                out.best_val_loss = val;
                have_best = true;
            }
        }
        if (it == schedule.iterations) {
            break;
        }
        pending += step(weights);
        ++pending_steps;
    }
    return out;
}

struct TrainConfig {
    LossHyper loss{};                   ///< alpha 0.01, beta 0.1
    std::size_t v = 30;                 ///< candidate depth used to build the training sets
    AdamWConfig optimizer{};            ///< lr 1e-5, wd 1e-2, betas (0.9, 0.999), eps 1e-8
    BatchShape batch{};                 ///< 32 probes x 4 triplets
    LoopSchedule schedule{};            ///< 100000 iterations, validation every 10000
    std::size_t val_triplets = 1024;    ///< fixed validation sample size
    std::uint64_t seed = 0;
    std::size_t heads = 8;
    std::size_t hidden = 256;
    std::size_t blocks = 1;
    std::size_t mlp_hidden = 128;
    bool pre_norm = false;
    std::size_t threads = 1;

    void check() const {
        if (!(loss.beta > 0.0 && loss.beta <= 1.0)) {
            fail(ErrorKind::invalid_argument, "beta must lie in (0, 1]");
        }
        if (!(loss.alpha >= 0.0) || !std::isfinite(loss.alpha)) {
            fail(ErrorKind::invalid_argument, "alpha must be finite and >= 0");
        }
        if (v < 2) {
            fail(ErrorKind::invalid_argument, "v must be >= 2");
        }
        if (batch.probes == 0 || batch.triplets_per_probe == 0) {
            fail(ErrorKind::invalid_argument, "batch shape must be positive");
        }
        if (val_triplets == 0) {
            fail(ErrorKind::invalid_argument, "validation sample must be nonempty");
        }
    }
};

inline nlohmann::json to_json(const TrainConfig& c) {
    return {{"alpha", c.loss.alpha},
            {"beta", c.loss.beta},
            {"v", c.v},
            {"lr", c.optimizer.lr},
            {"weight_decay", c.optimizer.weight_decay},
            {"adam_beta1", c.optimizer.beta1},
            {"adam_beta2", c.optimizer.beta2},
            {"adam_eps", c.optimizer.eps},
            {"batch_probes", c.batch.probes},
            {"batch_triplets_per_probe", c.batch.triplets_per_probe},
            {"iterations", c.schedule.iterations},
            {"t_val", c.schedule.t_val},
            {"val_triplets", c.val_triplets}};
}

/// Sorted train-split identities; their positions are the classifier labels.
inline std::vector<std::string> class_identities(const TrainingSet& ts, const FeatureIndex& features) {
    std::set<std::string> ids;
    for (const auto& e : ts.entries) {
        ids.insert(features.at(e.probe_id).identity_id);
    }
    return {ids.begin(), ids.end()};
}

/// Resolves sequence ids to feature maps and identity labels. Without a label
/// table every label is 0 (for ranking-only evaluation).
inline std::vector<TripletRef> resolve_triplets(const std::vector<Triplet>& triplets, const FeatureIndex& features,
                                                const std::map<std::string, std::size_t>* labels) {
    auto label_of = [&](const FeatureMap& f) -> std::size_t {
        if (!labels) {
            return 0;
        }
        auto it = labels->find(f.identity_id);
        if (it == labels->end()) {
            fail(ErrorKind::label_range, "identity '" + f.identity_id + "' of sequence '" + f.sequence_id +
                                             "' has no classifier label");
        }
        return it->second;
    };
    std::vector<TripletRef> out;
    out.reserve(triplets.size());
    for (const auto& t : triplets) {
        const auto& p = features.at(t.probe);
        const auto& pos = features.at(t.positive);
        const auto& neg = features.at(t.negative);
        out.push_back({&p, &pos, &neg, label_of(p), label_of(pos), label_of(neg)});
    }
    return out;
}

struct TrainResult {
    RerankerWeights<float> weights; ///< minimum-validation-loss snapshot
    CheckpointMeta meta;
    std::vector<TrainLogRow> log;
};

/**
 * Trains a re-ranker. The features must cover every sequence named in either
 * training set; they are only read. The classifier predicts the identities of
 * the training-set probes. The validation loss is the damped ranking loss
 * summed over a triplet sample drawn once from `val`.
 */
inline TrainResult train(const TrainingSet& train_set, const TrainingSet& val_set, const FeatureIndex& features,
                         const TrainConfig& cfg, const LogCallback& on_log = {}) {
    cfg.check();
    if (train_set.entries.empty() || val_set.entries.empty()) {
        fail(ErrorKind::empty_input, "train: training and validation sets must be nonempty");
    }
    const auto& first = features.at(train_set.entries.front().probe_id);
    const auto identities = class_identities(train_set, features);
    std::map<std::string, std::size_t> labels;
    for (std::size_t i = 0; i < identities.size(); ++i) {
        labels[identities[i]] = i;
    }

    RerankerConfig rc{first.s, first.d, cfg.heads, cfg.hidden, cfg.blocks, identities.size(), cfg.mlp_hidden,
                      cfg.pre_norm};
    rc.check();

    const TripletSampler sampler(train_set);
    Rng rng(cfg.seed + 1);
    const auto val_refs =
        resolve_triplets(fixed_triplet_sample(val_set, cfg.batch, cfg.val_triplets, cfg.seed + 2), features, nullptr);
    const LossHyper val_hyper{0.0, cfg.loss.beta};

    RerankerWeights<float> grad(rc);
    GradientWorkspace<float> workspace;
    AdamWState state;
    auto step = [&](RerankerWeights<float>& w) {
        const auto refs = resolve_triplets(sampler.sample(cfg.batch, rng), features, &labels);
        const auto loss = forward_backward<float>(refs, w, cfg.loss, &grad, cfg.threads, &workspace);
        adamw_step<float>(w.values(), std::as_const(grad).values(), state, cfg.optimizer);
        return loss.total;
    };
    auto validate = [&](const RerankerWeights<float>& w) {
        return forward_backward<float>(val_refs, w, val_hyper, nullptr, cfg.threads, &workspace).total;
    };
    auto outcome = run_training_loop(init_weights<float>(rc, cfg.seed), cfg.schedule, step, validate, on_log);

    TrainResult result;
    result.weights = std::move(outcome.best);
    result.log = std::move(outcome.log);
    result.meta.iteration = outcome.best_iteration;
    result.meta.val_loss = outcome.best_val_loss;
    result.meta.seed = cfg.seed;
    result.meta.extra = to_json(cfg);
    result.meta.extra["class_identities"] = identities;
    return result;
}

} // namespace cargait
