#pragma once

/**
 * @file trainset.hpp
 *
 * @brief Re-ranker training data: identity split, per-probe top-v candidate
 * lists, and seeded triplet sampling.
 */

#include "cargait/error.hpp"
#include "cargait/feature_store.hpp"
#include "cargait/global_ranking.hpp"
#include "cargait/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace cargait {

struct TrainingCandidate {
    std::string id;
    double distance = 0.0;
    bool positive = false;

    bool operator==(const TrainingCandidate&) const = default;
};

struct TrainingEntry {
    std::string probe_id;
    std::vector<TrainingCandidate> candidates; ///< ascending global distance

    bool operator==(const TrainingEntry&) const = default;
};

struct TrainingSet {
    std::vector<TrainingEntry> entries;

    bool operator==(const TrainingSet&) const = default;
};

/**
 * Sorts identities by id and moves the last ceil(val_fraction * n) of them,
 * with all their sequences, into the validation set.
 */
inline std::pair<FeatureSet, FeatureSet> split_train_val(const FeatureSet& set, double val_fraction = 0.1) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
        fail(ErrorKind::invalid_argument, "split_train_val: fraction must lie in (0, 1)");
    }
    std::set<std::string> ids;
    for (const auto& e : set.entries) {
        ids.insert(e.identity_id);
    }
    if (ids.size() < 10) {
        fail(ErrorKind::invalid_argument,
             "split_train_val: need at least 10 identities, got " + std::to_string(ids.size()));
    }
    const double n = static_cast<double>(ids.size());
    // The small slack keeps e.g. 0.1 * 3000 from rounding up to 301.
    auto n_val = static_cast<std::size_t>(std::ceil(val_fraction * n - 1e-9));
    n_val = std::clamp<std::size_t>(n_val, 1, ids.size() - 1);
    const std::set<std::string> val_ids(std::next(ids.begin(), static_cast<std::ptrdiff_t>(ids.size() - n_val)),
                                        ids.end());

    FeatureSet train{set.s, set.d, Partition::train, {}};
    FeatureSet val{set.s, set.d, Partition::val, {}};
    for (const auto& e : set.entries) {
        (val_ids.contains(e.identity_id) ? val : train).entries.push_back(e);
    }
    return {std::move(train), std::move(val)};
}

/// Every sequence of `partition` probes all the others; keeps the nearest v.
inline TrainingSet build_training_set(const FeatureSet& partition, std::size_t v, std::size_t threads = 1) {
    if (partition.size() < 2) {
        fail(ErrorKind::empty_input, "build_training_set: partition needs at least 2 sequences");
    }
    if (v == 0) {
        fail(ErrorKind::invalid_argument, "build_training_set: v must be positive");
    }
    const auto lists = rank_all(partition, partition, v, threads);
    const auto identities = identity_table({&partition});
    TrainingSet out;
    out.entries.reserve(lists.size());
    for (const auto& list : lists) {
        TrainingEntry entry{list.probe_id, {}};
        const auto& probe_identity = identities.at(list.probe_id);
        for (const auto& item : list.items) {
            entry.candidates.push_back({item.candidate_id, item.distance, identities.at(item.candidate_id) == probe_identity});
        }
        out.entries.push_back(std::move(entry));
    }
    return out;
}

inline nlohmann::json to_json(const TrainingEntry& e) {
    nlohmann::json ids = nlohmann::json::array(), dists = nlohmann::json::array(), flags = nlohmann::json::array();
    for (const auto& c : e.candidates) {
        ids.push_back(c.id);
        dists.push_back(c.distance);
        flags.push_back(c.positive);
    }
    return {{"probe_id", e.probe_id}, {"candidate_ids", ids}, {"distances", dists}, {"positive", flags}};
}

inline TrainingEntry training_entry_from_json(const nlohmann::json& j) {
    TrainingEntry e;
    try {
        e.probe_id = j.at("probe_id").get<std::string>();
        const auto& ids = j.at("candidate_ids");
        const auto& dists = j.at("distances");
        const auto& flags = j.at("positive");
        if (ids.size() != dists.size() || ids.size() != flags.size()) {
            fail(ErrorKind::format, "training entry '" + e.probe_id + "' has mismatched array lengths");
        }
        for (std::size_t i = 0; i < ids.size(); ++i) {
            e.candidates.push_back({ids[i].get<std::string>(), dists[i].get<double>(), flags[i].get<bool>()});
        }
    } catch (const nlohmann::json::exception& ex) {
        fail(ErrorKind::format, std::string("malformed training entry: ") + ex.what());
    }
    return e;
}

inline void save_training_set(const TrainingSet& ts, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        fail(ErrorKind::io, "cannot open '" + path + "' for writing");
    }
    for (const auto& e : ts.entries) {
        out << to_json(e).dump() << '\n';
    }
}

inline TrainingSet load_training_set(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorKind::io, "cannot open '" + path + "' for reading");
    }
    TrainingSet ts;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        try {
            ts.entries.push_back(training_entry_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::parse_error& ex) {
            fail(ErrorKind::format, "'" + path + "': " + ex.what());
        }
    }
    return ts;
}

struct Triplet {
    std::string probe;
    std::string positive;
    std::string negative;

    bool operator==(const Triplet&) const = default;
};

struct BatchShape {
    std::size_t probes = 32;
    std::size_t triplets_per_probe = 4;

    std::size_t size() const { return probes * triplets_per_probe; }
};

/// Draws triplets from entries holding at least one positive and one negative.
class TripletSampler {
public:
    explicit TripletSampler(const TrainingSet& ts) : ts_(&ts) {
        for (std::size_t i = 0; i < ts.entries.size(); ++i) {
            Eligible e{i, {}, {}};
            const auto& cands = ts.entries[i].candidates;
            for (std::size_t j = 0; j < cands.size(); ++j) {
                (cands[j].positive ? e.positives : e.negatives).push_back(j);
            }
            if (!e.positives.empty() && !e.negatives.empty()) {
                eligible_.push_back(std::move(e));
            }
        }
        if (eligible_.empty()) {
            fail(ErrorKind::empty_input, "no training entry has both a positive and a negative candidate");
        }
    }

    std::size_t eligible_count() const { return eligible_.size(); }

    /// Probes without replacement (with replacement when too few are eligible),
    /// then positives and negatives uniformly with replacement per triplet.
    std::vector<Triplet> sample(const BatchShape& shape, Rng& rng) const {
        std::vector<std::size_t> picks;
        if (eligible_.size() >= shape.probes) {
            std::vector<std::size_t> order(eligible_.size());
            for (std::size_t i = 0; i < order.size(); ++i) {
                order[i] = i;
            }
            for (std::size_t i = 0; i < shape.probes; ++i) {
                std::swap(order[i], order[i + rng.index(order.size() - i)]);
            }
            picks.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(shape.probes));
        } else {
            for (std::size_t i = 0; i < shape.probes; ++i) {
                picks.push_back(rng.index(eligible_.size()));
            }
        }
        std::vector<Triplet> out;
        out.reserve(shape.size());
        for (std::size_t p : picks) {
            const auto& e = eligible_[p];
            const auto& entry = ts_->entries[e.entry];
            for (std::size_t t = 0; t < shape.triplets_per_probe; ++t) {
                const auto& pos = entry.candidates[e.positives[rng.index(e.positives.size())]];
                const auto& neg = entry.candidates[e.negatives[rng.index(e.negatives.size())]];
                out.push_back({entry.probe_id, pos.id, neg.id});
            }
        }
        return out;
    }

private:
    struct Eligible {
        std::size_t entry;
        std::vector<std::size_t> positives;
        std::vector<std::size_t> negatives;
    };

    const TrainingSet* ts_;
    std::vector<Eligible> eligible_;
};

inline std::vector<Triplet> sample_triplets(const TrainingSet& ts, const BatchShape& shape, Rng& rng) {
    return TripletSampler(ts).sample(shape, rng);
}

/// A fixed triplet sample of at least `count` triplets, drawn batch by batch.
inline std::vector<Triplet> fixed_triplet_sample(const TrainingSet& ts, const BatchShape& shape, std::size_t count,
                                                 std::uint64_t seed) {
    TripletSampler sampler(ts);
    Rng rng(seed);
    std::vector<Triplet> out;
    while (out.size() < count) {
        auto batch = sampler.sample(shape, rng);
        out.insert(out.end(), batch.begin(), batch.end());
    }
    out.resize(count);
    return out;
}

} // namespace cargait
