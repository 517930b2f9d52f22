#pragma once

/**
 * @file global_ranking.hpp
 *
 * @brief First-stage gallery ranking by the strip-averaged Euclidean distance.
 */

#include "cargait/error.hpp"
#include "cargait/feature_store.hpp"
#include "cargait/parallel.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <string>
#include <vector>

namespace cargait {

/**
 * Mean over strips of the per-strip Euclidean distance between two row-major
 * s x d matrices. Accumulates in double regardless of the element type, so
 * every caller that feeds identical values gets an identical result.
 */
template <typename T>
double strip_distance(const T* a, const T* b, std::size_t s, std::size_t d) {
    double total = 0.0;
    for (std::size_t i = 0; i < s; ++i) {
        double sq = 0.0;
        const T* ra = a + i * d;
        const T* rb = b + i * d;
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = static_cast<double>(ra[j]) - static_cast<double>(rb[j]);
            sq += diff * diff;
        }
        total += std::sqrt(sq);
    }
    return total / static_cast<double>(s);
}

inline double strip_distance(const FeatureMap& a, const FeatureMap& b) {
    if (a.s != b.s || a.d != b.d) {
        fail(ErrorKind::shape, "strip_distance: '" + a.sequence_id + "' is " + std::to_string(a.s) + "x" +
                                   std::to_string(a.d) + " but '" + b.sequence_id + "' is " + std::to_string(b.s) +
                                   "x" + std::to_string(b.d));
    }
    return strip_distance(a.values.data(), b.values.data(), a.s, a.d);
}

struct RankedItem {
    std::string candidate_id;
    double distance = 0.0;

    bool operator==(const RankedItem&) const = default;
};

struct RankedList {
    std::string probe_id;
    std::vector<RankedItem> items;

    bool operator==(const RankedList&) const = default;
};

/// Ascending distance, ties by ascending candidate id.
inline bool ranks_before(const RankedItem& a, const RankedItem& b) {
    if (a.distance != b.distance) {
        return a.distance < b.distance;
    }
    return a.candidate_id < b.candidate_id;
}

/// Top-k gallery entries for one probe. The probe's own sequence id is skipped.
inline RankedList rank_gallery(const FeatureMap& probe, const FeatureSet& gallery, std::size_t k) {
    if (k == 0) {
        fail(ErrorKind::invalid_argument, "rank_gallery: k must be positive");
    }
    RankedList out{probe.sequence_id, {}};
    std::vector<RankedItem> all;
    all.reserve(gallery.size());
    for (const auto& c : gallery.entries) {
        if (c.sequence_id == probe.sequence_id) {
            continue;
        }
        all.push_back({c.sequence_id, strip_distance(probe, c)});
    }
    if (all.empty()) {
        fail(ErrorKind::empty_input, "rank_gallery: no gallery candidates for probe '" + probe.sequence_id + "'");
    }
    const std::size_t keep = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), ranks_before);
    all.resize(keep);
    out.items = std::move(all);
    return out;
}

/// rank_gallery for every probe, in probe order.
inline std::vector<RankedList> rank_all(const FeatureSet& probes, const FeatureSet& gallery, std::size_t k,
                                        std::size_t threads = 1) {
    std::vector<RankedList> out(probes.size());
    parallel_for(probes.size(), threads, [&](std::size_t i) {
        try {
            out[i] = rank_gallery(probes.entries[i], gallery, k);
        } catch (const Error& e) {
            throw Error(e.kind(), "probe '" + probes.entries[i].sequence_id + "': " + e.what());
        }
    });
    return out;
}

inline nlohmann::json to_json(const RankedList& list) {
    nlohmann::json items = nlohmann::json::array();
    for (const auto& item : list.items) {
        items.push_back({item.candidate_id, item.distance});
    }
    return {{"probe_id", list.probe_id}, {"items", items}};
}

inline RankedList ranked_list_from_json(const nlohmann::json& j) {
    RankedList out;
    try {
        out.probe_id = j.at("probe_id").get<std::string>();
        for (const auto& item : j.at("items")) {
            out.items.push_back({item.at(0).get<std::string>(), item.at(1).get<double>()});
        }
    } catch (const nlohmann::json::exception& ex) {
        fail(ErrorKind::format, std::string("malformed ranked list record: ") + ex.what());
    }
    return out;
}

/// One JSON record per line. `extra`, when non-empty, is merged into each record
/// (e.g. per-probe latency).
inline void save_ranked_lists(const std::vector<RankedList>& lists, const std::string& path,
                              const std::vector<nlohmann::json>& extra = {}) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        fail(ErrorKind::io, "cannot open '" + path + "' for writing");
    }
    for (std::size_t i = 0; i < lists.size(); ++i) {
        auto record = to_json(lists[i]);
        if (i < extra.size()) {
            record.update(extra[i]);
        }
        out << record.dump() << '\n';
    }
}

inline std::vector<RankedList> load_ranked_lists(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorKind::io, "cannot open '" + path + "' for reading");
    }
    std::vector<RankedList> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& ex) {
            fail(ErrorKind::format, "'" + path + "': " + ex.what());
        }
        out.push_back(ranked_list_from_json(j));
    }
    return out;
}

} // namespace cargait
