#pragma once

/**
 * @file feature_store.hpp
 *
 * @brief Strip feature maps, feature sets, and the GFM1 on-disk format.
 *
 * A feature map holds the s x d strip matrix of one sequence. A feature set
 * is an ordered collection of maps sharing s and d, tagged with the partition
 * it belongs to.
 *
 * GFM1 layout (little-endian):
 *
 *     "GFM1" | u32 entry_count | u32 s | u32 d |
 *     per entry: u16 seq_id_len, seq_id | u16 identity_len, identity | s*d f32 (row-major)
 *
 * The manifest sidecar (`<path>.manifest.json`) maps every sequence_id to its
 * identity and partition, and lists the distinct identities once.
 */

#include "cargait/binary_io.hpp"
#include "cargait/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace cargait {

inline constexpr std::string_view gfm_magic = "GFM1";
inline constexpr int gfm_version = 1;

enum class Partition { train, val, gallery, probe };

inline std::string_view to_string(Partition p) {
    switch (p) {
    case Partition::train: return "train";
    case Partition::val: return "val";
    case Partition::gallery: return "gallery";
    case Partition::probe: return "probe";
    }
    return "gallery";
}

inline Partition partition_from_string(std::string_view name) {
    if (name == "train") return Partition::train;
    if (name == "val") return Partition::val;
    if (name == "gallery") return Partition::gallery;
    if (name == "probe") return Partition::probe;
    fail(ErrorKind::format, "unknown partition tag '" + std::string(name) + "'");
}

struct FeatureMap {
    std::string sequence_id;
    std::string identity_id;
    std::size_t s = 0;
    std::size_t d = 0;
    std::vector<float> values; ///< row-major s x d

    std::span<const float> strip(std::size_t i) const { return {values.data() + i * d, d}; }

    float at(std::size_t strip, std::size_t col) const { return values[strip * d + col]; }

    bool operator==(const FeatureMap&) const = default;
};

struct FeatureSet {
    std::size_t s = 0;
    std::size_t d = 0;
    Partition partition = Partition::gallery;
    std::vector<FeatureMap> entries;

    std::size_t size() const { return entries.size(); }

    bool empty() const { return entries.empty(); }

    bool operator==(const FeatureSet&) const = default;
};

/// Every rule a FeatureSet breaks, one description per (entry, rule).
inline std::vector<std::string> validate(const FeatureSet& set) {
    std::vector<std::string> violations;
    if (set.s == 0 || set.d == 0) {
        violations.push_back("set header: s and d must be >= 1 (s=" + std::to_string(set.s) +
                             ", d=" + std::to_string(set.d) + ")");
    }
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < set.entries.size(); ++i) {
        const auto& e = set.entries[i];
        const std::string where = "entry " + std::to_string(i) + " ('" + e.sequence_id + "')";
        if (!seen.insert(e.sequence_id).second) {
            violations.push_back(where + ": duplicate sequence_id");
        }
        if (e.s != set.s || e.d != set.d) {
            violations.push_back(where + ": shape " + std::to_string(e.s) + "x" + std::to_string(e.d) +
                                 " does not match set " + std::to_string(set.s) + "x" + std::to_string(set.d));
        } else if (e.values.size() != e.s * e.d) {
            violations.push_back(where + ": holds " + std::to_string(e.values.size()) + " values, expected " +
                                 std::to_string(e.s * e.d));
        }
        if (std::any_of(e.values.begin(), e.values.end(), [](float v) { return !std::isfinite(v); })) {
            violations.push_back(where + ": non-finite value");
        }
        if (e.sequence_id.empty()) {
            violations.push_back(where + ": empty sequence_id");
        }
    }
    return violations;
}

inline std::string manifest_path(const std::string& path) { return path + ".manifest.json"; }

inline nlohmann::json manifest_json(const FeatureSet& set) {
    std::set<std::string> identities;
    nlohmann::json sequences = nlohmann::json::object();
    for (const auto& e : set.entries) {
        identities.insert(e.identity_id);
        sequences[e.sequence_id] = {{"identity", e.identity_id}, {"partition", to_string(set.partition)}};
    }
    return {
        {"format", "GFM1-manifest"},
        {"version", gfm_version},
        {"partition", to_string(set.partition)},
        {"s", set.s},
        {"d", set.d},
        {"identities", std::vector<std::string>(identities.begin(), identities.end())},
        {"sequences", sequences},
    };
}

inline void save_feature_set(const FeatureSet& set, const std::string& path) {
    for (const auto& e : set.entries) {
        if (e.s != set.s || e.d != set.d || e.values.size() != set.s * set.d) {
            fail(ErrorKind::shape, "sequence '" + e.sequence_id + "' has shape " + std::to_string(e.s) + "x" +
                                       std::to_string(e.d) + ", set expects " + std::to_string(set.s) + "x" +
                                       std::to_string(set.d));
        }
    }
    if (auto violations = validate(set); !violations.empty()) {
        fail(ErrorKind::invalid_argument, "cannot save invalid feature set: " + violations.front());
    }

    detail::ByteWriter w;
    w.bytes(gfm_magic);
    w.u32(static_cast<std::uint32_t>(set.entries.size()));
    w.u32(static_cast<std::uint32_t>(set.s));
    w.u32(static_cast<std::uint32_t>(set.d));
    for (const auto& e : set.entries) {
        w.short_string(e.sequence_id, "sequence_id");
        w.short_string(e.identity_id, "identity_id");
        for (float v : e.values) {
            w.f32(v);
        }
    }
    w.write_to(path);

    std::ofstream manifest(manifest_path(path), std::ios::trunc);
    if (!manifest) {
        fail(ErrorKind::io, "cannot write manifest for '" + path + "'");
    }
    manifest << manifest_json(set).dump(2) << '\n';
}

/// Reads a GFM1 file and, when present, its manifest sidecar (which supplies the
/// partition tag; without it the set is tagged `gallery`).
inline FeatureSet load_feature_set(const std::string& path) {
    auto r = detail::ByteReader::from_file(path);
    if (r.remaining() < 4 || r.bytes(4) != gfm_magic) {
        fail(ErrorKind::format, "'" + path + "' is not a GFM1 file (bad magic)");
    }
    FeatureSet set;
    const std::uint32_t count = r.u32();
    set.s = r.u32();
    set.d = r.u32();
    if (set.s == 0 || set.d == 0) {
        fail(ErrorKind::shape, "'" + path + "' declares zero strips or zero dimension");
    }
    set.entries.reserve(std::min<std::size_t>(count, 1u << 20));
    std::unordered_set<std::string> seen;
    for (std::uint32_t i = 0; i < count; ++i) {
        FeatureMap e;
        e.sequence_id = r.short_string();
        e.identity_id = r.short_string();
        e.s = set.s;
        e.d = set.d;
        e.values.resize(set.s * set.d);
        for (auto& v : e.values) {
            v = r.f32();
            if (!std::isfinite(v)) {
                fail(ErrorKind::non_finite, "non-finite value in sequence index " + std::to_string(i) + " ('" +
                                                e.sequence_id + "')");
            }
        }
        if (!seen.insert(e.sequence_id).second) {
            fail(ErrorKind::duplicate_id, "duplicate sequence_id '" + e.sequence_id + "' at index " +
                                              std::to_string(i));
        }
        set.entries.push_back(std::move(e));
    }
    if (r.remaining() != 0) {
        fail(ErrorKind::format, "'" + path + "' has " + std::to_string(r.remaining()) + " trailing bytes");
    }

    const auto mpath = manifest_path(path);
    if (std::filesystem::exists(mpath)) {
        std::ifstream in(mpath);
        nlohmann::json m;
        try {
            m = nlohmann::json::parse(in);
            set.partition = partition_from_string(m.at("partition").get<std::string>());
            const auto& sequences = m.at("sequences");
            for (const auto& e : set.entries) {
                if (!sequences.contains(e.sequence_id) ||
                    sequences.at(e.sequence_id).at("identity").get<std::string>() != e.identity_id) {
                    fail(ErrorKind::format, "manifest disagrees with payload on sequence '" + e.sequence_id + "'");
                }
            }
        } catch (const nlohmann::json::exception& ex) {
            fail(ErrorKind::format, "malformed manifest '" + mpath + "': " + ex.what());
        }
    }
    return set;
}

/// Sequence id -> identity id, read from a manifest sidecar.
inline std::unordered_map<std::string, std::string> load_manifest_identities(const std::string& manifest_file) {
    std::ifstream in(manifest_file);
    if (!in) {
        fail(ErrorKind::io, "cannot open manifest '" + manifest_file + "'");
    }
    std::unordered_map<std::string, std::string> out;
    try {
        const auto m = nlohmann::json::parse(in);
        for (const auto& [seq, info] : m.at("sequences").items()) {
            out.emplace(seq, info.at("identity").get<std::string>());
        }
    } catch (const nlohmann::json::exception& ex) {
        fail(ErrorKind::format, "malformed manifest '" + manifest_file + "': " + ex.what());
    }
    return out;
}

/// Sequence-id lookup over one or more feature sets. Does not own the sets.
class FeatureIndex {
public:
    FeatureIndex() = default;

    explicit FeatureIndex(const FeatureSet& set) { add(set); }

    void add(const FeatureSet& set) {
        for (const auto& e : set.entries) {
            auto [it, inserted] = by_id_.emplace(e.sequence_id, &e);
            if (!inserted && *it->second != e) {
                fail(ErrorKind::duplicate_id, "sequence '" + e.sequence_id + "' indexed twice with different data");
            }
        }
    }

    const FeatureMap& at(const std::string& sequence_id) const {
        auto it = by_id_.find(sequence_id);
        if (it == by_id_.end()) {
            fail(ErrorKind::missing_feature, "no features for sequence '" + sequence_id + "'");
        }
        return *it->second;
    }

    bool contains(const std::string& sequence_id) const { return by_id_.contains(sequence_id); }

    std::size_t size() const { return by_id_.size(); }

private:
    std::unordered_map<std::string, const FeatureMap*> by_id_;
};

/// Sequence id -> identity id for every entry of the given sets.
inline std::unordered_map<std::string, std::string> identity_table(std::initializer_list<const FeatureSet*> sets) {
    std::unordered_map<std::string, std::string> out;
    for (const auto* set : sets) {
        for (const auto& e : set->entries) {
            out.emplace(e.sequence_id, e.identity_id);
        }
    }
    return out;
}

} // namespace cargait
