#pragma once

/**
 * @file synth.hpp
 *
 * @brief Seeded generator of small feature sets with hard negatives in the
 * global top-K.
 *
 * Identities come in confusion pairs: the partner's base map holds the same
 * strip rows, rotated by one strip position. A sequence of identity i is
 *
 *     X = (1 - h) B_i + h mean_rows(B_i) + h kappa (U z) + noise
 *
 * where mean_rows replicates the strip-mean row, U is a fixed d x r orthonormal
 * basis shared by every seed and z ~ N(0, I_r) is drawn per sequence. The
 * hardness h pulls every strip toward the strip mean, which a pair shares, so
 * partners become close under the strip-averaged distance. The U z term is a
 * per-sequence offset common to all strips; it inflates global distances
 * between sequences of one identity, and a cross-attention block can cancel it
 * because it is identical on every strip of both maps.
 */

#include "cargait/error.hpp"
#include "cargait/feature_store.hpp"
#include "cargait/global_ranking.hpp"
#include "cargait/metrics.hpp"
#include "cargait/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

namespace cargait {

struct SynthSpec {
    std::size_t identities = 40;
    std::size_t per_identity = 6;
    std::size_t s = 8;
    std::size_t d = 16;
    double hardness = 0.7;
    double noise = 0.3;
    std::string id_prefix = "id"; ///< keeps identity ids of independently generated sets apart
    Partition partition = Partition::gallery;
};

inline constexpr double synth_base_scale = 0.6;
inline constexpr double synth_nuisance_gain = 0.9;
inline constexpr std::size_t synth_nuisance_rank = 4;
inline constexpr std::uint64_t synth_basis_seed = 12345;

namespace detail {

/// Orthonormal d x r basis from a fixed seed, identical for every generated set.
inline Eigen::MatrixXd nuisance_basis(std::size_t d, std::size_t r) {
    Rng rng(synth_basis_seed);
    Eigen::MatrixXd g(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(r));
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
        for (Eigen::Index j = 0; j < g.cols(); ++j) {
            g(i, j) = rng.normal();
        }
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    return qr.householderQ() * Eigen::MatrixXd::Identity(g.rows(), g.cols());
}

inline std::string padded(std::size_t value, int width) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%0*zu", width, value);
    return buf;
}

} // namespace detail

inline std::string synth_identity_id(const SynthSpec& spec, std::size_t identity) {
    return spec.id_prefix + detail::padded(identity, 4);
}

inline std::string synth_sequence_id(const SynthSpec& spec, std::size_t identity, std::size_t sequence) {
    return synth_identity_id(spec, identity) + "_s" + detail::padded(sequence, 2);
}

inline void check(const SynthSpec& spec) {
    if (spec.identities < 2 || spec.per_identity < 2) {
        fail(ErrorKind::invalid_argument, "synth: need at least 2 identities and 2 sequences per identity");
    }
    if (spec.s == 0 || spec.d == 0) {
        fail(ErrorKind::invalid_argument, "synth: strips and dim must be positive");
    }
    if (!(spec.hardness >= 0.0 && spec.hardness <= 1.0)) {
        fail(ErrorKind::invalid_argument, "synth: hardness must lie in [0, 1]");
    }
    if (!(spec.noise >= 0.0) || !std::isfinite(spec.noise)) {
        fail(ErrorKind::invalid_argument, "synth: noise must be finite and nonnegative");
    }
    if (spec.id_prefix.empty()) {
        fail(ErrorKind::invalid_argument, "synth: id prefix must be nonempty");
    }
}

/// Identities 2j and 2j+1 are partners; with an odd count the last one has none.
inline FeatureSet generate(const SynthSpec& spec, std::uint64_t seed) {
    check(spec);
    const auto s = static_cast<Eigen::Index>(spec.s);
    const auto d = static_cast<Eigen::Index>(spec.d);
    const std::size_t r = std::min(synth_nuisance_rank, spec.d);
    const Eigen::MatrixXd basis = detail::nuisance_basis(spec.d, r);
    Rng rng(seed);

    std::vector<Eigen::MatrixXd> bases;
    bases.reserve(spec.identities);
    for (std::size_t i = 0; i < spec.identities; i += 2) {
        Eigen::MatrixXd b(s, d);
        for (Eigen::Index a = 0; a < s; ++a) {
            for (Eigen::Index c = 0; c < d; ++c) {
                b(a, c) = rng.normal() * synth_base_scale;
            }
        }
        bases.push_back(b);
        if (i + 1 < spec.identities) {
            Eigen::MatrixXd partner(s, d);
            for (Eigen::Index a = 0; a < s; ++a) {
                partner.row(a) = b.row((a + 1) % s);
            }
            bases.push_back(partner);
        }
    }

    const double h = spec.hardness;
    FeatureSet out{spec.s, spec.d, spec.partition, {}};
    out.entries.reserve(spec.identities * spec.per_identity);
    Eigen::VectorXd z(static_cast<Eigen::Index>(r));
    for (std::size_t i = 0; i < spec.identities; ++i) {
        const Eigen::RowVectorXd mean = bases[i].colwise().mean();
        for (std::size_t k = 0; k < spec.per_identity; ++k) {
            for (Eigen::Index j = 0; j < z.size(); ++j) {
                z(j) = rng.normal();
            }
            const Eigen::RowVectorXd offset = (basis * z).transpose() * (h * synth_nuisance_gain);
            FeatureMap f{synth_sequence_id(spec, i, k), synth_identity_id(spec, i), spec.s, spec.d,
                         std::vector<float>(spec.s * spec.d)};
            for (Eigen::Index a = 0; a < s; ++a) {
                for (Eigen::Index c = 0; c < d; ++c) {
                    const double x = (1.0 - h) * bases[i](a, c) + h * mean(c) + offset(c) + spec.noise * rng.normal();
                    f.values[static_cast<std::size_t>(a * d + c)] = static_cast<float>(x);
                }
            }
            out.entries.push_back(std::move(f));
        }
    }
    return out;
}

struct SynthSummary {
    std::size_t identity_count = 0;
    std::map<std::string, std::size_t> sequences_per_identity;
    double rank1 = 0.0;  ///< leave-one-out global Rank-1
    double rank10 = 0.0; ///< leave-one-out global Rank-10
};

/// Leave-one-out summary: every sequence probes all the others.
inline SynthSummary describe(const FeatureSet& set, std::size_t threads = 1) {
    SynthSummary out;
    for (const auto& e : set.entries) {
        ++out.sequences_per_identity[e.identity_id];
    }
    out.identity_count = out.sequences_per_identity.size();
    if (set.size() < 2) {
        return out;
    }
    const auto lists = rank_all(set, set, 10, threads);
    const auto acc = rank_k_accuracy(lists, identity_table({&set}), {1, 10});
    out.rank1 = acc.at(1);
    out.rank10 = acc.at(10);
    return out;
}

inline nlohmann::json to_json(const SynthSummary& s) {
    return {{"identity_count", s.identity_count},
            {"sequences_per_identity", s.sequences_per_identity},
            {"rank1", s.rank1},
            {"rank10", s.rank10}};
}

} // namespace cargait
