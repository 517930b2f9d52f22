#pragma once

/**
 * @file reranker.hpp
 *
 * @brief Strip-wise multi-head cross-attention re-ranker.
 *
 * For a probe/candidate pair of s x d strip maps (F_p, F_c), each attention
 * block maps
 *
 *     E_p = F_p + MHA(query = F_p, key/value = F_c)
 *     E_c = F_c + MHA(query = F_c, key/value = F_p)
 *
 * with one weight set shared by both directions. The re-rank distance is the
 * strip-averaged Euclidean distance between E_p and E_c. A two-layer MLP head
 * on the strip-mean of E produces identity logits for the auxiliary
 * cross-entropy term.
 *
 * Everything is templated on the scalar: float for production, double for
 * gradient checking.
 */

#include "cargait/container.hpp"
#include "cargait/error.hpp"
#include "cargait/feature_store.hpp"
#include "cargait/global_ranking.hpp"
#include "cargait/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

namespace cargait {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

struct RerankerConfig {
    std::size_t s = 0;
    std::size_t d = 0;
    std::size_t heads = 8;
    std::size_t hidden = 256; ///< total attention width across heads
    std::size_t blocks = 1;
    std::size_t num_classes = 1;
    std::size_t mlp_hidden = 128;
    bool pre_norm = false; ///< parameter-free layer norm on attention inputs (ablation knob)

    std::size_t head_dim() const { return hidden / heads; }

    void check() const {
        if (s == 0 || d == 0 || heads == 0 || hidden == 0 || blocks == 0 || num_classes == 0 || mlp_hidden == 0) {
            fail(ErrorKind::invalid_argument, "reranker config: all dimensions must be >= 1");
        }
        if (hidden % heads != 0) {
            fail(ErrorKind::invalid_argument, "reranker config: hidden (" + std::to_string(hidden) +
                                                  ") not divisible by heads (" + std::to_string(heads) + ")");
        }
    }

    bool operator==(const RerankerConfig&) const = default;
};

struct TensorSlot {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t offset = 0;

    std::size_t size() const { return rows * cols; }
};

/// Parameter order on disk and in memory. Biases are 1 x n.
inline std::vector<TensorSlot> parameter_layout(const RerankerConfig& c) {
    std::vector<TensorSlot> slots;
    std::size_t offset = 0;
    auto push = [&](std::string name, std::size_t rows, std::size_t cols) {
        slots.push_back({std::move(name), rows, cols, offset});
        offset += rows * cols;
    };
    for (std::size_t b = 0; b < c.blocks; ++b) {
        const std::string p = "block" + std::to_string(b) + ".";
        push(p + "wq", c.d, c.hidden);
        push(p + "bq", 1, c.hidden);
        push(p + "wk", c.d, c.hidden);
        push(p + "bk", 1, c.hidden);
        push(p + "wv", c.d, c.hidden);
        push(p + "bv", 1, c.hidden);
        push(p + "wo", c.hidden, c.d);
        push(p + "bo", 1, c.d);
    }
    push("cls.w1", c.d, c.mlp_hidden);
    push("cls.b1", 1, c.mlp_hidden);
    push("cls.w2", c.mlp_hidden, c.num_classes);
    push("cls.b2", 1, c.num_classes);
    return slots;
}

inline std::size_t parameter_count(const RerankerConfig& c) {
    const auto slots = parameter_layout(c);
    return slots.back().offset + slots.back().size();
}

namespace detail {

template <typename S>
using MatMap = Eigen::Map<std::conditional_t<std::is_const_v<S>, const Matrix<std::remove_const_t<S>>,
                                             Matrix<std::remove_const_t<S>>>>;
template <typename S>
using RowMap = Eigen::Map<std::conditional_t<std::is_const_v<S>, const RowVector<std::remove_const_t<S>>,
                                             RowVector<std::remove_const_t<S>>>>;

// Eigen's vectorized reductions peel leading elements up to an aligned address,
// so the summation order follows the buffer's alignment. A fixed alignment
// keeps results bitwise reproducible from run to run.
template <typename T>
using ParamBuffer = std::vector<T, Eigen::aligned_allocator<T>>;

} // namespace detail

/// Views into one attention block. S is T or const T.
template <typename S>
struct BlockView {
    detail::MatMap<S> wq, wk, wv, wo;
    detail::RowMap<S> bq, bk, bv, bo;
};

template <typename S>
struct ClassifierView {
    detail::MatMap<S> w1, w2;
    detail::RowMap<S> b1, b2;
};

/// All re-ranker parameters in one flat buffer (layout: parameter_layout).
template <typename T>
class RerankerWeights {
public:
    RerankerWeights() = default;

    explicit RerankerWeights(const RerankerConfig& config)
        : config_(config), values_(parameter_count(config), T(0)) {
        config_.check();
    }

    const RerankerConfig& config() const { return config_; }

    std::span<T> values() { return values_; }
    std::span<const T> values() const { return values_; }

    std::size_t size() const { return values_.size(); }

    BlockView<T> block(std::size_t b) { return make_block<T>(values_.data(), b); }
    BlockView<const T> block(std::size_t b) const { return make_block<const T>(values_.data(), b); }

    ClassifierView<T> classifier() { return make_classifier<T>(values_.data()); }
    ClassifierView<const T> classifier() const { return make_classifier<const T>(values_.data()); }

    /// Offset of the classifier head; everything before it is attention.
    std::size_t classifier_offset() const { return config_.blocks * block_size(); }

    void set_zero() { std::fill(values_.begin(), values_.end(), T(0)); }

    template <typename U>
    RerankerWeights<U> cast() const {
        RerankerWeights<U> out(config_);
        std::transform(values_.begin(), values_.end(), out.values().begin(),
                       [](T v) { return static_cast<U>(v); });
        return out;
    }

    bool operator==(const RerankerWeights&) const = default;

private:
    std::size_t block_size() const {
        const auto& c = config_;
        return 3 * (c.d * c.hidden + c.hidden) + c.hidden * c.d + c.d;
    }

    template <typename S, typename P>
    BlockView<S> make_block(P base, std::size_t b) const {
        const auto& c = config_;
        const auto dh = static_cast<Eigen::Index>(c.d), hh = static_cast<Eigen::Index>(c.hidden);
        P p = base + b * block_size();
        auto mat = [&](Eigen::Index r, Eigen::Index cols) {
            detail::MatMap<S> m(p, r, cols);
            p += r * cols;
            return m;
        };
        auto row = [&](Eigen::Index n) {
            detail::RowMap<S> v(p, n);
            p += n;
            return v;
        };
        auto wq = mat(dh, hh);
        auto bq = row(hh);
        auto wk = mat(dh, hh);
        auto bk = row(hh);
        auto wv = mat(dh, hh);
        auto bv = row(hh);
        auto wo = mat(hh, dh);
        auto bo = row(dh);
        return {wq, wk, wv, wo, bq, bk, bv, bo};
    }

    template <typename S, typename P>
    ClassifierView<S> make_classifier(P base) const {
        const auto& c = config_;
        P p = base + classifier_offset();
        const auto d = static_cast<Eigen::Index>(c.d), m = static_cast<Eigen::Index>(c.mlp_hidden),
                   k = static_cast<Eigen::Index>(c.num_classes);
        detail::MatMap<S> w1(p, d, m);
        detail::RowMap<S> b1(p + d * m, m);
        detail::MatMap<S> w2(p + d * m + m, m, k);
        detail::RowMap<S> b2(p + d * m + m + m * k, k);
        return {w1, w2, b1, b2};
    }

    RerankerConfig config_;
    detail::ParamBuffer<T> values_;
};

/// Glorot-uniform projections, zero biases, drawn in layout order.
template <typename T = float>
RerankerWeights<T> init_weights(const RerankerConfig& config, std::uint64_t seed) {
    config.check();
    RerankerWeights<T> w(config);
    Rng rng(seed);
    auto values = w.values();
    for (const auto& slot : parameter_layout(config)) {
        if (slot.rows == 1) {
            continue;
        }
        const double bound = std::sqrt(6.0 / static_cast<double>(slot.rows + slot.cols));
        for (std::size_t i = 0; i < slot.size(); ++i) {
            values[slot.offset + i] = static_cast<T>(rng.uniform(-bound, bound));
        }
    }
    return w;
}

template <typename T>
Matrix<T> to_matrix(const FeatureMap& f) {
    return Eigen::Map<const Matrix<float>>(f.values.data(), static_cast<Eigen::Index>(f.s),
                                           static_cast<Eigen::Index>(f.d))
        .template cast<T>();
}

// ---------------------------------------------------------------------------
// Forward / backward building blocks
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr double layer_norm_eps = 1e-5;

template <typename T>
T gelu(T x) {
    return T(0.5) * x * (T(1) + std::erf(x * T(std::numbers::sqrt2 / 2)));
}

template <typename T>
T gelu_grad(T x) {
    const T cdf = T(0.5) * (T(1) + std::erf(x * T(std::numbers::sqrt2 / 2)));
    const T pdf = std::exp(T(-0.5) * x * x) * T(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
    return cdf + x * pdf;
}

/// Row-wise layer norm without affine parameters. Writes normalized rows and 1/std.
template <typename T>
void layer_norm(const Matrix<T>& x, Matrix<T>& out, Eigen::Matrix<T, Eigen::Dynamic, 1>& rstd) {
    out.resize(x.rows(), x.cols());
    rstd.resize(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const T mean = x.row(i).mean();
        const auto centered = (x.row(i).array() - mean).eval();
        const T var = centered.square().mean();
        rstd(i) = T(1) / std::sqrt(var + T(layer_norm_eps));
        out.row(i) = centered * rstd(i);
    }
}

template <typename T>
void layer_norm_backward(const Matrix<T>& xhat, const Eigen::Matrix<T, Eigen::Dynamic, 1>& rstd,
                         const Matrix<T>& dxhat, Matrix<T>& dx) {
    for (Eigen::Index i = 0; i < xhat.rows(); ++i) {
        const T mean_g = dxhat.row(i).mean();
        const T mean_gx = (dxhat.row(i).array() * xhat.row(i).array()).mean();
        dx.row(i).array() += rstd(i) * (dxhat.row(i).array() - mean_g - xhat.row(i).array() * mean_gx);
    }
}

} // namespace detail

/// Intermediate values of one cross_attend call, kept for the backward pass.
template <typename T>
struct AttendTrace {
    Matrix<T> query_in, kv_in; ///< inputs as given (residual source / layer-norm source)
    Matrix<T> query_proj_in, kv_proj_in; ///< what the projections saw (normalized under pre_norm)
    Eigen::Matrix<T, Eigen::Dynamic, 1> query_rstd, kv_rstd;
    Matrix<T> q, k, v, o;
    std::vector<Matrix<T>> attn; ///< per head, s x s, rows sum to 1
    Matrix<T> out;
};

/**
 * One block of strip-wise multi-head cross-attention with residual:
 * out = query + concat_h(softmax(Q_h K_h^T / sqrt(dk)) V_h) W_o + b_o.
 */
template <typename T>
void cross_attend(const Matrix<T>& query, const Matrix<T>& kv, const RerankerWeights<T>& weights, std::size_t block,
                  AttendTrace<T>& tr) {
    const auto& cfg = weights.config();
    if (query.rows() != static_cast<Eigen::Index>(cfg.s) || query.cols() != static_cast<Eigen::Index>(cfg.d) ||
        kv.rows() != query.rows() || kv.cols() != query.cols()) {
        fail(ErrorKind::shape, "cross_attend: inputs must be " + std::to_string(cfg.s) + "x" + std::to_string(cfg.d));
    }
    const auto w = weights.block(block);
    tr.query_in = query;
    tr.kv_in = kv;
    if (cfg.pre_norm) {
        detail::layer_norm(query, tr.query_proj_in, tr.query_rstd);
        detail::layer_norm(kv, tr.kv_proj_in, tr.kv_rstd);
    } else {
        tr.query_proj_in = query;
        tr.kv_proj_in = kv;
    }
    tr.q.noalias() = tr.query_proj_in * w.wq;
    tr.q.rowwise() += w.bq;
    tr.k.noalias() = tr.kv_proj_in * w.wk;
    tr.k.rowwise() += w.bk;
    tr.v.noalias() = tr.kv_proj_in * w.wv;
    tr.v.rowwise() += w.bv;

    const auto dk = static_cast<Eigen::Index>(cfg.head_dim());
    const T scale = T(1) / std::sqrt(static_cast<T>(dk));
    tr.attn.resize(cfg.heads);
    tr.o.resize(query.rows(), static_cast<Eigen::Index>(cfg.hidden));
    for (std::size_t h = 0; h < cfg.heads; ++h) {
        const auto c0 = static_cast<Eigen::Index>(h) * dk;
        auto& a = tr.attn[h];
        a.noalias() = tr.q.middleCols(c0, dk) * tr.k.middleCols(c0, dk).transpose();
        a *= scale;
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            const T row_max = a.row(i).maxCoeff();
            a.row(i) = (a.row(i).array() - row_max).exp();
            a.row(i) /= a.row(i).sum();
        }
        tr.o.middleCols(c0, dk).noalias() = a * tr.v.middleCols(c0, dk);
    }
    tr.out = query;
    tr.out.noalias() += tr.o * w.wo;
    tr.out.rowwise() += w.bo;
    if (!tr.out.allFinite()) {
        fail(ErrorKind::non_finite, "cross_attend: non-finite output in block " + std::to_string(block));
    }
}

template <typename T>
Matrix<T> cross_attend(const Matrix<T>& query, const Matrix<T>& kv, const RerankerWeights<T>& weights,
                       std::size_t block = 0) {
    AttendTrace<T> tr;
    cross_attend(query, kv, weights, block, tr);
    return tr.out;
}

/// Accumulates parameter gradients into `grad` and input gradients into
/// d_query / d_kv (when non-null) given dL/d(out).
template <typename T>
void cross_attend_backward(const AttendTrace<T>& tr, const Matrix<T>& d_out, const RerankerWeights<T>& weights,
                           std::size_t block, RerankerWeights<T>& grad, Matrix<T>* d_query, Matrix<T>* d_kv) {
    const auto& cfg = weights.config();
    const auto w = weights.block(block);
    auto g = grad.block(block);
    const auto dk = static_cast<Eigen::Index>(cfg.head_dim());
    const T scale = T(1) / std::sqrt(static_cast<T>(dk));

    g.wo.noalias() += tr.o.transpose() * d_out;
    g.bo += d_out.colwise().sum();
    const Matrix<T> d_o = d_out * w.wo.transpose();

    Matrix<T> d_q(tr.q.rows(), tr.q.cols()), d_k(tr.k.rows(), tr.k.cols()), d_v(tr.v.rows(), tr.v.cols());
    Matrix<T> d_a;
    for (std::size_t h = 0; h < cfg.heads; ++h) {
        const auto c0 = static_cast<Eigen::Index>(h) * dk;
        const auto& a = tr.attn[h];
        d_a.noalias() = d_o.middleCols(c0, dk) * tr.v.middleCols(c0, dk).transpose();
        d_v.middleCols(c0, dk).noalias() = a.transpose() * d_o.middleCols(c0, dk);
        // softmax Jacobian, row by row
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            const T dot = a.row(i).dot(d_a.row(i));
            d_a.row(i) = (a.row(i).array() * (d_a.row(i).array() - dot)).matrix() * scale;
        }
        d_q.middleCols(c0, dk).noalias() = d_a * tr.k.middleCols(c0, dk);
        d_k.middleCols(c0, dk).noalias() = d_a.transpose() * tr.q.middleCols(c0, dk);
    }

    g.wq.noalias() += tr.query_proj_in.transpose() * d_q;
    g.bq += d_q.colwise().sum();
    g.wk.noalias() += tr.kv_proj_in.transpose() * d_k;
    g.bk += d_k.colwise().sum();
    g.wv.noalias() += tr.kv_proj_in.transpose() * d_v;
    g.bv += d_v.colwise().sum();

    if (d_query) {
        *d_query += d_out;
        Matrix<T> d_in = d_q * w.wq.transpose();
        if (cfg.pre_norm) {
            detail::layer_norm_backward(tr.query_proj_in, tr.query_rstd, d_in, *d_query);
        } else {
            *d_query += d_in;
        }
    }
    if (d_kv) {
        Matrix<T> d_in = d_k * w.wk.transpose();
        d_in.noalias() += d_v * w.wv.transpose();
        if (cfg.pre_norm) {
            detail::layer_norm_backward(tr.kv_proj_in, tr.kv_rstd, d_in, *d_kv);
        } else {
            *d_kv += d_in;
        }
    }
}

template <typename T>
struct AttendedPair {
    Matrix<T> e_p;
    Matrix<T> e_c;
};

/// Per-block traces for both attention directions of one pair.
template <typename T>
struct PairTrace {
    std::vector<AttendTrace<T>> probe_side;
    std::vector<AttendTrace<T>> candidate_side;

    const Matrix<T>& e_p() const { return probe_side.back().out; }
    const Matrix<T>& e_c() const { return candidate_side.back().out; }
};

template <typename T>
void attended_pair(const Matrix<T>& f_p, const Matrix<T>& f_c, const RerankerWeights<T>& weights,
                   PairTrace<T>& tr) {
    const auto blocks = weights.config().blocks;
    tr.probe_side.resize(blocks);
    tr.candidate_side.resize(blocks);
    for (std::size_t b = 0; b < blocks; ++b) {
        const Matrix<T>& x = b == 0 ? f_p : tr.probe_side[b - 1].out;
        const Matrix<T>& y = b == 0 ? f_c : tr.candidate_side[b - 1].out;
        cross_attend(x, y, weights, b, tr.probe_side[b]);
        cross_attend(y, x, weights, b, tr.candidate_side[b]);
    }
}

template <typename T>
AttendedPair<T> attended_pair(const Matrix<T>& f_p, const Matrix<T>& f_c, const RerankerWeights<T>& weights) {
    PairTrace<T> tr;
    attended_pair(f_p, f_c, weights, tr);
    return {tr.e_p(), tr.e_c()};
}

template <typename T>
AttendedPair<T> attended_pair(const FeatureMap& f_p, const FeatureMap& f_c, const RerankerWeights<T>& weights) {
    return attended_pair<T>(to_matrix<T>(f_p), to_matrix<T>(f_c), weights);
}

/// Backpropagates dL/dE_p and dL/dE_c through every block. Inputs are frozen,
/// so no gradient flows out of block 0.
template <typename T>
void attended_pair_backward(const PairTrace<T>& tr, const Matrix<T>& d_ep, const Matrix<T>& d_ec,
                            const RerankerWeights<T>& weights, RerankerWeights<T>& grad) {
    Matrix<T> dx = d_ep;
    Matrix<T> dy = d_ec;
    for (std::size_t b = weights.config().blocks; b-- > 0;) {
        if (b == 0) {
            cross_attend_backward<T>(tr.probe_side[b], dx, weights, b, grad, nullptr, nullptr);
            cross_attend_backward<T>(tr.candidate_side[b], dy, weights, b, grad, nullptr, nullptr);
            break;
        }
        Matrix<T> dx_prev = Matrix<T>::Zero(dx.rows(), dx.cols());
        Matrix<T> dy_prev = Matrix<T>::Zero(dy.rows(), dy.cols());
        cross_attend_backward(tr.probe_side[b], dx, weights, b, grad, &dx_prev, &dy_prev);
        cross_attend_backward(tr.candidate_side[b], dy, weights, b, grad, &dy_prev, &dx_prev);
        dx = std::move(dx_prev);
        dy = std::move(dy_prev);
    }
}

template <typename T>
double strip_distance(const Matrix<T>& a, const Matrix<T>& b) {
    return strip_distance(a.data(), b.data(), static_cast<std::size_t>(a.rows()), static_cast<std::size_t>(a.cols()));
}

/// d(strip_distance)/d(a) scaled by `upstream`; d/d(b) is its negation.
template <typename T>
Matrix<T> strip_distance_grad(const Matrix<T>& a, const Matrix<T>& b, double upstream) {
    Matrix<T> g = a - b;
    const double inv_s = 1.0 / static_cast<double>(a.rows());
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
        double sq = 0.0;
        for (Eigen::Index j = 0; j < g.cols(); ++j) {
            sq += static_cast<double>(g(i, j)) * static_cast<double>(g(i, j));
        }
        const double norm = std::sqrt(sq);
        if (norm == 0.0) {
            g.row(i).setZero();
        } else {
            g.row(i) *= static_cast<T>(upstream * inv_s / norm);
        }
    }
    return g;
}

/// d^r = Z(E_p, E_c).
template <typename T>
double rerank_distance(const FeatureMap& f_p, const FeatureMap& f_c, const RerankerWeights<T>& weights) {
    const auto pair = attended_pair<T>(f_p, f_c, weights);
    return strip_distance(pair.e_p, pair.e_c);
}

/// Classifier intermediates for one attended map.
template <typename T>
struct ClassifyTrace {
    RowVector<T> pooled, pre_act, act, logits;
};

template <typename T>
void classify(const Matrix<T>& e, const RerankerWeights<T>& weights, ClassifyTrace<T>& tr) {
    const auto& cfg = weights.config();
    if (e.rows() != static_cast<Eigen::Index>(cfg.s) || e.cols() != static_cast<Eigen::Index>(cfg.d)) {
        fail(ErrorKind::shape, "classify: input must be " + std::to_string(cfg.s) + "x" + std::to_string(cfg.d));
    }
    const auto w = weights.classifier();
    tr.pooled = e.colwise().mean();
    tr.pre_act.noalias() = tr.pooled * w.w1;
    tr.pre_act += w.b1;
    tr.act = tr.pre_act.unaryExpr([](T x) { return detail::gelu(x); });
    tr.logits.noalias() = tr.act * w.w2;
    tr.logits += w.b2;
}

/// Strip mean-pool, linear, GELU, linear: C logits.
template <typename T>
RowVector<T> classify(const Matrix<T>& e, const RerankerWeights<T>& weights) {
    ClassifyTrace<T> tr;
    classify(e, weights, tr);
    return tr.logits;
}

/// Cross-entropy of one logit row against `label`; writes softmax - onehot into d_logits.
template <typename T>
double cross_entropy(const RowVector<T>& logits, std::size_t label, RowVector<T>* d_logits = nullptr) {
    if (label >= static_cast<std::size_t>(logits.size())) {
        fail(ErrorKind::label_range, "label " + std::to_string(label) + " outside [0, " +
                                         std::to_string(logits.size()) + ")");
    }
    const double max = static_cast<double>(logits.maxCoeff());
    double sum = 0.0;
    for (Eigen::Index j = 0; j < logits.size(); ++j) {
        sum += std::exp(static_cast<double>(logits(j)) - max);
    }
    const double log_z = max + std::log(sum);
    if (d_logits) {
        d_logits->resize(logits.size());
        for (Eigen::Index j = 0; j < logits.size(); ++j) {
            (*d_logits)(j) = static_cast<T>(std::exp(static_cast<double>(logits(j)) - log_z));
        }
        (*d_logits)(static_cast<Eigen::Index>(label)) -= T(1);
    }
    return log_z - static_cast<double>(logits(static_cast<Eigen::Index>(label)));
}

/// Backprop of `scale * CE` through the classifier; accumulates into grad and d_e.
template <typename T>
void classify_backward(const ClassifyTrace<T>& tr, const RowVector<T>& d_logits, const RerankerWeights<T>& weights,
                       RerankerWeights<T>& grad, Matrix<T>& d_e) {
    const auto w = weights.classifier();
    auto g = grad.classifier();
    g.w2.noalias() += tr.act.transpose() * d_logits;
    g.b2 += d_logits;
    RowVector<T> d_pre = d_logits * w.w2.transpose();
    for (Eigen::Index j = 0; j < d_pre.size(); ++j) {
        d_pre(j) *= detail::gelu_grad(tr.pre_act(j));
    }
    g.w1.noalias() += tr.pooled.transpose() * d_pre;
    g.b1 += d_pre;
    const RowVector<T> d_pooled = (d_pre * w.w1.transpose()) / static_cast<T>(d_e.rows());
    d_e.rowwise() += d_pooled;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline constexpr std::string_view reranker_magic = "CGRK";

inline void save_checkpoint(const RerankerWeights<float>& weights, const CheckpointMeta& meta,
                            const std::string& path) {
    const auto& c = weights.config();
    const std::vector<std::uint32_t> header = {
        static_cast<std::uint32_t>(c.s),           static_cast<std::uint32_t>(c.d),
        static_cast<std::uint32_t>(c.heads),       static_cast<std::uint32_t>(c.hidden),
        static_cast<std::uint32_t>(c.blocks),      static_cast<std::uint32_t>(c.num_classes),
        static_cast<std::uint32_t>(c.mlp_hidden),  static_cast<std::uint32_t>(c.pre_norm ? 1 : 0),
    };
    detail::save_container(path, reranker_magic, header, weights.values(), meta);
}

struct RerankerCheckpoint {
    RerankerWeights<float> weights;
    CheckpointMeta meta;
};

inline RerankerCheckpoint load_checkpoint(const std::string& path) {
    auto c = detail::load_container(path, reranker_magic);
    if (c.header.size() != 8) {
        fail(ErrorKind::format, "'" + path + "': reranker header has " + std::to_string(c.header.size()) +
                                    " fields, expected 8");
    }
    RerankerConfig cfg;
    cfg.s = c.header[0];
    cfg.d = c.header[1];
    cfg.heads = c.header[2];
    cfg.hidden = c.header[3];
    cfg.blocks = c.header[4];
    cfg.num_classes = c.header[5];
    cfg.mlp_hidden = c.header[6];
    cfg.pre_norm = c.header[7] != 0;
    cfg.check();
    if (c.values.size() != parameter_count(cfg)) {
        fail(ErrorKind::shape, "'" + path + "': " + std::to_string(c.values.size()) +
                                   " parameters do not match the header config (" +
                                   std::to_string(parameter_count(cfg)) + ")");
    }
    RerankerWeights<float> w(cfg);
    std::copy(c.values.begin(), c.values.end(), w.values().begin());
    return {std::move(w), std::move(c.meta)};
}

/// Loads and requires the stored config to equal `expected`.
inline RerankerCheckpoint load_checkpoint(const std::string& path, const RerankerConfig& expected) {
    auto ckpt = load_checkpoint(path);
    if (!(ckpt.weights.config() == expected)) {
        fail(ErrorKind::shape, "'" + path + "': checkpoint config does not match the expected config");
    }
    return ckpt;
}

} // namespace cargait
