#pragma once

// AdamW with decoupled weight decay and bias correction. State is kept in
// double whatever the parameter type.

#include "cargait/error.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cargait {

struct AdamWConfig {
    double lr = 1e-5;
    double weight_decay = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamWState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t step = 0;
};

/// One update. The decay shrinks the parameter before the Adam step is applied,
/// so a zero gradient scales every parameter by exactly (1 - lr * wd).
template <typename T>
void adamw_step(std::span<T> params, std::span<const T> grads, AdamWState& state, const AdamWConfig& cfg) {
    if (params.size() != grads.size()) {
        fail(ErrorKind::shape, "adamw_step: " + std::to_string(params.size()) + " parameters but " +
                                   std::to_string(grads.size()) + " gradients");
    }
    if (state.m.empty() && state.step == 0) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        fail(ErrorKind::shape, "adamw_step: optimizer state does not match the parameter count");
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    const double decay = 1.0 - cfg.lr * cfg.weight_decay;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = static_cast<double>(grads[i]);
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = state.m[i] / c1;
        const double v_hat = state.v[i] / c2;
        double p = static_cast<double>(params[i]) * decay;
        p -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
        params[i] = static_cast<T>(p);
    }
}

} // namespace cargait
