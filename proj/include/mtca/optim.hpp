// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "mtca/errors.hpp"
#include "mtca/tensor.hpp"

namespace mtca {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.01;
};

/// First/second moment estimates per parameter tensor plus the step counter.
struct AdamWState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::int64_t step = 0;

    static AdamWState init(const std::vector<Tensor*>& params) {
        AdamWState s;
        s.m.reserve(params.size());
        s.v.reserve(params.size());
        for (const Tensor* p : params) {
            s.m.push_back(Tensor::zeros(p->shape()));
            s.v.push_back(Tensor::zeros(p->shape()));
        }
        return s;
    }
};

/// One AdamW update with decoupled weight decay:
///   theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)
inline void adamw_step(const std::vector<Tensor*>& params,
                       const std::vector<const Tensor*>& grads, AdamWState& state,
                       const AdamWConfig& cfg, double lr) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw std::invalid_argument("adamw_step: parameter/gradient/state count mismatch");
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = *grads[i];
        if (!p.same_shape(g)) throw std::invalid_argument("adamw_step: gradient shape mismatch");
        if (!g.all_finite()) throw NumericError("adamw_step: non-finite gradient");
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            const double m_hat = m[j] / bc1;
            const double v_hat = v[j] / bc2;
            p[j] -= lr * (m_hat / (std::sqrt(v_hat) + cfg.epsilon) + cfg.weight_decay * p[j]);
        }
    }
}

/// Step decay: base_lr * gamma^floor(epoch / step_size).
inline double step_lr(double base_lr, std::int64_t epoch, std::int64_t step_size, double gamma) {
    if (step_size < 1) throw std::invalid_argument("step_lr: step_size must be >= 1");
    const std::int64_t k = epoch / step_size;
    return base_lr * std::pow(gamma, static_cast<double>(k));
}

} // namespace mtca
