#pragma once

#include <cmath>
#include <cstdint>

#include "mpde/errors.hpp"
#include "mpde/tensor.hpp"

namespace mpde {

struct AdamState {
    std::int64_t step = 0;
    ParamsT<double> m;
    ParamsT<double> v;
    double lr0 = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

inline AdamState init_adam(const ModelParams& params, double lr0 = 1e-3, double beta1 = 0.9,
                           double beta2 = 0.999, double eps = 1e-8) {
    AdamState s;
    s.m = params.zeros_like();
    s.v = params.zeros_like();
    s.lr0 = lr0;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.eps = eps;
    return s;
}

// Standard bias-corrected Adam update; tensors are matched by name.
inline void adam_step(ModelParams& params, const ParamGrad& grads, AdamState& state, double lr) {
    if (lr <= 0) throw config_error("adam_step: lr must be positive");
    state.step += 1;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (auto& [name, p] : params.tensors) {
        const Tensor& g = grads.at(name);
        Tensor& m = state.m.at(name);
        Tensor& v = state.v.at(name);
        if (!p.same_shape(g) || !p.same_shape(m))
            throw config_error("adam_step: shape mismatch for " + name);
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            m.data[i] = state.beta1 * m.data[i] + (1.0 - state.beta1) * g.data[i];
            v.data[i] = state.beta2 * v.data[i] + (1.0 - state.beta2) * g.data[i] * g.data[i];
            p.data[i] -= lr * (m.data[i] / c1) / (std::sqrt(v.data[i] / c2) + state.eps);
        }
    }
}

// lr0 halved once per `half_every` epochs.
inline double lr_schedule(std::int64_t epoch, double lr0, std::int64_t half_every) {
    if (epoch < 0 || half_every < 1) throw config_error("lr_schedule: bad arguments");
    return lr0 * std::pow(0.5, static_cast<double>(epoch / half_every));
}

}  // namespace mpde
