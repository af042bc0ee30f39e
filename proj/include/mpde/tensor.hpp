#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "mpde/aligned.hpp"
#include "mpde/errors.hpp"

namespace mpde {

struct Point2 {
    double t = 0.0;
    double x = 0.0;
};

// Dense row-major tensor of scalars S. Rank 1 or 2 in practice (weights and
// biases); the shape/data invariant product(shape) == data.size() is kept by
// construction.
template <class S>
struct TensorT {
    std::vector<int> shape;
    AVec<S> data;

    TensorT() = default;
    explicit TensorT(std::vector<int> shp) : shape(std::move(shp)), data(count(shape), S(0)) {}

    static std::size_t count(const std::vector<int>& shp) {
        std::size_t n = 1;
        for (int d : shp) {
            if (d < 0) throw config_error("negative tensor dimension");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    std::size_t size() const { return data.size(); }

    bool same_shape(const TensorT& o) const { return shape == o.shape; }
};

using Tensor = TensorT<double>;

// Named parameter tensors. std::map keeps iteration order stable (name
// order), which the optimizer, checkpoint format and gradient reductions all
// rely on for reproducibility.
template <class S>
struct ParamsT {
    std::map<std::string, TensorT<S>> tensors;

    std::size_t total_count() const {
        std::size_t n = 0;
        for (const auto& [name, t] : tensors) n += t.size();
        return n;
    }

    TensorT<S>& at(const std::string& name) {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw config_error("unknown parameter tensor: " + name);
        return it->second;
    }

    const TensorT<S>& at(const std::string& name) const {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw config_error("unknown parameter tensor: " + name);
        return it->second;
    }

    bool has(const std::string& name) const { return tensors.count(name) != 0; }

    // Zero tensors with the same names and shapes.
    ParamsT zeros_like() const {
        ParamsT out;
        for (const auto& [name, t] : tensors) out.tensors.emplace(name, TensorT<S>(t.shape));
        return out;
    }

    template <class S2>
    ParamsT<S2> cast() const {
        ParamsT<S2> out;
        for (const auto& [name, t] : tensors) {
            TensorT<S2> c(t.shape);
            for (std::size_t i = 0; i < t.data.size(); ++i) c.data[i] = S2(t.data[i]);
            out.tensors.emplace(name, std::move(c));
        }
        return out;
    }
};

using ModelParams = ParamsT<double>;
using ParamGrad = ParamsT<double>;

inline bool all_finite(const double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        if (!std::isfinite(p[i])) return false;
    return true;
}

inline bool all_finite(const ModelParams& params) {
    for (const auto& [name, t] : params.tensors)
        if (!all_finite(t.data.data(), t.data.size())) return false;
    return true;
}

// grads := grads + scale * delta (shapes must match).
inline void axpy_params(ParamGrad& acc, const ParamGrad& delta, double scale) {
    for (auto& [name, t] : acc.tensors) {
        const auto& d = delta.at(name);
        if (!t.same_shape(d)) throw config_error("gradient shape mismatch for " + name);
        for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] += scale * d.data[i];
    }
}

}  // namespace mpde
