#pragma once

#include <Eigen/Core>
#include <cstddef>

namespace mpde {

namespace detail {
using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;
}  // namespace detail

// y[n,o] += x[n,i] * w[o,i]^T
template <class S>
void gemm_nt(S* y, const S* x, const S* w, int n, int i, int o) {
    if constexpr (std::is_same_v<S, double>) {
        detail::EMap(y, n, o).noalias() += detail::ECMap(x, n, i) * detail::ECMap(w, o, i).transpose();
    } else {
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < o; ++c) {
                S acc{};
                for (int k = 0; k < i; ++k) acc += x[r * i + k] * w[c * i + k];
                y[r * o + c] += acc;
            }
    }
}

// y[n,i] += x[n,o] * w[o,i]
template <class S>
void gemm_nn(S* y, const S* x, const S* w, int n, int o, int i) {
    if constexpr (std::is_same_v<S, double>) {
        detail::EMap(y, n, i).noalias() += detail::ECMap(x, n, o) * detail::ECMap(w, o, i);
    } else {
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < i; ++c) {
                S acc{};
                for (int k = 0; k < o; ++k) acc += x[r * o + k] * w[k * i + c];
                y[r * i + c] += acc;
            }
    }
}

// y[o,i] += x[n,o]^T * z[n,i]
template <class S>
void gemm_tn(S* y, const S* x, const S* z, int n, int o, int i) {
    if constexpr (std::is_same_v<S, double>) {
        detail::EMap(y, o, i).noalias() += detail::ECMap(x, n, o).transpose() * detail::ECMap(z, n, i);
    } else {
        for (int r = 0; r < o; ++r)
            for (int c = 0; c < i; ++c) {
                S acc{};
                for (int k = 0; k < n; ++k) acc += x[k * o + r] * z[k * i + c];
                y[r * i + c] += acc;
            }
    }
}

}  // namespace mpde
