#pragma once

#include <array>
#include <cmath>

namespace mpde {

// A scalar together with its first and second partial derivatives with
// respect to the two point coordinates (t, x). The Hessian is symmetric, so
// only the upper triangle is stored; the mixed derivative is canonically
// d2[1] = u_tx.
struct JetValue {
    double value = 0.0;
    std::array<double, 2> d1{0.0, 0.0};          // u_t, u_x
    std::array<double, 3> d2{0.0, 0.0, 0.0};     // u_tt, u_tx, u_xx

    double component(int i) const {
        switch (i) {
            case 0: return value;
            case 1: return d1[0];
            case 2: return d1[1];
            case 3: return d2[0];
            case 4: return d2[1];
            default: return d2[2];
        }
    }
};

inline bool all_finite(const JetValue& j) {
    return std::isfinite(j.value) && std::isfinite(j.d1[0]) && std::isfinite(j.d1[1]) &&
           std::isfinite(j.d2[0]) && std::isfinite(j.d2[1]) && std::isfinite(j.d2[2]);
}

constexpr int kJetComponents = 6;

}  // namespace mpde
