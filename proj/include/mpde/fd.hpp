#pragma once

#include <functional>

#include "mpde/jet.hpp"
#include "mpde/tensor.hpp"

namespace mpde {

// Central finite-difference oracles. These deliberately evaluate their target
// as a black box so they stay independent of the jet/ADjoint propagation they
// are used to validate.

template <class F>  // F: double(double t, double x)
JetValue fd_jet(F&& f, Point2 p, double h) {
    JetValue j;
    const double fpp = f(p.t + h, p.x + h), fpm = f(p.t + h, p.x - h);
    const double fmp = f(p.t - h, p.x + h), fmm = f(p.t - h, p.x - h);
    const double ftp = f(p.t + h, p.x), ftm = f(p.t - h, p.x);
    const double fxp = f(p.t, p.x + h), fxm = f(p.t, p.x - h);
    const double f0 = f(p.t, p.x);
    j.value = f0;
    j.d1[0] = (ftp - ftm) / (2 * h);
    j.d1[1] = (fxp - fxm) / (2 * h);
    j.d2[0] = (ftp - 2 * f0 + ftm) / (h * h);
    j.d2[1] = (fpp - fpm - fmp + fmm) / (4 * h * h);
    j.d2[2] = (fxp - 2 * f0 + fxm) / (h * h);
    return j;
}

template <class F>  // F: double(const ModelParams&)
ParamGrad fd_param_grad(F&& loss, const ModelParams& params, double h) {
    ParamGrad g = params.zeros_like();
    ModelParams probe = params;
    for (auto& [name, t] : probe.tensors) {
        Tensor& gt = g.at(name);
        for (std::size_t i = 0; i < t.data.size(); ++i) {
            const double keep = t.data[i];
            t.data[i] = keep + h;
            const double up = loss(probe);
            t.data[i] = keep - h;
            const double dn = loss(probe);
            t.data[i] = keep;
            gt.data[i] = (up - dn) / (2 * h);
        }
    }
    return g;
}

// |a - b| <= tol * max(|a|, |b|) with an absolute floor for values near the
// finite-difference noise level.
inline bool close_rel(double a, double b, double tol, double floor = 1e-9) {
    const double scale = std::max(std::abs(a), std::abs(b));
    return std::abs(a - b) <= tol * scale + floor;
}

}  // namespace mpde
