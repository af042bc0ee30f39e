#pragma once

#include <span>
#include <string>

#include "mpde/model.hpp"
#include "mpde/pdealg.hpp"
#include "mpde/probgen.hpp"

namespace mpde {

struct PinnError {
    double ge = 0.0;     // mean squared governing-equation residual E_f
    double bc = 0.0;     // mean squared boundary mismatch E_g
    double total = 0.0;  // ge + bc
};

// (1/N_f) sum residual(alpha, jet(x_n))^2 for any jet-valued predictor.
template <class F>  // F: JetValue(Point2)
double ge_error(F&& jet_at, const CoeffVector& alpha, std::span<const Point2> pts) {
    if (pts.empty()) throw config_error("ge_error: need at least one collocation point");
    double acc = 0.0;
    for (std::size_t n = 0; n < pts.size(); ++n) {
        const double r = residual_value(alpha, jet_at(pts[n]));
        if (!std::isfinite(r))
            throw numeric_error("ge_error: non-finite residual at point " + std::to_string(n));
        acc += r * r;
    }
    return acc / static_cast<double>(pts.size());
}

// (1/N_g) sum (g(x_gn) - u_hat(x_gn))^2.
template <class F>  // F: double(Point2)
double bc_error(F&& value_at, const BoundarySet& bset) {
    if (bset.size() == 0) throw config_error("bc_error: empty boundary set");
    double acc = 0.0;
    for (std::size_t n = 0; n < bset.size(); ++n) {
        const double d = bset.values[n] - value_at(bset.points[n]);
        if (!std::isfinite(d))
            throw numeric_error("bc_error: non-finite prediction at point " + std::to_string(n));
        acc += d * d;
    }
    return acc / static_cast<double>(bset.size());
}

template <class F>  // F: JetValue(Point2)
PinnError pinn_error(F&& jet_at, const PdeProblem& problem, std::span<const Point2> pts,
                     const BoundarySet& bset) {
    PinnError e;
    e.ge = ge_error(jet_at, problem.alpha, pts);
    e.bc = bc_error([&](Point2 p) { return jet_at(p).value; }, bset);
    e.total = e.ge + e.bc;
    return e;
}

// Batched model evaluation of the PINN error (forward only, chunked).
inline PinnError eval_pinn(const ModelParams& params, const ModelConfig& cfg,
                           const ProblemRepr& z, const PdeProblem& problem,
                           std::span<const Point2> pts, const BoundarySet& bset) {
    if (pts.empty()) throw config_error("eval_pinn: need at least one collocation point");
    if (bset.size() == 0) throw config_error("eval_pinn: empty boundary set");
    PinnError e;
    const auto jets = predict_batch(params, cfg, z, pts);
    double acc = 0.0;
    for (std::size_t n = 0; n < jets.size(); ++n) {
        const double r = residual_value(problem.alpha, jets[n]);
        if (!std::isfinite(r))
            throw numeric_error("eval_pinn: non-finite residual at point " + std::to_string(n));
        acc += r * r;
    }
    e.ge = acc / static_cast<double>(pts.size());
    const auto ub = predict_values(params, cfg, z, bset.points);
    acc = 0.0;
    for (std::size_t n = 0; n < ub.size(); ++n) {
        const double d = bset.values[n] - ub[n];
        if (!std::isfinite(d))
            throw numeric_error("eval_pinn: non-finite prediction at point " + std::to_string(n));
        acc += d * d;
    }
    e.bc = acc / static_cast<double>(bset.size());
    e.total = e.ge + e.bc;
    return e;
}

struct LossNodes {
    int ge = -1;
    int bc = -1;
    int total = -1;
};

// Differentiable PINN loss graph: E_f from jet predictions at the interior
// points, E_g from plain predictions at the boundary points, equal 1:1
// weighting.
template <class S>
LossNodes build_pinn_loss(TapeT<S>& tape, ParamBinder<S>& bind, const ModelConfig& cfg,
                          int z_node, const CoeffVector& alpha, std::span<const Point2> pts,
                          const BoundarySet& bset) {
    if (pts.empty()) throw config_error("build_pinn_loss: need at least one collocation point");
    if (bset.size() == 0) throw config_error("build_pinn_loss: empty boundary set");
    LossNodes out;

    const int n_f = static_cast<int>(pts.size());
    int u = build_predict(tape, bind, cfg, z_node, pts, true);
    std::vector<int> comps;
    comps.reserve(alpha.basis.size());
    for (int i = 0; i < alpha.basis.size(); ++i) comps.push_back(tape.extract(u, i));
    int r = residual_node(tape, alpha, comps, n_f);
    out.ge = tape.mean_all(tape.square(r));

    int ub = build_predict(tape, bind, cfg, z_node, bset.points, false);
    int g = tape.constant(static_cast<int>(bset.size()), 1, bset.values);
    out.bc = tape.mean_all(tape.square(tape.sub(g, ub)));

    out.total = tape.add(out.ge, out.bc);
    return out;
}

}  // namespace mpde
