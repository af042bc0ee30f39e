#pragma once

#include <span>
#include <string>
#include <vector>

#include "mpde/mlp.hpp"
#include "mpde/pdealg.hpp"
#include "mpde/probgen.hpp"

namespace mpde {

enum class Method { ours, np, mt, maml, pinn };

inline const char* method_name(Method m) {
    switch (m) {
        case Method::ours: return "ours";
        case Method::np: return "np";
        case Method::mt: return "mt";
        case Method::maml: return "maml";
        default: return "pinn";
    }
}

inline Method parse_method(const std::string& s) {
    for (Method m : {Method::ours, Method::np, Method::mt, Method::maml, Method::pinn})
        if (s == method_name(m)) return m;
    throw config_error("unknown method: " + s);
}

struct ModelConfig {
    Method method = Method::ours;
    int width = 256;
    int layers_b = 4;  // affine layers in NN_b1, NN_b2 and the alpha branch
    int layers_u = 5;  // affine layers in the NN_u trunk
    int alpha_dim = 28;
    double siren_omega = 1.0;

    // NP uses the boundary representation directly; MT/MAML/PINN condition on
    // nothing.
    bool has_encoders() const { return method == Method::ours || method == Method::np; }
    bool has_z_net() const { return method == Method::ours; }
    bool has_repr() const { return has_encoders(); }
};

namespace detail {

// First layer is a plain affine map; equal-width layers carry residual
// connections; the last affine output is not activated.
inline MlpCfg relu_stack(std::string prefix, int in, int width, int layers) {
    MlpCfg cfg;
    cfg.prefix = std::move(prefix);
    for (int i = 0; i < layers; ++i)
        cfg.layers.push_back({i == 0 ? in : width, width,
                              i + 1 < layers ? Act::relu : Act::none, i > 0});
    return cfg;
}

}  // namespace detail

inline MlpCfg b1_cfg(const ModelConfig& c) { return detail::relu_stack("b1", 3, c.width, c.layers_b); }
inline MlpCfg b2_cfg(const ModelConfig& c) {
    return detail::relu_stack("b2", c.width, c.width, c.layers_b);
}
inline MlpCfg z_branch_cfg(const ModelConfig& c) {
    return detail::relu_stack("z.branch", c.alpha_dim, c.width, c.layers_b);
}
inline MlpCfg z_merge_cfg(const ModelConfig& c) {
    MlpCfg cfg;
    cfg.prefix = "z.merge";
    cfg.layers.push_back({2 * c.width, c.width, Act::none, false});
    return cfg;
}
inline MlpCfg u_embed_cfg(const ModelConfig& c) {
    MlpCfg cfg;
    cfg.prefix = "u.embed";
    cfg.layers.push_back({2, c.width, Act::none, false});
    return cfg;
}
inline MlpCfg u_trunk_cfg(const ModelConfig& c) {
    MlpCfg cfg;
    cfg.prefix = "u.trunk";
    cfg.omega = c.siren_omega;
    const int in = c.has_repr() ? 2 * c.width : c.width;
    for (int i = 0; i < c.layers_u; ++i)
        cfg.layers.push_back({i == 0 ? in : c.width, c.width, Act::sine, i > 0});
    return cfg;
}
inline MlpCfg u_head_cfg(const ModelConfig& c) {
    MlpCfg cfg;
    cfg.prefix = "u.head";
    cfg.layers.push_back({c.width, 1, Act::none, false});
    return cfg;
}

inline ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    ModelParams p;
    Rng rng(seed);
    if (cfg.has_encoders()) {
        init_mlp(p, b1_cfg(cfg), rng);
        init_mlp(p, b2_cfg(cfg), rng);
    }
    if (cfg.has_z_net()) {
        init_mlp(p, z_branch_cfg(cfg), rng);
        init_mlp(p, z_merge_cfg(cfg), rng);
    }
    init_mlp(p, u_embed_cfg(cfg), rng);
    init_mlp(p, u_trunk_cfg(cfg), rng);
    init_mlp(p, u_head_cfg(cfg), rng);
    return p;
}

// The NN_u parameter subset (what finetuning optimizes).
inline bool is_solution_net_tensor(const std::string& name) { return name.starts_with("u."); }

struct ProblemRepr {
    std::vector<double> z;  // empty when the method has no problem representation
};

// ---- graph builders ---------------------------------------------------------

// beta = NN_b2(mean_n NN_b1(t_n, x_n, g_n)); permutation invariant by
// construction.
template <class S>
int build_boundary_encoder(TapeT<S>& tape, ParamBinder<S>& bind, const ModelConfig& cfg,
                           const BoundarySet& bset) {
    if (bset.size() == 0) throw domain_error("encode_boundary: empty boundary set");
    const int n = static_cast<int>(bset.size());
    std::vector<double> rows(static_cast<std::size_t>(n) * 3);
    for (int i = 0; i < n; ++i) {
        rows[i * 3 + 0] = bset.points[i].t;
        rows[i * 3 + 1] = bset.points[i].x;
        rows[i * 3 + 2] = bset.values[i];
    }
    int in = tape.constant(n, 3, rows);
    int h = apply_mlp(tape, bind, b1_cfg(cfg), in);
    int pooled = tape.mean_rows(h);
    return apply_mlp(tape, bind, b2_cfg(cfg), pooled);
}

// z from (alpha, beta) for the full model; beta itself for NP.
template <class S>
int build_problem_repr(TapeT<S>& tape, ParamBinder<S>& bind, const ModelConfig& cfg,
                       const CoeffVector& alpha, int beta) {
    if (cfg.method == Method::np) return beta;
    if (static_cast<int>(alpha.alpha.size()) != cfg.alpha_dim)
        throw config_error("encode_problem: coefficient vector length mismatch");
    int a = tape.constant(1, cfg.alpha_dim, alpha.alpha);
    int branch = apply_mlp(tape, bind, z_branch_cfg(cfg), a);
    int merged = tape.concat_cols(branch, beta);
    return apply_mlp(tape, bind, z_merge_cfg(cfg), merged);
}

// u_hat at the given points; z_node < 0 for methods without conditioning.
// with_jet propagates first/second derivatives w.r.t. the points.
template <class S>
int build_predict(TapeT<S>& tape, ParamBinder<S>& bind, const ModelConfig& cfg, int z_node,
                  std::span<const Point2> pts, bool with_jet) {
    const int n = static_cast<int>(pts.size());
    int x = with_jet ? tape.points_jet(pts) : tape.points_plain(pts);
    int h = apply_mlp(tape, bind, u_embed_cfg(cfg), x);
    if (cfg.has_repr()) {
        if (z_node < 0) throw config_error("predict: method requires a problem representation");
        h = tape.concat_cols(h, tape.broadcast_rows(z_node, n));
    }
    h = apply_mlp(tape, bind, u_trunk_cfg(cfg), h);
    return apply_mlp(tape, bind, u_head_cfg(cfg), h);
}

// ---- value-path entry points ------------------------------------------------

inline std::vector<double> encode_boundary(const ModelParams& params, const ModelConfig& cfg,
                                           const BoundarySet& bset) {
    Tape tape;
    ParamBinder<double> bind(tape, params);
    int beta = build_boundary_encoder(tape, bind, cfg, bset);
    const double* v = tape.values(beta);
    return std::vector<double>(v, v + cfg.width);
}

inline ProblemRepr encode_problem(const ModelParams& params, const ModelConfig& cfg,
                                  const CoeffVector& alpha, std::span<const double> beta) {
    Tape tape;
    ParamBinder<double> bind(tape, params);
    int b = tape.constant(1, static_cast<int>(beta.size()), beta);
    int z = build_problem_repr(tape, bind, cfg, alpha, b);
    const double* v = tape.values(z);
    return ProblemRepr{std::vector<double>(v, v + cfg.width)};
}

// Full encoder dispatch: boundary set and coefficients to z (empty for
// methods without a representation).
inline ProblemRepr problem_repr(const ModelParams& params, const ModelConfig& cfg,
                                const CoeffVector& alpha, const BoundarySet& bset) {
    if (!cfg.has_repr()) return {};
    Tape tape;
    ParamBinder<double> bind(tape, params);
    int beta = build_boundary_encoder(tape, bind, cfg, bset);
    int z = build_problem_repr(tape, bind, cfg, alpha, beta);
    const double* v = tape.values(z);
    return ProblemRepr{std::vector<double>(v, v + cfg.width)};
}

namespace detail {
template <class S>
int bind_repr(TapeT<S>& tape, const ModelConfig& cfg, const ProblemRepr& z) {
    if (!cfg.has_repr()) return -1;
    if (static_cast<int>(z.z.size()) != cfg.width)
        throw config_error("predict: problem representation width mismatch");
    return tape.constant(1, cfg.width, z.z);
}
}  // namespace detail

constexpr int kPredictChunk = 512;

// Batched jet prediction, chunked to bound graph memory.
inline std::vector<JetValue> predict_batch(const ModelParams& params, const ModelConfig& cfg,
                                           const ProblemRepr& z, std::span<const Point2> pts) {
    std::vector<JetValue> out;
    out.reserve(pts.size());
    for (std::size_t at = 0; at < pts.size(); at += kPredictChunk) {
        const std::size_t n = std::min<std::size_t>(kPredictChunk, pts.size() - at);
        Tape tape;
        ParamBinder<double> bind(tape, params);
        int u = build_predict(tape, bind, cfg, detail::bind_repr(tape, cfg, z),
                              pts.subspan(at, n), true);
        for (std::size_t i = 0; i < n; ++i) out.push_back(tape.jet_at(u, static_cast<int>(i), 0));
    }
    return out;
}

inline std::vector<double> predict_values(const ModelParams& params, const ModelConfig& cfg,
                                          const ProblemRepr& z, std::span<const Point2> pts) {
    std::vector<double> out;
    out.reserve(pts.size());
    for (std::size_t at = 0; at < pts.size(); at += kPredictChunk) {
        const std::size_t n = std::min<std::size_t>(kPredictChunk, pts.size() - at);
        Tape tape;
        ParamBinder<double> bind(tape, params);
        int u = build_predict(tape, bind, cfg, detail::bind_repr(tape, cfg, z),
                              pts.subspan(at, n), false);
        const double* v = tape.values(u);
        for (std::size_t i = 0; i < n; ++i) out.push_back(v[i]);
    }
    return out;
}

inline JetValue predict(const ModelParams& params, const ModelConfig& cfg, const ProblemRepr& z,
                        Point2 x) {
    return predict_batch(params, cfg, z, std::span<const Point2>(&x, 1)).front();
}

inline double predict_value(const ModelParams& params, const ModelConfig& cfg,
                            const ProblemRepr& z, Point2 x) {
    return predict_values(params, cfg, z, std::span<const Point2>(&x, 1)).front();
}

}  // namespace mpde
