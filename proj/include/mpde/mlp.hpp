#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mpde/rng.hpp"
#include "mpde/tape.hpp"
#include "mpde/tensor.hpp"

namespace mpde {

enum class Act { none, relu, sine };

struct LayerCfg {
    int in = 0;
    int out = 0;
    Act act = Act::none;
    bool residual = false;
};

// A plain stack of affine layers. Residual layers compute x + act(Wx + b),
// so a zero-initialized residual layer is the identity map.
struct MlpCfg {
    std::string prefix;  // parameter names are "<prefix>.<i>.w" / "<prefix>.<i>.b"
    std::vector<LayerCfg> layers;
    double omega = 1.0;  // sine activation frequency

    std::string weight_name(int i) const { return prefix + "." + std::to_string(i) + ".w"; }
    std::string bias_name(int i) const { return prefix + "." + std::to_string(i) + ".b"; }
};

// Uniform(-sqrt(6/fan_in), sqrt(6/fan_in)) weights, zero biases. The bound is
// the He-uniform gain for the ReLU stacks and the SIREN hidden-layer rule for
// the sine stacks (omega = 1), so one formula covers both.
template <class S>
void init_mlp(ParamsT<S>& params, const MlpCfg& cfg, Rng& rng) {
    for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
        const LayerCfg& l = cfg.layers[i];
        TensorT<S> w({l.out, l.in});
        const double bound = std::sqrt(6.0 / l.in);
        for (auto& v : w.data) v = S(rng.uniform(-bound, bound));
        params.tensors.emplace(cfg.weight_name(static_cast<int>(i)), std::move(w));
        params.tensors.emplace(cfg.bias_name(static_cast<int>(i)), TensorT<S>({1, l.out}));
    }
}

// Binds parameter tensors to tape nodes on first use so each graph carries
// exactly the parameters it touches, and collects their gradients afterwards.
template <class S>
class ParamBinder {
  public:
    ParamBinder(TapeT<S>& tape, const ParamsT<S>& params) : tape_(tape), params_(params) {}

    int operator()(const std::string& name) {
        auto it = handles_.find(name);
        if (it != handles_.end()) return it->second;
        int h = tape_.param(params_.at(name));
        handles_.emplace(name, h);
        return h;
    }

    const ParamsT<S>& params() const { return params_; }

    // Gradients for every tensor in the bound parameter set; tensors the loss
    // never reached come back zero-filled.
    ParamsT<S> collect_grads() const {
        ParamsT<S> g = params_.zeros_like();
        for (const auto& [name, h] : handles_) {
            auto gr = tape_.grad(h);
            if (gr.empty()) continue;
            auto& dst = g.at(name).data;
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = gr[i];
        }
        return g;
    }

  private:
    TapeT<S>& tape_;
    const ParamsT<S>& params_;
    std::map<std::string, int> handles_;
};

template <class S>
int apply_mlp(TapeT<S>& tape, ParamBinder<S>& bind, const MlpCfg& cfg, int input) {
    int x = input;
    for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
        const LayerCfg& l = cfg.layers[i];
        int a = tape.affine(x, bind(cfg.weight_name(static_cast<int>(i))),
                            bind(cfg.bias_name(static_cast<int>(i))));
        int h = a;
        if (l.act == Act::relu) h = tape.act_relu(a);
        if (l.act == Act::sine) h = tape.act_sin(a, cfg.omega);
        int y = l.residual ? tape.add(x, h) : h;
        if (!tape.values_finite(y))
            throw numeric_error("non-finite activation in " + cfg.prefix + " layer " +
                                std::to_string(i));
        x = y;
    }
    return x;
}

// Jet-propagating forward pass of a layer stack at a single point; the
// optional conditioning vector z is concatenated to (t, x) before the first
// layer. Returns the value and all first/second input derivatives.
inline JetValue forward_with_jet(const ModelParams& params, const MlpCfg& cfg,
                                 std::span<const double> z, Point2 x) {
    Tape tape;
    ParamBinder<double> bind(tape, params);
    Point2 pt[1] = {x};
    int in = tape.points_jet(pt);
    if (!z.empty()) in = tape.concat_cols(in, tape.constant(1, static_cast<int>(z.size()), z));
    int out = apply_mlp(tape, bind, cfg, in);
    if (tape.node(out).cols != 1) throw config_error("forward_with_jet: network output is not scalar");
    return tape.jet_at(out, 0, 0);
}

inline double forward_value(const ModelParams& params, const MlpCfg& cfg,
                            std::span<const double> z, Point2 x) {
    Tape tape;
    ParamBinder<double> bind(tape, params);
    Point2 pt[1] = {x};
    int in = tape.points_plain(pt);
    if (!z.empty()) in = tape.concat_cols(in, tape.constant(1, static_cast<int>(z.size()), z));
    int out = apply_mlp(tape, bind, cfg, in);
    return value_of(tape.values(out)[0]);
}

}  // namespace mpde
