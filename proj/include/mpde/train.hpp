#pragma once

#include <chrono>
#include <cstdint>
#include <exception>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mpde/adam.hpp"
#include "mpde/losses.hpp"
#include "mpde/model.hpp"
#include "mpde/probgen.hpp"
#include "mpde/util.hpp"

namespace mpde {

struct NgTriplet {
    int init = 50, left = 25, right = 25;
    int total() const { return init + left + right; }
};

struct TrainConfig {
    std::int64_t epochs = 1;
    std::int64_t problems_per_epoch = 32;
    int batch_size = 32;
    int n_f = 50;
    NgTriplet n_g;
    double lr0 = 1e-3;
    std::int64_t lr_half_every = 5000;
    std::uint64_t seed = 0;
    ModelConfig model;
    std::string fixed_problem_set;  // empty: fresh random problems every iteration
    double maml_inner_lr = 1e-2;
    bool maml_first_order = false;
    bool resample_each_epoch = true;  // finetuning / reference-PINN collocation refresh
    int threads = 1;

    std::int64_t steps_per_epoch() const { return problems_per_epoch / batch_size; }

    void validate() const {
        if (epochs < 0 || problems_per_epoch < 1 || batch_size < 1 || n_f < 1)
            throw config_error("train config: counts must be positive");
        if (batch_size > problems_per_epoch)
            throw config_error("train config: batch_size exceeds problems_per_epoch");
        if (n_g.total() < 1) throw config_error("train config: boundary point count must be >= 1");
        if (lr0 <= 0 || lr_half_every < 1) throw config_error("train config: bad learning rate");
        if (threads < 1) throw config_error("train config: threads must be >= 1");
        if (model.method == Method::pinn)
            throw config_error("meta-training does not apply to the per-problem PINN");
    }
};

struct TrainRecord {
    std::int64_t epoch = 0;
    std::int64_t iter = 0;
    double loss_total = 0, loss_ge = 0, loss_bc = 0;
    double lr = 0;
    double wall_ms = 0;  // informational; excluded from deterministic output
};

using TrainLog = std::vector<TrainRecord>;

struct TrainState {
    ModelParams params;
    AdamState opt;
    std::int64_t epoch = 0;          // next epoch to run
    std::int64_t problems_seen = 0;  // global problem counter
    double lr_rescue = 1.0;          // divergence-policy multiplier
    int rescue_count = 0;
};

struct TrainHooks {
    // called after every completed epoch (and once at the end)
    std::function<void(const TrainState&, const TrainLog&)> on_epoch;
};

namespace detail {

// Distinct sub-streams of the master seed.
inline std::uint64_t problems_master(std::uint64_t seed) { return derive_seed(seed, 0xA11CE); }
inline std::uint64_t sampling_master(std::uint64_t seed) { return derive_seed(seed, 0x5A3B1E); }

struct ProblemBatchItem {
    PdeProblem problem;
    BoundarySet bset;
    std::vector<Point2> pts;
};

// Problem `index` of the run: freshly generated from its derived seed, or the
// fixed set cycled. Point samples always come from the run's sampling stream,
// so fixed-set training still sees fresh collocation points every visit.
inline ProblemBatchItem make_batch_item(const TrainConfig& cfg,
                                        const std::vector<PdeProblem>* fixed_set,
                                        std::int64_t index) {
    ProblemBatchItem item;
    if (fixed_set) {
        if (fixed_set->empty()) throw config_error("fixed problem set is empty");
        item.problem = (*fixed_set)[static_cast<std::size_t>(index) % fixed_set->size()];
    } else {
        item.problem = gen_problem(derive_seed(problems_master(cfg.seed),
                                               static_cast<std::uint64_t>(index)));
    }
    Rng rng(derive_seed(sampling_master(cfg.seed), static_cast<std::uint64_t>(index)));
    item.bset = sample_boundary(item.problem, rng, cfg.n_g.init, cfg.n_g.left, cfg.n_g.right);
    item.pts = sample_interior(item.problem, rng, cfg.n_f);
    return item;
}

}  // namespace detail

// Loss and full parameter gradient of one problem under the configured
// method's architecture (encoders included where present). Generic in the
// scalar type so the same code yields Hessian-vector products with Dual.
template <class S>
std::pair<PinnError, ParamsT<S>> problem_loss_grad(const ParamsT<S>& params,
                                                   const ModelConfig& cfg,
                                                   const PdeProblem& problem,
                                                   std::span<const Point2> pts,
                                                   const BoundarySet& bset) {
    TapeT<S> tape;
    ParamBinder<S> bind(tape, params);
    int z = -1;
    if (cfg.has_repr()) {
        int beta = build_boundary_encoder(tape, bind, cfg, bset);
        z = build_problem_repr(tape, bind, cfg, problem.alpha, beta);
    }
    LossNodes loss = build_pinn_loss(tape, bind, cfg, z, problem.alpha, pts, bset);
    tape.backward(loss.total);
    PinnError e;
    e.ge = value_of(tape.scalar(loss.ge));
    e.bc = value_of(tape.scalar(loss.bc));
    e.total = value_of(tape.scalar(loss.total));
    return {e, bind.collect_grads()};
}

// One plain gradient-descent step on the problem's PINN loss.
inline ModelParams maml_adapt(const ModelParams& params, const ModelConfig& cfg,
                              const PdeProblem& problem, double inner_lr,
                              std::span<const Point2> pts, const BoundarySet& bset) {
    auto [loss, grad] = problem_loss_grad(params, cfg, problem, pts, bset);
    ModelParams adapted = params;
    axpy_params(adapted, grad, -inner_lr);
    return adapted;
}

namespace detail {

// Outer gradient of the MAML objective for one problem. With
// theta' = theta - lr * gin(theta), the chain rule gives
//   d/dtheta L(theta') = gout - lr * H_inner(theta) * gout,
// where the Hessian-vector product is evaluated exactly by re-running the
// inner gradient with Dual scalars seeded along gout.
inline std::pair<PinnError, ParamGrad> maml_loss_grad(const ModelParams& params,
                                                      const TrainConfig& cfg,
                                                      const ProblemBatchItem& item) {
    auto [inner_loss, g_in] = problem_loss_grad(params, cfg.model, item.problem, item.pts,
                                                item.bset);
    (void)inner_loss;
    ModelParams adapted = params;
    axpy_params(adapted, g_in, -cfg.maml_inner_lr);
    auto [outer_loss, g_out] = problem_loss_grad(adapted, cfg.model, item.problem, item.pts,
                                                 item.bset);
    if (cfg.maml_first_order) return {outer_loss, std::move(g_out)};

    ParamsT<Dual<double>> dual_params;
    for (const auto& [name, t] : params.tensors) {
        TensorT<Dual<double>> dt(t.shape);
        const auto& dir = g_out.at(name).data;
        for (std::size_t i = 0; i < t.data.size(); ++i) dt.data[i] = {t.data[i], dir[i]};
        dual_params.tensors.emplace(name, std::move(dt));
    }
    auto [dual_loss, dual_grad] =
        problem_loss_grad(dual_params, cfg.model, item.problem, item.pts, item.bset);
    (void)dual_loss;
    ParamGrad outer = std::move(g_out);
    for (auto& [name, t] : outer.tensors) {
        const auto& hv = dual_grad.at(name).data;
        for (std::size_t i = 0; i < t.data.size(); ++i)
            t.data[i] -= cfg.maml_inner_lr * hv[i].d;
    }
    return {outer_loss, std::move(outer)};
}

inline std::pair<PinnError, ParamGrad> dispatch_loss_grad(const ModelParams& params,
                                                          const TrainConfig& cfg,
                                                          const ProblemBatchItem& item) {
    if (cfg.model.method == Method::maml) return maml_loss_grad(params, cfg, item);
    return problem_loss_grad(params, cfg.model, item.problem, item.pts, item.bset);
}

}  // namespace detail

// Mean loss and mean gradient over a batch of prepared problems. Work is
// split over contiguous chunks; each chunk accumulates in problem order and
// chunks merge in order, so results are reproducible for a fixed thread
// count.
inline std::pair<PinnError, ParamGrad> batch_gradient(
    const ModelParams& params, const TrainConfig& cfg,
    std::span<const detail::ProblemBatchItem> batch) {
    const int n = static_cast<int>(batch.size());
    const int chunks = std::max(1, std::min(cfg.threads, n));
    std::vector<ParamGrad> grad_acc(chunks);
    std::vector<PinnError> loss_acc(chunks);
    std::vector<std::exception_ptr> errors(chunks);
    const double w = 1.0 / n;

    std::vector<int> chunk_of(n);
    {
        const int base = n / chunks, extra = n % chunks;
        int at = 0;
        for (int c = 0; c < chunks; ++c) {
            const int len = base + (c < extra ? 1 : 0);
            for (int i = at; i < at + len; ++i) chunk_of[i] = c;
            at += len;
        }
    }
    parallel_chunks(n, chunks, [&](int begin, int end) {
        if (begin >= end) return;
        const int c = chunk_of[begin];
        try {
            ParamGrad acc = params.zeros_like();
            PinnError sum;
            for (int i = begin; i < end; ++i) {
                auto [loss, grad] = detail::dispatch_loss_grad(params, cfg, batch[i]);
                axpy_params(acc, grad, w);
                sum.ge += w * loss.ge;
                sum.bc += w * loss.bc;
                sum.total += w * loss.total;
            }
            grad_acc[c] = std::move(acc);
            loss_acc[c] = sum;
        } catch (...) {
            errors[c] = std::current_exception();
        }
    });
    for (const auto& err : errors)
        if (err) std::rethrow_exception(err);

    ParamGrad grad = std::move(grad_acc[0]);
    PinnError loss = loss_acc[0];
    for (int c = 1; c < chunks; ++c) {
        axpy_params(grad, grad_acc[c], 1.0);
        loss.ge += loss_acc[c].ge;
        loss.bc += loss_acc[c].bc;
        loss.total += loss_acc[c].total;
    }
    return {loss, grad};
}

inline TrainState init_train_state(const TrainConfig& cfg) {
    cfg.validate();
    TrainState s;
    s.params = init_params(cfg.model, cfg.seed);
    s.opt = init_adam(s.params, cfg.lr0);
    return s;
}

// Meta-training (resumable): runs from state.epoch to cfg.epochs, one Adam
// step per mini-batch of freshly generated (or cycled fixed-set) problems.
// On a non-finite loss the last good state is restored and the learning rate
// halved, at most three times, before aborting.
inline void meta_train(const TrainConfig& cfg, TrainState& state, TrainLog& log,
                       const TrainHooks& hooks = {}) {
    cfg.validate();
    std::optional<std::vector<PdeProblem>> fixed;
    if (!cfg.fixed_problem_set.empty()) fixed = read_problem_set(cfg.fixed_problem_set);

    const std::int64_t steps = cfg.steps_per_epoch();
    ModelParams good_params = state.params;
    AdamState good_opt = state.opt;

    for (; state.epoch < cfg.epochs; ++state.epoch) {
        for (std::int64_t iter = 0; iter < steps; ++iter) {
            const double lr =
                lr_schedule(state.epoch, cfg.lr0, cfg.lr_half_every) * state.lr_rescue;
            const auto t0 = std::chrono::steady_clock::now();

            std::vector<detail::ProblemBatchItem> batch;
            batch.reserve(cfg.batch_size);
            for (int b = 0; b < cfg.batch_size; ++b)
                batch.push_back(detail::make_batch_item(cfg, fixed ? &*fixed : nullptr,
                                                        state.problems_seen + b));

            bool ok = true;
            PinnError loss;
            try {
                auto [batch_loss, grad] = batch_gradient(state.params, cfg, batch);
                loss = batch_loss;
                if (!std::isfinite(loss.total)) throw numeric_error("non-finite batch loss");
                adam_step(state.params, grad, state.opt, lr);
            } catch (const numeric_error&) {
                ok = false;
                if (++state.rescue_count > 3) throw;
                state.params = good_params;
                state.opt = good_opt;
                state.lr_rescue *= 0.5;
            }
            if (!ok) {
                --iter;  // retry the same batch at the reduced rate
                continue;
            }
            good_params = state.params;
            good_opt = state.opt;
            state.problems_seen += cfg.batch_size;
            const double ms = std::chrono::duration<double, std::milli>(
                                  std::chrono::steady_clock::now() - t0)
                                  .count();
            log.push_back({state.epoch, iter, loss.total, loss.ge, loss.bc, lr, ms});
        }
        if (hooks.on_epoch) hooks.on_epoch(state, log);
    }
}

// ---- finetuning --------------------------------------------------------------

struct FinetuneConfig {
    std::int64_t epochs = 100;
    double lr = 1e-3;
    int n_f = 50;
    NgTriplet n_g;
    bool resample_each_epoch = true;
    std::uint64_t seed = 0;
};

struct FinetuneResult {
    ModelParams theta_u;     // tuned NN_u tensors (plus everything tunable for MT/PINN)
    ProblemRepr z;           // tuned problem representation (empty when absent)
    TrainLog log;            // training losses per epoch
};

// Assembled parameter set for prediction with a finetuned model.
inline ModelParams apply_finetuned(const ModelParams& base, const FinetuneResult& ft) {
    ModelParams out = base;
    for (const auto& [name, t] : ft.theta_u.tensors) out.tensors[name] = t;
    return out;
}

// Eq.-(7)-style adaptation: compute z once with the frozen encoders, then
// run Adam on (theta_u, z) only. `on_epoch` is invoked with the current
// assembled state at epoch 0 (zero-shot) and after every step.
inline FinetuneResult finetune(
    const ModelParams& base, const ModelConfig& cfg, const PdeProblem& problem,
    const FinetuneConfig& fcfg,
    const std::function<void(std::int64_t, const ModelParams&, const ProblemRepr&)>& on_epoch =
        {}) {
    if (fcfg.epochs < 0 || fcfg.n_f < 1 || fcfg.n_g.total() < 1 || fcfg.lr <= 0)
        throw config_error("finetune config: bad arguments");
    Rng rng(derive_seed(fcfg.seed, 0xF1E7));

    BoundarySet enc_bset =
        sample_boundary(problem, rng, fcfg.n_g.init, fcfg.n_g.left, fcfg.n_g.right);
    ProblemRepr z0 = problem_repr(base, cfg, problem.alpha, enc_bset);

    ModelParams tune;
    for (const auto& [name, t] : base.tensors)
        if (is_solution_net_tensor(name)) tune.tensors.emplace(name, t);
    if (cfg.has_repr()) {
        Tensor zt({1, cfg.width});
        zt.data.assign(z0.z.begin(), z0.z.end());
        tune.tensors.emplace("z", std::move(zt));
    }
    AdamState opt = init_adam(tune, fcfg.lr);

    auto current_repr = [&]() {
        if (!cfg.has_repr()) return ProblemRepr{};
        const auto& zd = tune.at("z").data;
        return ProblemRepr{std::vector<double>(zd.begin(), zd.end())};
    };
    auto report = [&](std::int64_t epoch) {
        if (!on_epoch) return;
        FinetuneResult snapshot{tune, current_repr(), {}};
        on_epoch(epoch, apply_finetuned(base, snapshot), snapshot.z);
    };

    FinetuneResult out;
    report(0);
    BoundarySet bset = enc_bset;
    std::vector<Point2> pts = sample_interior(problem, rng, fcfg.n_f);
    for (std::int64_t epoch = 0; epoch < fcfg.epochs; ++epoch) {
        if (fcfg.resample_each_epoch && epoch > 0) {
            bset = sample_boundary(problem, rng, fcfg.n_g.init, fcfg.n_g.left, fcfg.n_g.right);
            pts = sample_interior(problem, rng, fcfg.n_f);
        }
        const auto t0 = std::chrono::steady_clock::now();
        Tape tape;
        ParamBinder<double> bind(tape, tune);
        int z_node = cfg.has_repr() ? tape.param(tune.at("z")) : -1;
        LossNodes loss = build_pinn_loss(tape, bind, cfg, z_node, problem.alpha, pts, bset);
        tape.backward(loss.total);
        ParamGrad grad = bind.collect_grads();
        if (cfg.has_repr()) {
            auto zg = tape.grad(z_node);
            Tensor zgrad({1, cfg.width});
            if (!zg.empty()) zgrad.data.assign(zg.begin(), zg.end());
            grad.tensors.emplace("z", std::move(zgrad));
        }
        adam_step(tune, grad, opt, fcfg.lr);
        const double ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();
        out.log.push_back({epoch, 0, tape.scalar(loss.total), tape.scalar(loss.ge),
                           tape.scalar(loss.bc), fcfg.lr, ms});
        report(epoch + 1);
    }
    for (const auto& [name, t] : tune.tensors)
        if (name != "z") out.theta_u.tensors.emplace(name, t);
    out.z = current_repr();
    return out;
}

// ---- per-problem reference PINN ----------------------------------------------

struct RefPinnConfig {
    std::int64_t steps = 5000;
    double lr = 1e-3;
    int n_f = 256;
    NgTriplet n_g;
    bool resample_each_step = true;
    std::uint64_t seed = 0;
    int width = 256;
    int layers_u = 5;
    double siren_omega = 1.0;
};

// A solution network with the MT architecture trained from random
// initialization on a single problem; the solution oracle for plots and
// desk-scale comparisons.
inline std::pair<ModelParams, TrainLog> train_reference_pinn(const PdeProblem& problem,
                                                             const RefPinnConfig& rcfg) {
    ModelConfig cfg;
    cfg.method = Method::pinn;
    cfg.width = rcfg.width;
    cfg.layers_u = rcfg.layers_u;
    cfg.siren_omega = rcfg.siren_omega;
    ModelParams params = init_params(cfg, rcfg.seed);
    FinetuneConfig fcfg;
    fcfg.epochs = rcfg.steps;
    fcfg.lr = rcfg.lr;
    fcfg.n_f = rcfg.n_f;
    fcfg.n_g = rcfg.n_g;
    fcfg.resample_each_epoch = rcfg.resample_each_step;
    fcfg.seed = rcfg.seed;
    FinetuneResult ft = finetune(params, cfg, problem, fcfg);
    return {apply_finetuned(params, ft), std::move(ft.log)};
}

}  // namespace mpde
