// metapde: meta-learning PDE solver front end.
//
// Subcommands: metatrain, gen-problems, eval, predict, finetune.
// Exit codes: 0 success, 2 configuration error, 3 numeric failure, 4 I/O.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "mpde/evalio.hpp"
#include "mpde/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace mpde;

namespace {

int default_threads() {
    if (const char* env = std::getenv("METAPDE_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return static_cast<int>(std::clamp(hw, 1u, 8u));
}

void require_keys(const json& obj, std::initializer_list<const char*> allowed,
                  const std::string& context) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) known = true;
        if (!known) throw config_error("unknown config key '" + it.key() + "' in " + context);
    }
}

json load_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open config file: " + path);
    json j;
    try {
        is >> j;
    } catch (const json::parse_error& e) {
        throw config_error("config file " + path + ": " + e.what());
    }
    if (!j.is_object()) throw config_error("config file must hold a JSON object");
    return j;
}

NgTriplet parse_ng_json(const json& j, const std::string& context) {
    require_keys(j, {"init", "left", "right"}, context);
    NgTriplet ng;
    ng.init = j.value("init", ng.init);
    ng.left = j.value("left", ng.left);
    ng.right = j.value("right", ng.right);
    return ng;
}

// TrainConfig from config-file JSON; CLI overrides are applied afterwards.
TrainConfig train_config_from_json(const json& j) {
    require_keys(j,
                 {"method", "seed", "epochs", "problems_per_epoch", "batch_size", "n_f", "n_g",
                  "lr0", "lr_half_every", "fixed_problem_set", "maml_inner_lr",
                  "maml_first_order", "resample_each_epoch", "threads", "checkpoint_every",
                  "model", "finetune"},
                 "config root");
    TrainConfig cfg;
    if (j.contains("method")) cfg.model.method = parse_method(j.at("method").get<std::string>());
    cfg.seed = j.value("seed", cfg.seed);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.problems_per_epoch = j.value("problems_per_epoch", cfg.problems_per_epoch);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.n_f = j.value("n_f", cfg.n_f);
    if (j.contains("n_g")) cfg.n_g = parse_ng_json(j.at("n_g"), "n_g");
    cfg.lr0 = j.value("lr0", cfg.lr0);
    cfg.lr_half_every = j.value("lr_half_every", cfg.lr_half_every);
    cfg.fixed_problem_set = j.value("fixed_problem_set", cfg.fixed_problem_set);
    cfg.maml_inner_lr = j.value("maml_inner_lr", cfg.maml_inner_lr);
    cfg.maml_first_order = j.value("maml_first_order", cfg.maml_first_order);
    cfg.resample_each_epoch = j.value("resample_each_epoch", cfg.resample_each_epoch);
    cfg.threads = j.value("threads", 0);
    if (j.contains("model")) {
        const json& m = j.at("model");
        require_keys(m, {"width", "layers_b", "layers_u", "alpha_dim", "siren_omega"}, "model");
        cfg.model.width = m.value("width", cfg.model.width);
        cfg.model.layers_b = m.value("layers_b", cfg.model.layers_b);
        cfg.model.layers_u = m.value("layers_u", cfg.model.layers_u);
        cfg.model.alpha_dim = m.value("alpha_dim", cfg.model.alpha_dim);
        cfg.model.siren_omega = m.value("siren_omega", cfg.model.siren_omega);
    }
    return cfg;
}

FinetuneConfig finetune_config_from_json(const json& root) {
    FinetuneConfig f;
    if (!root.contains("finetune")) return f;
    const json& j = root.at("finetune");
    require_keys(j, {"epochs", "lr", "n_f", "n_g", "eval_n_f"}, "finetune");
    f.epochs = j.value("epochs", f.epochs);
    f.lr = j.value("lr", f.lr);
    f.n_f = j.value("n_f", f.n_f);
    if (j.contains("n_g")) f.n_g = parse_ng_json(j.at("n_g"), "finetune.n_g");
    return f;
}

json ng_to_json(const NgTriplet& ng) {
    return json{{"init", ng.init}, {"left", ng.left}, {"right", ng.right}};
}

json train_config_to_json(const TrainConfig& cfg) {
    return json{{"method", method_name(cfg.model.method)},
                {"seed", cfg.seed},
                {"epochs", cfg.epochs},
                {"problems_per_epoch", cfg.problems_per_epoch},
                {"batch_size", cfg.batch_size},
                {"n_f", cfg.n_f},
                {"n_g", ng_to_json(cfg.n_g)},
                {"lr0", cfg.lr0},
                {"lr_half_every", cfg.lr_half_every},
                {"fixed_problem_set", cfg.fixed_problem_set},
                {"maml_inner_lr", cfg.maml_inner_lr},
                {"maml_first_order", cfg.maml_first_order},
                {"resample_each_epoch", cfg.resample_each_epoch},
                {"threads", cfg.threads},
                {"model",
                 json{{"width", cfg.model.width},
                      {"layers_b", cfg.model.layers_b},
                      {"layers_u", cfg.model.layers_u},
                      {"alpha_dim", cfg.model.alpha_dim},
                      {"siren_omega", cfg.model.siren_omega}}}};
}

fs::path ensure_out_dir(const std::string& out) {
    if (out.empty()) throw config_error("--out is required");
    fs::path dir(out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw io_error("cannot create output directory: " + out);
    return dir;
}

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream os(path);
    if (!os) throw io_error("cannot open for writing: " + path.string());
    os << content;
    if (!os.good()) throw io_error("failed writing: " + path.string());
}

void echo_config(const fs::path& dir, json j) {
    write_text(dir / "effective_config.json", j.dump(2) + "\n");
}

struct CsvTriplet {
    double a = 0, b = 0, c = 0;
};

CsvTriplet parse_triplet(const std::string& s, const char* what) {
    CsvTriplet t;
    const int n = std::sscanf(s.c_str(), "%lf,%lf,%lf", &t.a, &t.b, &t.c);
    if (n != 3) throw config_error(std::string(what) + ": expected three comma-separated values");
    return t;
}

NgTriplet parse_ng_flag(const std::string& s) {
    NgTriplet ng;
    const int n = std::sscanf(s.c_str(), "%d,%d,%d", &ng.init, &ng.left, &ng.right);
    if (n != 3) throw config_error("--ng: expected counts like 50,25,25");
    return ng;
}

std::pair<int, int> parse_grid_flag(const std::string& s) {
    int nt = 0, nx = 0;
    if (std::sscanf(s.c_str(), "%dx%d", &nt, &nx) != 2 || nt < 2 || nx < 2)
        throw config_error("--grid: expected NTxNX with both >= 2");
    return {nt, nx};
}

PdeProblem problem_from_flags(const std::string& pde, const std::string& ic,
                              std::uint64_t seed) {
    PdeProblem p;
    p.alpha = parse_pde(pde, make_basis(2, 2), 2);
    const CsvTriplet r = parse_triplet(ic, "--ic");
    p.ic = {r.a, r.b, r.c};
    p.seed = seed;
    return p;
}

// ---- subcommands ----------------------------------------------------------

struct MetatrainArgs {
    std::string config, out, method, fixed_problems, resume, ng;
    std::int64_t epochs = -1;
    std::int64_t problems_per_epoch = -1;
    int batch = -1, nf = -1, threads = 0;
    double lr0 = -1;
    std::int64_t lr_half_every = -1;
    std::int64_t seed = -1;
    std::int64_t checkpoint_every = 0;
    int width = -1, layers_b = -1, layers_u = -1;
    double siren_omega = -1;
};

int run_metatrain(const MetatrainArgs& a) {
    json file_cfg = a.config.empty() ? json::object() : load_config_file(a.config);
    TrainConfig cfg = train_config_from_json(file_cfg);
    if (!a.method.empty()) cfg.model.method = parse_method(a.method);
    if (a.epochs >= 0) cfg.epochs = a.epochs;
    if (a.problems_per_epoch >= 0) cfg.problems_per_epoch = a.problems_per_epoch;
    if (a.batch >= 0) cfg.batch_size = a.batch;
    if (a.nf >= 0) cfg.n_f = a.nf;
    if (!a.ng.empty()) cfg.n_g = parse_ng_flag(a.ng);
    if (a.lr0 >= 0) cfg.lr0 = a.lr0;
    if (a.lr_half_every >= 0) cfg.lr_half_every = a.lr_half_every;
    if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
    if (!a.fixed_problems.empty()) cfg.fixed_problem_set = a.fixed_problems;
    if (a.width >= 0) cfg.model.width = a.width;
    if (a.layers_b >= 0) cfg.model.layers_b = a.layers_b;
    if (a.layers_u >= 0) cfg.model.layers_u = a.layers_u;
    if (a.siren_omega >= 0) cfg.model.siren_omega = a.siren_omega;
    cfg.threads = a.threads > 0 ? a.threads : (cfg.threads > 0 ? cfg.threads : default_threads());
    cfg.validate();

    const fs::path dir = ensure_out_dir(a.out);
    json echo = train_config_to_json(cfg);
    echo["command"] = "metatrain";
    echo["checkpoint_every"] = a.checkpoint_every;
    echo["resume"] = a.resume;
    echo_config(dir, echo);

    TrainState state;
    if (!a.resume.empty()) {
        Checkpoint ck = load_checkpoint(a.resume);
        if (ck.config_digest != config_digest(cfg))
            throw config_error("--resume: checkpoint was produced under a different config");
        state = std::move(ck.state);
    } else {
        state = init_train_state(cfg);
    }

    TrainLog log;
    const std::uint64_t digest = config_digest(cfg);
    auto save_all = [&](const TrainState& st, const TrainLog& l, const std::string& name) {
        save_checkpoint((dir / name).string(), cfg.model, st, cfg.seed, digest);
        std::ofstream log_os(dir / "train_log.txt");
        write_train_log(log_os, l);
        std::ofstream t_os(dir / "timings.txt");
        write_timings(t_os, l);
    };

    TrainHooks hooks;
    hooks.on_epoch = [&](const TrainState& st, const TrainLog& l) {
        if (a.checkpoint_every > 0 && st.epoch % a.checkpoint_every == 0)
            save_all(st, l, "ckpt_" + std::to_string(st.epoch) + ".ckpt");
    };
    try {
        meta_train(cfg, state, log, hooks);
    } catch (const numeric_error&) {
        save_all(state, log, "rescue.ckpt");
        std::cerr << "training diverged; last good state written to "
                  << (dir / "rescue.ckpt").string() << "\n";
        throw;
    }
    save_all(state, log, "final.ckpt");
    std::cout << "trained " << log.size() << " iterations; final checkpoint "
              << (dir / "final.ckpt").string() << "\n";
    return 0;
}

int run_gen_problems(std::int64_t n, std::uint64_t seed, const std::string& out) {
    if (n < 0) throw config_error("gen-problems: --n must be >= 0");
    std::vector<PdeProblem> problems;
    problems.reserve(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i)
        problems.push_back(gen_problem(derive_seed(seed, static_cast<std::uint64_t>(i))));
    write_problem_set(out, problems);
    std::cout << "wrote " << n << " problems to " << out << "\n";
    return 0;
}

int run_eval(const std::string& ckpt, const std::string& problems_path, int nf,
             const std::string& ng_flag, std::uint64_t seed, const std::string& out,
             int threads) {
    Checkpoint ck = load_checkpoint(ckpt);
    auto problems = read_problem_set(problems_path);
    if (problems.empty()) throw config_error("eval: problem set is empty");
    NgTriplet ng;
    if (!ng_flag.empty()) ng = parse_ng_flag(ng_flag);
    const int used_threads = threads > 0 ? threads : default_threads();

    EvalReport rep = evaluate(ck.state.params, ck.model, problems, nf, ng, seed, used_threads);

    const fs::path dir = ensure_out_dir(out);
    echo_config(dir, json{{"command", "eval"},
                          {"ckpt", ckpt},
                          {"problems", problems_path},
                          {"method", method_name(ck.model.method)},
                          {"n_f", nf},
                          {"n_g", ng_to_json(ng)},
                          {"seed", seed},
                          {"threads", used_threads}});
    std::ostringstream table;
    write_eval_report(table, rep, method_name(ck.model.method));
    write_text(dir / "report.txt", table.str());
    std::ostringstream csv;
    write_eval_csv(csv, rep);
    write_text(dir / "per_problem.csv", csv.str());
    std::cout << table.str();
    return 0;
}

// Problem representation for a checkpoint: finetuned checkpoints carry z
// directly; meta checkpoints of encoder methods compute it from a sampled
// boundary set.
ProblemRepr repr_for(const Checkpoint& ck, const PdeProblem& problem, const NgTriplet& ng,
                     std::uint64_t seed) {
    if (ck.state.params.has("z")) {
        const auto& zd = ck.state.params.at("z").data;
        return ProblemRepr{std::vector<double>(zd.begin(), zd.end())};
    }
    if (!ck.model.has_repr()) return {};
    Rng rng(derive_seed(seed, 0xB0E7));
    BoundarySet bset = sample_boundary(problem, rng, ng.init, ng.left, ng.right);
    return problem_repr(ck.state.params, ck.model, problem.alpha, bset);
}

int run_predict(const std::string& ckpt, const std::string& pde, const std::string& ic,
                const std::string& grid, const std::string& ng_flag, std::uint64_t seed,
                const std::string& out) {
    Checkpoint ck = load_checkpoint(ckpt);
    PdeProblem problem = problem_from_flags(pde, ic, seed);
    NgTriplet ng;
    if (!ng_flag.empty()) ng = parse_ng_flag(ng_flag);
    auto [nt, nx] = parse_grid_flag(grid);

    const fs::path dir = ensure_out_dir(out);
    echo_config(dir, json{{"command", "predict"},
                          {"ckpt", ckpt},
                          {"pde", pde},
                          {"canonical_pde", print_pde(problem.alpha)},
                          {"ic", ic},
                          {"grid", grid},
                          {"n_g", ng_to_json(ng)},
                          {"seed", seed}});

    const auto t0 = std::chrono::steady_clock::now();
    ProblemRepr z = repr_for(ck, problem, ng, seed);
    export_grid(ck.state.params, ck.model, z, problem.domain, nt, nx,
                (dir / "grid.csv").string(), (dir / "heatmap.pgm").string());
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "predicted " << nt * nx << " grid points in " << std::fixed
              << std::setprecision(3) << secs << " s\n";
    return 0;
}

int run_finetune(const std::string& ckpt, const std::string& pde, const std::string& ic,
                 std::int64_t epochs, double lr, int nf, const std::string& ng_flag,
                 std::uint64_t seed, int eval_nf, const std::string& out) {
    Checkpoint ck = load_checkpoint(ckpt);
    if (ck.state.params.has("z"))
        throw config_error("finetune: checkpoint is already finetuned");
    PdeProblem problem = problem_from_flags(pde, ic, seed);

    FinetuneConfig fcfg;
    fcfg.epochs = epochs;
    if (lr > 0) fcfg.lr = lr;
    if (nf > 0) fcfg.n_f = nf;
    if (!ng_flag.empty()) fcfg.n_g = parse_ng_flag(ng_flag);
    fcfg.seed = seed;

    const fs::path dir = ensure_out_dir(out);
    echo_config(dir, json{{"command", "finetune"},
                          {"ckpt", ckpt},
                          {"pde", pde},
                          {"canonical_pde", print_pde(problem.alpha)},
                          {"ic", ic},
                          {"epochs", fcfg.epochs},
                          {"lr", fcfg.lr},
                          {"n_f", fcfg.n_f},
                          {"n_g", ng_to_json(fcfg.n_g)},
                          {"eval_n_f", eval_nf},
                          {"seed", seed}});

    // fixed evaluation sample for the error curve
    Rng eval_rng(derive_seed(seed, 0xE7A1));
    BoundarySet eval_b = sample_boundary(problem, eval_rng, 50, 25, 25);
    auto eval_pts = sample_interior(problem, eval_rng, eval_nf);

    std::ostringstream curve;
    curve << "epoch,pinn,ge,bc\n";
    auto on_epoch = [&](std::int64_t epoch, const ModelParams& params, const ProblemRepr& z) {
        PinnError e = eval_pinn(params, ck.model, z, problem, eval_pts, eval_b);
        curve << epoch << ',' << format_coefficient(e.total) << ',' << format_coefficient(e.ge)
              << ',' << format_coefficient(e.bc) << '\n';
    };
    FinetuneResult ft = finetune(ck.state.params, ck.model, problem, fcfg, on_epoch);
    write_text(dir / "curve.csv", curve.str());

    TrainState ft_state;
    ft_state.params = apply_finetuned(ck.state.params, ft);
    if (ck.model.has_repr()) {
        Tensor zt({1, ck.model.width});
        zt.data.assign(ft.z.z.begin(), ft.z.z.end());
        ft_state.params.tensors.emplace("z", std::move(zt));
    }
    ft_state.opt = init_adam(ft_state.params);
    save_checkpoint((dir / "finetuned.ckpt").string(), ck.model, ft_state, seed,
                    ck.config_digest, "finetuned");
    std::ofstream log_os(dir / "train_log.txt");
    write_train_log(log_os, ft.log);
    std::cout << "finetuned " << fcfg.epochs << " epochs; curve written to "
              << (dir / "curve.csv").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"metapde: meta-learning solver for 2-D polynomial PDE problems"};
    app.require_subcommand(1);

    MetatrainArgs mt;
    CLI::App* train = app.add_subcommand("metatrain", "meta-train a model");
    train->add_option("--config", mt.config, "JSON config file");
    train->add_option("--method", mt.method, "ours|np|mt|maml");
    train->add_option("--out", mt.out, "output directory")->required();
    train->add_option("--epochs", mt.epochs, "epochs to train");
    train->add_option("--problems-per-epoch", mt.problems_per_epoch, "problems per epoch");
    train->add_option("--batch", mt.batch, "problems per mini-batch");
    train->add_option("--nf", mt.nf, "interior collocation points per problem");
    train->add_option("--ng", mt.ng, "boundary points init,left,right");
    train->add_option("--lr0", mt.lr0, "initial learning rate");
    train->add_option("--lr-half-every", mt.lr_half_every, "epochs between halvings");
    train->add_option("--seed", mt.seed, "master seed");
    train->add_option("--fixed-problems", mt.fixed_problems, "train on a fixed problem set file");
    train->add_option("--checkpoint-every", mt.checkpoint_every, "epochs between checkpoints");
    train->add_option("--resume", mt.resume, "continue from a checkpoint");
    train->add_option("--threads", mt.threads, "worker threads");
    train->add_option("--width", mt.width, "hidden width");
    train->add_option("--layers-b", mt.layers_b, "encoder affine layers");
    train->add_option("--layers-u", mt.layers_u, "solution-net trunk affine layers");
    train->add_option("--siren-omega", mt.siren_omega, "sine activation frequency");

    std::int64_t gp_n = 0;
    std::uint64_t gp_seed = 0;
    std::string gp_out;
    CLI::App* gen = app.add_subcommand("gen-problems", "write a random problem-set file");
    gen->add_option("--n", gp_n, "number of problems")->required();
    gen->add_option("--seed", gp_seed, "master seed");
    gen->add_option("--out", gp_out, "output file")->required();

    std::string ev_ckpt, ev_problems, ev_ng, ev_out;
    int ev_nf = 10000, ev_threads = 0;
    std::uint64_t ev_seed = 0;
    CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on a problem set");
    ev->add_option("--ckpt", ev_ckpt, "checkpoint file")->required();
    ev->add_option("--problems", ev_problems, "problem-set file")->required();
    ev->add_option("--nf", ev_nf, "interior evaluation points");
    ev->add_option("--ng", ev_ng, "boundary points init,left,right");
    ev->add_option("--seed", ev_seed, "evaluation sampling seed");
    ev->add_option("--out", ev_out, "output directory")->required();
    ev->add_option("--threads", ev_threads, "worker threads");

    std::string pr_ckpt, pr_pde, pr_ic = "0,0,0", pr_grid = "100x100", pr_ng, pr_out;
    std::uint64_t pr_seed = 0;
    CLI::App* pr = app.add_subcommand("predict", "zero-shot solution grid for a PDE problem");
    pr->add_option("--ckpt", pr_ckpt, "checkpoint file")->required();
    pr->add_option("--pde", pr_pde, "governing equation, e.g. \"u_t + u*u_x - 0.1*u_xx\"")
        ->required();
    pr->add_option("--ic", pr_ic, "initial-condition coefficients r1,r2,r3");
    pr->add_option("--grid", pr_grid, "output grid NTxNX");
    pr->add_option("--ng", pr_ng, "boundary points init,left,right");
    pr->add_option("--seed", pr_seed, "boundary sampling seed");
    pr->add_option("--out", pr_out, "output directory")->required();

    std::string ft_ckpt, ft_pde, ft_ic = "0,0,0", ft_ng, ft_out;
    std::int64_t ft_epochs = 100;
    double ft_lr = -1;
    int ft_nf = -1, ft_eval_nf = 1000;
    std::uint64_t ft_seed = 0;
    CLI::App* ft = app.add_subcommand("finetune", "adapt a checkpoint to one PDE problem");
    ft->add_option("--ckpt", ft_ckpt, "checkpoint file")->required();
    ft->add_option("--pde", ft_pde, "governing equation")->required();
    ft->add_option("--ic", ft_ic, "initial-condition coefficients r1,r2,r3");
    ft->add_option("--epochs", ft_epochs, "finetuning epochs");
    ft->add_option("--lr", ft_lr, "finetuning learning rate");
    ft->add_option("--nf", ft_nf, "interior collocation points per epoch");
    ft->add_option("--ng", ft_ng, "boundary points init,left,right");
    ft->add_option("--eval-nf", ft_eval_nf, "interior points for the error curve");
    ft->add_option("--seed", ft_seed, "sampling seed");
    ft->add_option("--out", ft_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*train) return run_metatrain(mt);
        if (*gen) return run_gen_problems(gp_n, gp_seed, gp_out);
        if (*ev)
            return run_eval(ev_ckpt, ev_problems, ev_nf, ev_ng, ev_seed, ev_out, ev_threads);
        if (*pr) return run_predict(pr_ckpt, pr_pde, pr_ic, pr_grid, pr_ng, pr_seed, pr_out);
        if (*ft)
            return run_finetune(ft_ckpt, ft_pde, ft_ic, ft_epochs, ft_lr, ft_nf, ft_ng, ft_seed,
                                ft_eval_nf, ft_out);
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const numeric_error& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const checkpoint_error& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return 4;
    } catch (const io_error& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
