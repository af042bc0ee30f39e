#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mpde/losses.hpp"
#include "mpde/model.hpp"
#include "mpde/train.hpp"
#include "mpde/util.hpp"

namespace mpde {

// ---- evaluation harness ------------------------------------------------------

struct EvalEntry {
    std::size_t index = 0;
    std::uint64_t problem_seed = 0;
    PinnError err;
    bool failed = false;
    std::string message;
};

struct EvalReport {
    std::vector<EvalEntry> entries;
    int n_problems = 0, n_ok = 0, n_failed = 0;
    int n_f = 0;
    NgTriplet n_g;
    std::uint64_t seed = 0;
    PinnError mean;  // over successful problems
    PinnError sem;   // sample stddev / sqrt(n_ok); zero when n_ok <= 1
    bool single = false;
};

// PINN/GE/BC errors of `params` on each problem with freshly sampled
// evaluation points. Failed problems are flagged and excluded from the
// aggregates; per-problem work runs concurrently and is written by slot, so
// the report is independent of the thread count.
inline EvalReport evaluate(const ModelParams& params, const ModelConfig& cfg,
                           std::span<const PdeProblem> problems, int n_f, NgTriplet n_g,
                           std::uint64_t seed, int threads = 1) {
    if (problems.empty()) throw config_error("evaluate: need at least one problem");
    if (n_f < 1 || n_g.total() < 1) throw config_error("evaluate: bad point counts");
    EvalReport rep;
    rep.n_problems = static_cast<int>(problems.size());
    rep.n_f = n_f;
    rep.n_g = n_g;
    rep.seed = seed;
    rep.entries.resize(problems.size());

    parallel_chunks(static_cast<int>(problems.size()), threads, [&](int begin, int end) {
        for (int i = begin; i < end; ++i) {
            EvalEntry& e = rep.entries[i];
            e.index = static_cast<std::size_t>(i);
            e.problem_seed = problems[i].seed;
            try {
                Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
                BoundarySet bset =
                    sample_boundary(problems[i], rng, n_g.init, n_g.left, n_g.right);
                auto pts = sample_interior(problems[i], rng, n_f);
                ProblemRepr z = problem_repr(params, cfg, problems[i].alpha, bset);
                e.err = eval_pinn(params, cfg, z, problems[i], pts, bset);
            } catch (const numeric_error& ex) {
                e.failed = true;
                e.message = ex.what();
            }
        }
    });

    double m[3] = {0, 0, 0};
    for (const EvalEntry& e : rep.entries)
        if (!e.failed) {
            ++rep.n_ok;
            m[0] += e.err.ge;
            m[1] += e.err.bc;
            m[2] += e.err.total;
        }
    rep.n_failed = rep.n_problems - rep.n_ok;
    if (rep.n_ok > 0) {
        rep.mean = {m[0] / rep.n_ok, m[1] / rep.n_ok, m[2] / rep.n_ok};
        if (rep.n_ok > 1) {
            double v[3] = {0, 0, 0};
            for (const EvalEntry& e : rep.entries)
                if (!e.failed) {
                    v[0] += (e.err.ge - rep.mean.ge) * (e.err.ge - rep.mean.ge);
                    v[1] += (e.err.bc - rep.mean.bc) * (e.err.bc - rep.mean.bc);
                    v[2] += (e.err.total - rep.mean.total) * (e.err.total - rep.mean.total);
                }
            const double norm = 1.0 / (rep.n_ok - 1);
            rep.sem = {std::sqrt(v[0] * norm / rep.n_ok), std::sqrt(v[1] * norm / rep.n_ok),
                       std::sqrt(v[2] * norm / rep.n_ok)};
        } else {
            rep.single = true;
        }
    }
    return rep;
}

inline void write_eval_csv(std::ostream& os, const EvalReport& rep) {
    os << "index,seed,ge,bc,total,failed\n";
    for (const EvalEntry& e : rep.entries) {
        os << e.index << ',' << e.problem_seed << ',' << format_coefficient(e.err.ge) << ','
           << format_coefficient(e.err.bc) << ',' << format_coefficient(e.err.total) << ','
           << (e.failed ? 1 : 0) << '\n';
    }
}

inline void write_eval_report(std::ostream& os, const EvalReport& rep, const std::string& tag) {
    os << "evaluation: " << tag << "\n";
    os << "problems " << rep.n_problems << "  ok " << rep.n_ok << "  failed " << rep.n_failed
       << "\n";
    os << "N_f " << rep.n_f << "  N_g " << rep.n_g.init << "+" << rep.n_g.left << "+"
       << rep.n_g.right << "  seed " << rep.seed << "\n";
    if (rep.single) os << "note: single problem, standard error reported as 0\n";
    os << "PINN error " << format_coefficient(rep.mean.total) << " +- "
       << format_coefficient(rep.sem.total) << "\n";
    os << "GE error   " << format_coefficient(rep.mean.ge) << " +- "
       << format_coefficient(rep.sem.ge) << "\n";
    os << "BC error   " << format_coefficient(rep.mean.bc) << " +- "
       << format_coefficient(rep.sem.bc) << "\n";
}

// ---- solution grids ----------------------------------------------------------

// nt x nx values on the uniform closed grid over the domain box, row-major
// with t as the outer (row) index. Grid endpoints land exactly on the box.
inline std::vector<double> grid_values(const ModelParams& params, const ModelConfig& cfg,
                                       const ProblemRepr& z, const DomainBox& box, int nt,
                                       int nx, std::vector<Point2>* pts_out = nullptr) {
    if (nt < 2 || nx < 2) throw config_error("grid: need nt, nx >= 2");
    std::vector<Point2> pts;
    pts.reserve(static_cast<std::size_t>(nt) * nx);
    for (int it = 0; it < nt; ++it) {
        const double t =
            it == nt - 1 ? box.t_max : box.t_min + (box.t_max - box.t_min) * it / (nt - 1);
        for (int ix = 0; ix < nx; ++ix) {
            const double x =
                ix == nx - 1 ? box.x_max : box.x_min + (box.x_max - box.x_min) * ix / (nx - 1);
            pts.push_back({t, x});
        }
    }
    auto values = predict_values(params, cfg, z, pts);
    if (pts_out) *pts_out = std::move(pts);
    return values;
}

inline void write_grid_csv(std::ostream& os, std::span<const Point2> pts,
                           std::span<const double> values) {
    os << "t,x,u\n";
    for (std::size_t i = 0; i < pts.size(); ++i)
        os << format_coefficient(pts[i].t) << ',' << format_coefficient(pts[i].x) << ','
           << format_coefficient(values[i]) << '\n';
}

// 8-bit binary PGM heatmap; u is min-max normalized to 0..255 (flat fields
// map to 0). Row 0 is t_min, column 0 is x_min.
inline void write_grid_pgm(std::ostream& os, std::span<const double> values, int nt, int nx) {
    double lo = values[0], hi = values[0];
    for (double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    os << "P5\n" << nx << " " << nt << "\n255\n";
    const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
    for (double v : values) {
        const int byte = static_cast<int>(std::lround((v - lo) * scale));
        os.put(static_cast<char>(std::clamp(byte, 0, 255)));
    }
}

inline void export_grid(const ModelParams& params, const ModelConfig& cfg, const ProblemRepr& z,
                        const DomainBox& box, int nt, int nx, const std::string& csv_path,
                        const std::string& pgm_path = "") {
    std::vector<Point2> pts;
    auto values = grid_values(params, cfg, z, box, nt, nx, &pts);
    std::ofstream csv(csv_path);
    if (!csv) throw io_error("cannot open grid csv for writing: " + csv_path);
    write_grid_csv(csv, pts, values);
    if (!csv.good()) throw io_error("failed writing grid csv: " + csv_path);
    if (!pgm_path.empty()) {
        std::ofstream pgm(pgm_path, std::ios::binary);
        if (!pgm) throw io_error("cannot open heatmap for writing: " + pgm_path);
        write_grid_pgm(pgm, values, nt, nx);
        if (!pgm.good()) throw io_error("failed writing heatmap: " + pgm_path);
    }
}

// ---- train log files ---------------------------------------------------------

// Deterministic per-iteration records; wall-clock timings go to a separate
// sidecar so log files are byte-identical across same-seed runs.
inline void write_train_log(std::ostream& os, const TrainLog& log) {
    os << "# epoch iter loss_total loss_ge loss_bc lr\n";
    for (const TrainRecord& r : log)
        os << r.epoch << ' ' << r.iter << ' ' << format_coefficient(r.loss_total) << ' '
           << format_coefficient(r.loss_ge) << ' ' << format_coefficient(r.loss_bc) << ' '
           << format_coefficient(r.lr) << '\n';
}

inline void write_timings(std::ostream& os, const TrainLog& log) {
    os << "# epoch iter wall_ms\n";
    for (const TrainRecord& r : log)
        os << r.epoch << ' ' << r.iter << ' ' << std::fixed << std::setprecision(3) << r.wall_ms
           << '\n';
}

// ---- checkpoints ---------------------------------------------------------------
//
// Text manifest followed by raw little-endian IEEE-754 64-bit blobs:
//
//   metapde-checkpoint v1
//   kind <meta|finetuned>
//   method <name>
//   model <width> <layers_b> <layers_u> <alpha_dim> <siren_omega>
//   adam <step> <lr0> <beta1> <beta2> <eps>
//   progress <epoch> <problems_seen> <lr_rescue> <rescue_count>
//   seed <u64>
//   digest <u64>
//   tensors <count>
//   <name> <rank> <dim...>          (one line per tensor, name order)
//   blob
//   <for each tensor: value blob, then Adam m blob, then Adam v blob>

struct Checkpoint {
    std::string kind = "meta";
    ModelConfig model;
    TrainState state;
    std::uint64_t seed = 0;
    std::uint64_t config_digest = 0;
};

// Canonical config fingerprint used to refuse resuming under a different
// configuration.
inline std::uint64_t config_digest(const TrainConfig& cfg) {
    std::ostringstream ss;
    ss << method_name(cfg.model.method) << '|' << cfg.model.width << '|' << cfg.model.layers_b
       << '|' << cfg.model.layers_u << '|' << cfg.model.alpha_dim << '|'
       << format_coefficient(cfg.model.siren_omega) << '|' << cfg.problems_per_epoch << '|'
       << cfg.batch_size << '|' << cfg.n_f << '|' << cfg.n_g.init << '|' << cfg.n_g.left << '|'
       << cfg.n_g.right << '|' << format_coefficient(cfg.lr0) << '|' << cfg.lr_half_every << '|'
       << cfg.seed << '|' << cfg.fixed_problem_set << '|'
       << format_coefficient(cfg.maml_inner_lr) << '|' << cfg.maml_first_order;
    return fnv1a64(ss.str());
}

namespace detail {
inline void write_blob(std::ostream& os, std::span<const double> data) {
    os.write(reinterpret_cast<const char*>(data.data()),
             static_cast<std::streamsize>(data.size() * sizeof(double)));
}

inline void read_blob(std::istream& is, std::span<double> data) {
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (static_cast<std::size_t>(is.gcount()) != data.size() * sizeof(double))
        throw checkpoint_truncated_error("checkpoint blob is truncated");
}
}  // namespace detail

inline void save_checkpoint(const std::string& path, const ModelConfig& model,
                            const TrainState& state, std::uint64_t seed, std::uint64_t digest,
                            const std::string& kind = "meta") {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open checkpoint for writing: " + path);
    os << "metapde-checkpoint v1\n";
    os << "kind " << kind << "\n";
    os << "method " << method_name(model.method) << "\n";
    os << "model " << model.width << ' ' << model.layers_b << ' ' << model.layers_u << ' '
       << model.alpha_dim << ' ' << format_coefficient(model.siren_omega) << "\n";
    os << "adam " << state.opt.step << ' ' << format_coefficient(state.opt.lr0) << ' '
       << format_coefficient(state.opt.beta1) << ' ' << format_coefficient(state.opt.beta2) << ' '
       << format_coefficient(state.opt.eps) << "\n";
    os << "progress " << state.epoch << ' ' << state.problems_seen << ' '
       << format_coefficient(state.lr_rescue) << ' ' << state.rescue_count << "\n";
    os << "seed " << seed << "\n";
    os << "digest " << digest << "\n";
    os << "tensors " << state.params.tensors.size() << "\n";
    for (const auto& [name, t] : state.params.tensors) {
        os << name << ' ' << t.shape.size();
        for (int d : t.shape) os << ' ' << d;
        os << "\n";
    }
    os << "blob\n";
    for (const auto& [name, t] : state.params.tensors) {
        detail::write_blob(os, t.data);
        detail::write_blob(os, state.opt.m.at(name).data);
        detail::write_blob(os, state.opt.v.at(name).data);
    }
    if (!os.good()) throw io_error("failed writing checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open checkpoint: " + path);
    std::string line;
    auto next_line = [&](const char* what) {
        if (!std::getline(is, line))
            throw checkpoint_truncated_error(std::string("checkpoint ends before ") + what);
        return line;
    };
    if (next_line("header") != "metapde-checkpoint v1")
        throw checkpoint_version_error("unsupported checkpoint version: " + line);

    Checkpoint ck;
    auto expect_field = [&](const char* key) {
        next_line(key);
        std::istringstream ls(line);
        std::string k;
        ls >> k;
        if (k != key) throw checkpoint_error("expected checkpoint field " + std::string(key));
        return std::string(line.substr(k.size() + 1));
    };
    ck.kind = expect_field("kind");
    ck.model.method = parse_method(expect_field("method"));
    {
        std::istringstream ls(expect_field("model"));
        if (!(ls >> ck.model.width >> ck.model.layers_b >> ck.model.layers_u >>
              ck.model.alpha_dim >> ck.model.siren_omega))
            throw checkpoint_error("bad model line in checkpoint");
    }
    AdamState opt;
    {
        std::istringstream ls(expect_field("adam"));
        if (!(ls >> opt.step >> opt.lr0 >> opt.beta1 >> opt.beta2 >> opt.eps))
            throw checkpoint_error("bad adam line in checkpoint");
    }
    {
        std::istringstream ls(expect_field("progress"));
        if (!(ls >> ck.state.epoch >> ck.state.problems_seen >> ck.state.lr_rescue >>
              ck.state.rescue_count))
            throw checkpoint_error("bad progress line in checkpoint");
    }
    ck.seed = std::stoull(expect_field("seed"));
    ck.config_digest = std::stoull(expect_field("digest"));

    std::size_t n_tensors = std::stoull(expect_field("tensors"));
    std::vector<std::pair<std::string, std::vector<int>>> manifest;
    for (std::size_t i = 0; i < n_tensors; ++i) {
        std::istringstream ls(next_line("tensor manifest"));
        std::string name;
        std::size_t rank = 0;
        if (!(ls >> name >> rank)) throw checkpoint_error("bad tensor manifest line");
        std::vector<int> shape(rank);
        for (auto& d : shape) {
            if (!(ls >> d) || d < 0) throw checkpoint_shape_error("bad tensor shape for " + name);
        }
        manifest.emplace_back(std::move(name), std::move(shape));
    }
    if (next_line("blob marker") != "blob") throw checkpoint_error("missing blob marker");

    for (auto& [name, shape] : manifest) {
        Tensor t(shape), m(shape), v(shape);
        detail::read_blob(is, t.data);
        detail::read_blob(is, m.data);
        detail::read_blob(is, v.data);
        ck.state.params.tensors.emplace(name, std::move(t));
        opt.m.tensors.emplace(name, std::move(m));
        opt.v.tensors.emplace(name, std::move(v));
    }
    char extra;
    if (is.read(&extra, 1) && is.gcount() == 1)
        throw checkpoint_error("trailing bytes after checkpoint blob");
    ck.state.opt = std::move(opt);

    // cross-check against the recorded model shape
    ModelParams expected = init_params(ck.model, 0);
    if (ck.kind == "meta") {
        for (const auto& [name, t] : expected.tensors) {
            auto it = ck.state.params.tensors.find(name);
            if (it == ck.state.params.tensors.end() || it->second.shape != t.shape)
                throw checkpoint_shape_error("checkpoint tensor " + name +
                                             " does not match the recorded model");
        }
        if (ck.state.params.tensors.size() != expected.tensors.size())
            throw checkpoint_shape_error("checkpoint tensor set does not match the model");
    }
    return ck;
}

}  // namespace mpde
