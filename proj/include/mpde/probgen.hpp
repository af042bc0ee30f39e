#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "mpde/errors.hpp"
#include "mpde/pdealg.hpp"
#include "mpde/rng.hpp"
#include "mpde/tensor.hpp"

namespace mpde {

struct DomainBox {
    double t_min = 0.0, t_max = 1.0;
    double x_min = -1.0, x_max = 1.0;

    void validate() const {
        if (!(t_min < t_max && x_min < x_max)) throw config_error("degenerate domain box");
    }
};

// Initial-condition polynomial coefficients r1, r2, r3.
struct IcParams {
    double r1 = 0.0, r2 = 0.0, r3 = 0.0;
};

struct PdeProblem {
    CoeffVector alpha;
    DomainBox domain;
    IcParams ic;
    std::uint64_t seed = 0;
};

// Sampled Dirichlet data {(x_gn, g(x_gn))}.
struct BoundarySet {
    std::vector<Point2> points;
    std::vector<double> values;

    std::size_t size() const { return points.size(); }
};

// One random problem: each of the K coefficients is zero with probability
// 0.75 and Uniform[-1,1] otherwise; r1..r3 are Uniform[-1,1]; the domain is
// the fixed box [0,1] x [-1,1].
inline PdeProblem gen_problem(std::uint64_t seed) {
    Rng rng(seed);
    PdeProblem p;
    p.seed = seed;
    for (auto& a : p.alpha.alpha) {
        const double keep = rng.next_unit();
        const double value = rng.uniform(-1.0, 1.0);
        if (keep >= 0.75) a = value;
    }
    p.ic.r1 = rng.uniform(-1.0, 1.0);
    p.ic.r2 = rng.uniform(-1.0, 1.0);
    p.ic.r3 = rng.uniform(-1.0, 1.0);
    return p;
}

// g on the three Dirichlet edges: the initial condition
// (x - x_max)(x - x_min)(r1 x^2 + r2 x + r3) at t = t_min, zero on the side
// edges. Throws for points not on the boundary.
inline double boundary_value(const PdeProblem& p, Point2 pt) {
    const DomainBox& d = p.domain;
    if (pt.t == d.t_min) {
        const double x = pt.x;
        return (x - d.x_max) * (x - d.x_min) * (p.ic.r1 * x * x + p.ic.r2 * x + p.ic.r3);
    }
    if (pt.x == d.x_min || pt.x == d.x_max) return 0.0;
    throw domain_error("boundary_value: point is not on the domain boundary");
}

// n_init points on the t = t_min edge, n_left / n_right on the x = +-1 edges.
// Side edges use half-open sampling (t_min excluded) so corners only appear
// through the initial edge.
inline BoundarySet sample_boundary(const PdeProblem& p, Rng& rng, int n_init = 50,
                                   int n_left = 25, int n_right = 25) {
    if (n_init < 0 || n_left < 0 || n_right < 0 || n_init + n_left + n_right < 1)
        throw config_error("sample_boundary: need at least one point");
    const DomainBox& d = p.domain;
    BoundarySet b;
    b.points.reserve(n_init + n_left + n_right);
    for (int i = 0; i < n_init; ++i)
        b.points.push_back({d.t_min, d.x_min + (d.x_max - d.x_min) * rng.next_unit()});
    for (int i = 0; i < n_left; ++i)
        b.points.push_back({d.t_min + (d.t_max - d.t_min) * (1.0 - rng.next_unit()), d.x_min});
    for (int i = 0; i < n_right; ++i)
        b.points.push_back({d.t_min + (d.t_max - d.t_min) * (1.0 - rng.next_unit()), d.x_max});
    b.values.reserve(b.points.size());
    for (const Point2& pt : b.points) b.values.push_back(boundary_value(p, pt));
    return b;
}

// i.i.d. uniform collocation points in the open domain box.
inline std::vector<Point2> sample_interior(const PdeProblem& p, Rng& rng, int n_f) {
    if (n_f < 1) throw config_error("sample_interior: need at least one point");
    const DomainBox& d = p.domain;
    std::vector<Point2> pts(n_f);
    for (Point2& pt : pts) {
        pt.t = d.t_min + (d.t_max - d.t_min) * rng.next_open_unit();
        pt.x = d.x_min + (d.x_max - d.x_min) * rng.next_open_unit();
    }
    return pts;
}

// ---- problem-set files -------------------------------------------------
//
// Line-delimited text; '#' lines are comments. Columns, space separated:
//   seed alpha[0] .. alpha[K-1] r1 r2 r3
// Coefficients use shortest round-trip decimal literals, so regenerated
// files are byte-identical and values load back bit-exactly.

inline void write_problem_set(std::ostream& os, std::span<const PdeProblem> problems) {
    const int k = problems.empty() ? 28 : static_cast<int>(problems.front().alpha.alpha.size());
    os << "# metapde problem set v1 columns: seed alpha[" << k << "] r1 r2 r3\n";
    for (const PdeProblem& p : problems) {
        os << p.seed;
        for (double a : p.alpha.alpha) os << ' ' << format_coefficient(a);
        os << ' ' << format_coefficient(p.ic.r1) << ' ' << format_coefficient(p.ic.r2) << ' '
           << format_coefficient(p.ic.r3) << '\n';
    }
}

inline void write_problem_set(const std::string& path, std::span<const PdeProblem> problems) {
    std::ofstream os(path);
    if (!os) throw io_error("cannot open problem set for writing: " + path);
    write_problem_set(os, problems);
    if (!os.good()) throw io_error("failed writing problem set: " + path);
}

inline std::vector<PdeProblem> read_problem_set(std::istream& is) {
    std::vector<PdeProblem> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        PdeProblem p;
        if (!(ls >> p.seed)) throw config_error("problem set line " + std::to_string(lineno) +
                                                ": bad seed column");
        auto read_double = [&](double& v, const char* what) {
            std::string tok;
            if (!(ls >> tok)) throw config_error("problem set line " + std::to_string(lineno) +
                                                 ": missing " + what);
            auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
                throw config_error("problem set line " + std::to_string(lineno) + ": bad " + what);
        };
        for (std::size_t i = 0; i < p.alpha.alpha.size(); ++i)
            read_double(p.alpha.alpha[i], "coefficient");
        read_double(p.ic.r1, "r1");
        read_double(p.ic.r2, "r2");
        read_double(p.ic.r3, "r3");
        std::string extra;
        if (ls >> extra) throw config_error("problem set line " + std::to_string(lineno) +
                                            ": trailing columns");
        out.push_back(std::move(p));
    }
    return out;
}

inline std::vector<PdeProblem> read_problem_set(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open problem set: " + path);
    return read_problem_set(is);
}

}  // namespace mpde
