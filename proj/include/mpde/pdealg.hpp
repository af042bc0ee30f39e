#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "mpde/errors.hpp"
#include "mpde/jet.hpp"
#include "mpde/tape.hpp"

namespace mpde {

// Derivative variables of the governing-equation polynomial: all partial
// derivatives of u up to order J over D coordinates, graded by total order
// with t-orders sorting before x-orders. For D=2, J=2 this is
// [u, u_t, u_x, u_tt, u_tx, u_xx], matching jet component order.
struct DerivBasis {
    int D = 2;
    int J = 2;
    std::vector<std::vector<int>> variables;  // per variable: derivative order per coordinate
    std::vector<std::string> names;

    int size() const { return static_cast<int>(variables.size()); }

    bool operator==(const DerivBasis& o) const { return D == o.D && J == o.J; }
};

inline const char* coord_name(int i) {
    static const char* names[3] = {"t", "x", "y"};
    if (i < 0 || i >= 3) throw config_error("coordinate names defined for D <= 3 only");
    return names[i];
}

namespace detail {
// Descending lexicographic tuples of a fixed total; prefix holds the already
// chosen leading entries.
inline void emit_tuples(std::vector<int>& prefix, int pos, int total, int width,
                        std::vector<std::vector<int>>& out) {
    if (pos == width - 1) {
        prefix[pos] = total;
        out.push_back(prefix);
        return;
    }
    for (int v = total; v >= 0; --v) {
        prefix[pos] = v;
        emit_tuples(prefix, pos + 1, total - v, width, out);
    }
}

inline std::vector<std::vector<int>> graded_tuples(int width, int max_total) {
    std::vector<std::vector<int>> out;
    std::vector<int> prefix(width, 0);
    for (int total = 0; total <= max_total; ++total)
        emit_tuples(prefix, 0, total, width, out);
    return out;
}
}  // namespace detail

inline DerivBasis make_basis(int D, int J) {
    if (D < 1 || J < 0) throw config_error("make_basis: need D >= 1, J >= 0");
    DerivBasis b;
    b.D = D;
    b.J = J;
    b.variables = detail::graded_tuples(D, J);
    for (const auto& orders : b.variables) {
        std::string n = "u";
        int total = 0;
        for (int o : orders) total += o;
        if (total > 0) {
            n += "_";
            for (int c = 0; c < D; ++c)
                for (int k = 0; k < orders[c]; ++k) n += coord_name(c);
        }
        b.names.push_back(std::move(n));
    }
    return b;
}

struct MultiIndex {
    std::vector<int> exponents;

    int degree() const {
        int d = 0;
        for (int e : exponents) d += e;
        return d;
    }

    bool operator==(const MultiIndex& o) const { return exponents == o.exponents; }
};

inline std::uint64_t binomial(int n, int k) {
    if (k < 0 || k > n) return 0;
    std::uint64_t r = 1;
    for (int i = 1; i <= k; ++i) {
        if (r > (1ull << 62) / static_cast<std::uint64_t>(n - k + i))
            throw config_error("binomial overflow");
        r = r * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
    }
    return r;
}

// All monomials of total degree <= C over the M = binom(D+J, J) derivative
// variables, in graded-lex order (degree ascending, then descending
// lexicographic on the exponent tuple). Index 0 is the constant driving term.
inline std::vector<MultiIndex> enumerate_monomials(int D, int C, int J) {
    if (D < 1 || C < 0 || J < 0) throw config_error("enumerate_monomials: bad arguments");
    const std::uint64_t m = binomial(D + J, J);
    const std::uint64_t k = binomial(static_cast<int>(m) + C, C);
    if (k > 1000000ull) throw config_error("enumerate_monomials: K exceeds 10^6");
    std::vector<MultiIndex> out;
    out.reserve(k);
    for (auto& tuple : detail::graded_tuples(static_cast<int>(m), C))
        out.push_back(MultiIndex{std::move(tuple)});
    return out;
}

// Shared immutable monomial table per (D, C, J).
inline const std::vector<MultiIndex>& monomial_table(int D, int C, int J) {
    static std::map<std::tuple<int, int, int>, std::vector<MultiIndex>> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    auto key = std::make_tuple(D, C, J);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, enumerate_monomials(D, C, J)).first;
    return it->second;
}

// Coefficients of the governing equation in the canonical monomial order.
struct CoeffVector {
    DerivBasis basis;
    int C = 2;
    std::vector<double> alpha;

    CoeffVector() : basis(make_basis(2, 2)), alpha(monomial_table(2, 2, 2).size(), 0.0) {}

    CoeffVector(DerivBasis b, int c)
        : basis(std::move(b)), C(c), alpha(monomial_table(basis.D, C, basis.J).size(), 0.0) {}

    const std::vector<MultiIndex>& monomials() const {
        return monomial_table(basis.D, C, basis.J);
    }

    bool operator==(const CoeffVector& o) const {
        return basis == o.basis && C == o.C && alpha == o.alpha;
    }
};

// Residual F(jet) = sum_c alpha_c * prod_i v_i^{c_i} with v the derivative
// variables evaluated from the jet. Powers use repeated multiplication.
inline double residual_value(const CoeffVector& a, const JetValue& jet) {
    if (a.basis.D != 2 || a.basis.J > 2)
        throw config_error("residual_value: jet evaluation needs D=2, J<=2");
    const auto& monos = a.monomials();
    const int m = a.basis.size();
    double total = 0.0;
    for (std::size_t k = 0; k < monos.size(); ++k) {
        if (a.alpha[k] == 0.0) continue;
        double prod = 1.0;
        bool first = true;
        for (int i = 0; i < m; ++i)
            for (int rep = 0; rep < monos[k].exponents[i]; ++rep) {
                prod = first ? jet.component(i) : prod * jet.component(i);
                first = false;
            }
        total += a.alpha[k] * prod;
    }
    return total;
}

// Same contraction as a differentiable graph: comps[i] is the [N x 1] node
// holding derivative variable i at each collocation point.
template <class S>
int residual_node(TapeT<S>& tape, const CoeffVector& a, std::span<const int> comps, int n_rows) {
    if (static_cast<int>(comps.size()) != a.basis.size())
        throw config_error("residual_node: component count mismatch");
    const auto& monos = a.monomials();
    int total = -1;
    for (std::size_t k = 0; k < monos.size(); ++k) {
        if (a.alpha[k] == 0.0) continue;
        int prod = -1;
        for (std::size_t i = 0; i < comps.size(); ++i)
            for (int rep = 0; rep < monos[k].exponents[i]; ++rep)
                prod = prod < 0 ? comps[i] : tape.mul(prod, comps[i]);
        int term = prod < 0 ? tape.constant_fill(n_rows, 1, a.alpha[k])
                            : tape.scale(prod, a.alpha[k]);
        total = total < 0 ? term : tape.add(total, term);
    }
    return total < 0 ? tape.constant_fill(n_rows, 1, 0.0) : total;
}

// ---- textual front end -----------------------------------------------------
//
//   pde     = term , { ("+" | "-") , term } , [ "=" , "0" ] ;
//   term    = [ number ] , { [ "*" ] , factor } ;
//   factor  = deriv , [ "^" , integer ] ;
//   deriv   = "u" , [ "_" , coord , { coord } ] ;
//   coord   = "t" | "x" ;
//
// Whitespace is insignificant. u_xt canonicalizes to u_tx. A term must have
// a number, at least one factor, or both.

namespace detail {

struct PdeParser {
    std::string_view text;
    std::size_t pos = 0;
    const DerivBasis& basis;
    int C;

    void skip_ws() {
        while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t' || text[pos] == '\n'))
            ++pos;
    }

    bool at_end() {
        skip_ws();
        return pos >= text.size();
    }

    char peek() {
        skip_ws();
        return pos < text.size() ? text[pos] : '\0';
    }

    double parse_number() {
        skip_ws();
        const std::size_t start = pos;
        double value = 0.0;
        auto res = std::from_chars(text.data() + pos, text.data() + text.size(), value);
        if (res.ec != std::errc() || res.ptr == text.data() + pos)
            throw parse_error(start, "expected a number");
        pos = static_cast<std::size_t>(res.ptr - text.data());
        return value;
    }

    // Exponent tuple of one derivative token over the basis coordinates.
    std::vector<int> parse_deriv() {
        skip_ws();
        const std::size_t start = pos;
        if (peek() != 'u') throw parse_error(start, "expected a derivative token");
        ++pos;
        std::vector<int> orders(static_cast<std::size_t>(basis.D), 0);
        if (pos < text.size() && text[pos] == '_') {
            ++pos;
            int total = 0;
            while (pos < text.size() && text[pos] >= 'a' && text[pos] <= 'z') {
                const char c = text[pos];
                int coord = -1;
                for (int i = 0; i < basis.D; ++i)
                    if (coord_name(i)[0] == c) coord = i;
                if (coord < 0)
                    throw parse_error(pos, std::string("unknown derivative coordinate '") + c + "'");
                ++orders[coord];
                ++total;
                ++pos;
            }
            if (total == 0) throw parse_error(pos, "expected coordinates after '_'");
            if (total > basis.J)
                throw parse_error(start, "derivative order " + std::to_string(total) +
                                             " exceeds maximum J=" + std::to_string(basis.J));
        }
        return orders;
    }

    int variable_index(const std::vector<int>& orders, std::size_t at) {
        for (int i = 0; i < basis.size(); ++i)
            if (basis.variables[i] == orders) return i;
        throw parse_error(at, "derivative not representable in this basis");
    }

    // Parses one term into (coefficient, monomial exponents).
    std::pair<double, std::vector<int>> parse_term(double sign) {
        skip_ws();
        const std::size_t start = pos;
        double coeff = sign;
        bool have_any = false;
        char c = peek();
        if ((c >= '0' && c <= '9') || c == '.') {
            coeff *= parse_number();
            have_any = true;
        }
        std::vector<int> exponents(static_cast<std::size_t>(basis.size()), 0);
        int degree = 0;
        while (true) {
            skip_ws();
            std::size_t save = pos;
            if (peek() == '*') {
                ++pos;
                skip_ws();
            }
            if (peek() != 'u') {
                pos = save;
                break;
            }
            const std::size_t tok_at = pos;
            std::vector<int> orders = parse_deriv();
            int var = variable_index(orders, tok_at);
            int rep = 1;
            if (peek() == '^') {
                ++pos;
                skip_ws();
                const std::size_t exp_at = pos;
                int e = 0;
                auto res = std::from_chars(text.data() + pos, text.data() + text.size(), e);
                if (res.ec != std::errc() || e < 1)
                    throw parse_error(exp_at, "expected a positive integer exponent");
                pos = static_cast<std::size_t>(res.ptr - text.data());
                rep = e;
            }
            exponents[var] += rep;
            degree += rep;
            have_any = true;
            if (degree > C)
                throw parse_error(start, "term degree " + std::to_string(degree) +
                                             " exceeds maximum C=" + std::to_string(C));
        }
        if (!have_any) throw parse_error(start, "expected a number or derivative token");
        return {coeff, std::move(exponents)};
    }
};

}  // namespace detail

inline CoeffVector parse_pde(std::string_view text, const DerivBasis& basis, int C) {
    detail::PdeParser p{text, 0, basis, C};
    CoeffVector out(basis, C);
    const auto& monos = out.monomials();
    std::map<std::vector<int>, int> index;
    for (std::size_t k = 0; k < monos.size(); ++k) index.emplace(monos[k].exponents, k);

    if (p.at_end()) throw parse_error(0, "empty expression");
    double sign = 1.0;
    if (p.peek() == '-') {
        sign = -1.0;
        ++p.pos;
    } else if (p.peek() == '+') {
        ++p.pos;
    }
    while (true) {
        auto [coeff, exponents] = p.parse_term(sign);
        out.alpha[index.at(exponents)] += coeff;
        char c = p.peek();
        if (c == '+' || c == '-') {
            sign = c == '-' ? -1.0 : 1.0;
            ++p.pos;
            continue;
        }
        break;
    }
    if (p.peek() == '=') {
        ++p.pos;
        const std::size_t at = p.pos;
        if (p.parse_number() != 0.0) throw parse_error(at, "right-hand side must be 0");
    }
    if (!p.at_end()) throw parse_error(p.pos, "unexpected trailing input");
    return out;
}

inline std::string format_coefficient(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// Canonical text form: terms in monomial order, zero coefficients omitted,
// shortest round-trip coefficient literals. parse_pde(print_pde(a)) == a.
inline std::string print_pde(const CoeffVector& a) {
    const auto& monos = a.monomials();
    std::string out;
    for (std::size_t k = 0; k < monos.size(); ++k) {
        const double c = a.alpha[k];
        if (c == 0.0) continue;
        const bool neg = c < 0.0;
        const double mag = std::abs(c);
        std::string factors;
        for (int i = 0; i < a.basis.size(); ++i) {
            const int e = monos[k].exponents[i];
            if (e == 0) continue;
            if (!factors.empty()) factors += "*";
            factors += a.basis.names[i];
            if (e > 1) factors += "^" + std::to_string(e);
        }
        std::string term;
        if (factors.empty())
            term = format_coefficient(mag);
        else if (mag == 1.0)
            term = factors;
        else
            term = format_coefficient(mag) + "*" + factors;
        if (out.empty())
            out = neg ? "-" + term : term;
        else
            out += (neg ? " - " : " + ") + term;
    }
    return out.empty() ? "0" : out;
}

}  // namespace mpde
