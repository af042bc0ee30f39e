#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "mpde/aligned.hpp"
#include "mpde/dual.hpp"
#include "mpde/errors.hpp"
#include "mpde/jet.hpp"
#include "mpde/linalg.hpp"
#include "mpde/tensor.hpp"

namespace mpde {

// Reverse-mode computation tape over matrix-valued nodes.
//
// A node is an [rows x cols] matrix with either 1 plane (plain values) or 6
// planes (second-order jet: value, d/dt, d/dx, d2/dt2, d2/dtdx, d2/dx2).
// Jet planes propagate forward-mode second derivatives with respect to the
// input point while the tape itself provides reverse-mode derivatives with
// respect to parameters, so a loss built from jet components yields exact
// parameter gradients (third-order mixed derivatives overall).
//
// Linear ops act on each plane independently. Elementwise nonlinearities
// couple the planes via the usual first/second-order chain rules:
//
//   c = g(a):  c_t  = g' a_t
//              c_tt = g'' a_t^2 + g' a_tt        (and symmetrically for x, tx)
//
// Their adjoints transpose that coupling and therefore involve g''':
//
//   a~_v  += g' c~_v + g'' a_t c~_t + g'' a_x c~_x
//          + (g''' a_t^2    + g'' a_tt) c~_tt
//          + (g''' a_t a_x  + g'' a_tx) c~_tx
//          + (g''' a_x^2    + g'' a_xx) c~_xx
//   a~_t  += g' c~_t + 2 g'' a_t c~_tt + g'' a_x c~_tx
//   a~_x  += g' c~_x + g'' a_t c~_tx + 2 g'' a_x c~_xx
//   a~_d2 += g' c~_d2
//
// The scalar type S is double in normal use; instantiating with Dual<double>
// turns the whole forward+reverse computation into an exact Hessian-vector
// product (used by second-order MAML).
template <class S>
class TapeT {
  public:
    using Handle = int;

    struct Node {
        int rows = 0;
        int cols = 0;
        int planes = 1;
        AVec<S> storage;           // owned values, plane-major
        const S* view = nullptr;   // set for parameter/constant views
        AVec<S> grad;              // adjoints, allocated on demand
        std::function<void(TapeT&)> back;
    };

    int size() const { return static_cast<int>(nodes_.size()); }

    const Node& node(Handle h) const { return nodes_[static_cast<std::size_t>(h)]; }

    const S* values(Handle h) const {
        const Node& n = nodes_[h];
        return n.view ? n.view : n.storage.data();
    }

    const S* plane(Handle h, int p) const {
        const Node& n = nodes_[h];
        return values(h) + static_cast<std::size_t>(p) * n.rows * n.cols;
    }

    S* grad_plane(Handle h, int p) {
        Node& n = nodes_[h];
        return n.grad.data() + static_cast<std::size_t>(p) * n.rows * n.cols;
    }

    // Adjoint buffer of a node after backward(); empty when the node did not
    // influence the loss.
    std::span<const S> grad(Handle h) const { return nodes_[h].grad; }

    S scalar(Handle h) const {
        const Node& n = nodes_[h];
        if (n.rows != 1 || n.cols != 1) throw config_error("scalar() on non 1x1 node");
        return values(h)[0];
    }

    bool values_finite(Handle h) const {
        const Node& n = nodes_[h];
        const S* v = values(h);
        std::size_t total = static_cast<std::size_t>(n.planes) * n.rows * n.cols;
        for (std::size_t i = 0; i < total; ++i)
            if (!finite_value(v[i])) return false;
        return true;
    }

    // ---- leaves -----------------------------------------------------------

    // Read-only view of a parameter tensor (rank 1 tensors become row
    // vectors). Gradients accumulate in the node's grad buffer.
    Handle param(const TensorT<S>& t) {
        auto [r, c] = rank2(t.shape);
        Node n;
        n.rows = r;
        n.cols = c;
        n.view = t.data.data();
        return push(std::move(n));
    }

    Handle constant(int rows, int cols, std::span<const double> data) {
        if (static_cast<std::size_t>(rows) * cols != data.size())
            throw config_error("constant: data size does not match shape");
        Node n;
        n.rows = rows;
        n.cols = cols;
        n.storage.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) n.storage[i] = S(data[i]);
        return push(std::move(n));
    }

    Handle constant_fill(int rows, int cols, double value) {
        Node n;
        n.rows = rows;
        n.cols = cols;
        n.storage.assign(static_cast<std::size_t>(rows) * cols, S(value));
        return push(std::move(n));
    }

    // [N x 2] jet-seeded point matrix: d(t)/dt = 1, d(x)/dx = 1.
    Handle points_jet(std::span<const Point2> pts) {
        const int n = static_cast<int>(pts.size());
        Node nd;
        nd.rows = n;
        nd.cols = 2;
        nd.planes = 6;
        nd.storage.assign(static_cast<std::size_t>(6) * n * 2, S(0));
        for (int i = 0; i < n; ++i) {
            nd.storage[i * 2 + 0] = S(pts[i].t);
            nd.storage[i * 2 + 1] = S(pts[i].x);
            nd.storage[1 * n * 2 + i * 2 + 0] = S(1);  // dt plane
            nd.storage[2 * n * 2 + i * 2 + 1] = S(1);  // dx plane
        }
        return push(std::move(nd));
    }

    Handle points_plain(std::span<const Point2> pts) {
        const int n = static_cast<int>(pts.size());
        Node nd;
        nd.rows = n;
        nd.cols = 2;
        nd.storage.resize(static_cast<std::size_t>(n) * 2);
        for (int i = 0; i < n; ++i) {
            nd.storage[i * 2 + 0] = S(pts[i].t);
            nd.storage[i * 2 + 1] = S(pts[i].x);
        }
        return push(std::move(nd));
    }

    // ---- ops ---------------------------------------------------------------

    // y = x W^T (+ b on the value plane); W is [out x in], b is [1 x out].
    Handle affine(Handle x, Handle w, Handle b) {
        const Node& xn = nodes_[x];
        const Node& wn = nodes_[w];
        const int in = wn.cols, out = wn.rows;
        if (xn.cols != in) throw config_error("affine: input width != weight fan-in");
        if (b >= 0) {
            const Node& bn = nodes_[b];
            if (bn.rows != 1 || bn.cols != out) throw config_error("affine: bias shape mismatch");
        }
        Node y;
        y.rows = xn.rows;
        y.cols = out;
        y.planes = xn.planes;
        y.storage.assign(static_cast<std::size_t>(y.planes) * y.rows * y.cols, S(0));
        const std::size_t xp = static_cast<std::size_t>(xn.rows) * xn.cols;
        const std::size_t yp = static_cast<std::size_t>(y.rows) * y.cols;
        for (int p = 0; p < y.planes; ++p)
            gemm_nt(y.storage.data() + p * yp, values(x) + p * xp, values(w), xn.rows, in, out);
        if (b >= 0) {
            const S* bv = values(b);
            for (int r = 0; r < y.rows; ++r)
                for (int c = 0; c < out; ++c) y.storage[r * out + c] += bv[c];
        }
        y.back = [x, w, b, in, out](TapeT& t) {
            Handle y_h = t.current_;
            Node& yn = t.nodes_[y_h];
            const int rows = yn.rows;
            const std::size_t xp = static_cast<std::size_t>(rows) * in;
            const std::size_t yp = static_cast<std::size_t>(rows) * out;
            t.ensure_grad(x);
            t.ensure_grad(w);
            for (int p = 0; p < yn.planes; ++p) {
                gemm_nn(t.grad_plane(x, p), yn.grad.data() + p * yp, t.values(w), rows, out, in);
                gemm_tn(t.grad_plane(w, 0), yn.grad.data() + p * yp, t.values(x) + p * xp, rows, out, in);
            }
            if (b >= 0) {
                t.ensure_grad(b);
                S* bg = t.grad_plane(b, 0);
                const S* yg = yn.grad.data();
                for (int r = 0; r < rows; ++r)
                    for (int c = 0; c < out; ++c) bg[c] += yg[r * out + c];
            }
        };
        return push(std::move(y));
    }

    Handle act_sin(Handle x, double omega) {
        using std::cos;
        using std::sin;
        const Node& xn = nodes_[x];
        Node y;
        y.rows = xn.rows;
        y.cols = xn.cols;
        y.planes = xn.planes;
        const std::size_t m = static_cast<std::size_t>(xn.rows) * xn.cols;
        y.storage.resize(static_cast<std::size_t>(y.planes) * m);
        const S* a = values(x);
        const S w = S(omega);
        if (xn.planes == 1) {
            for (std::size_t i = 0; i < m; ++i) y.storage[i] = sin(w * a[i]);
        } else {
            const S *av = a, *at = a + m, *ax = a + 2 * m, *att = a + 3 * m, *atx = a + 4 * m,
                    *axx = a + 5 * m;
            S* o = y.storage.data();
            for (std::size_t i = 0; i < m; ++i) {
                const S s = sin(w * av[i]), c = cos(w * av[i]);
                const S g1 = w * c, g2 = -w * w * s;
                o[i] = s;
                o[m + i] = g1 * at[i];
                o[2 * m + i] = g1 * ax[i];
                o[3 * m + i] = g2 * at[i] * at[i] + g1 * att[i];
                o[4 * m + i] = g2 * at[i] * ax[i] + g1 * atx[i];
                o[5 * m + i] = g2 * ax[i] * ax[i] + g1 * axx[i];
            }
        }
        y.back = [x, m, w](TapeT& t) {
            using std::cos;
            using std::sin;
            Handle y_h = t.current_;
            Node& yn = t.nodes_[y_h];
            t.ensure_grad(x);
            const S* a = t.values(x);
            const S* yg = yn.grad.data();
            S* xg = t.nodes_[x].grad.data();
            if (yn.planes == 1) {
                for (std::size_t i = 0; i < m; ++i) xg[i] += w * cos(w * a[i]) * yg[i];
                return;
            }
            const S *av = a, *at = a + m, *ax = a + 2 * m, *att = a + 3 * m, *atx = a + 4 * m,
                    *axx = a + 5 * m;
            for (std::size_t i = 0; i < m; ++i) {
                const S s = sin(w * av[i]), c = cos(w * av[i]);
                const S g1 = w * c, g2 = -w * w * s, g3 = -w * w * w * c;
                const S cv = yg[i], ct = yg[m + i], cx = yg[2 * m + i], ctt = yg[3 * m + i],
                        ctx = yg[4 * m + i], cxx = yg[5 * m + i];
                xg[i] += g1 * cv + g2 * at[i] * ct + g2 * ax[i] * cx +
                         (g3 * at[i] * at[i] + g2 * att[i]) * ctt +
                         (g3 * at[i] * ax[i] + g2 * atx[i]) * ctx +
                         (g3 * ax[i] * ax[i] + g2 * axx[i]) * cxx;
                xg[m + i] += g1 * ct + S(2) * g2 * at[i] * ctt + g2 * ax[i] * ctx;
                xg[2 * m + i] += g1 * cx + g2 * at[i] * ctx + S(2) * g2 * ax[i] * cxx;
                xg[3 * m + i] += g1 * ctt;
                xg[4 * m + i] += g1 * ctx;
                xg[5 * m + i] += g1 * cxx;
            }
        };
        return push(std::move(y));
    }

    Handle act_relu(Handle x) {
        const Node& xn = nodes_[x];
        Node y;
        y.rows = xn.rows;
        y.cols = xn.cols;
        y.planes = xn.planes;
        const std::size_t m = static_cast<std::size_t>(xn.rows) * xn.cols;
        y.storage.resize(static_cast<std::size_t>(y.planes) * m);
        const S* a = values(x);
        for (std::size_t i = 0; i < m; ++i) {
            const bool on = value_of(a[i]) > 0.0;
            for (int p = 0; p < y.planes; ++p) y.storage[p * m + i] = on ? a[p * m + i] : S(0);
        }
        y.back = [x, m](TapeT& t) {
            Handle y_h = t.current_;
            Node& yn = t.nodes_[y_h];
            t.ensure_grad(x);
            const S* a = t.values(x);
            const S* yg = yn.grad.data();
            S* xg = t.nodes_[x].grad.data();
            for (std::size_t i = 0; i < m; ++i) {
                if (value_of(a[i]) > 0.0)
                    for (int p = 0; p < yn.planes; ++p) xg[p * m + i] += yg[p * m + i];
            }
        };
        return push(std::move(y));
    }

    Handle add(Handle a, Handle b) { return add_sub(a, b, S(1)); }
    Handle sub(Handle a, Handle b) { return add_sub(a, b, S(-1)); }

    // Elementwise product; plain-value planes only (jet-valued quantities are
    // only ever combined through their extracted components).
    Handle mul(Handle a, Handle b) {
        const Node &an = nodes_[a], &bn = nodes_[b];
        if (an.planes != 1 || bn.planes != 1) throw config_error("mul: jet operands unsupported");
        if (an.rows != bn.rows || an.cols != bn.cols) throw config_error("mul: shape mismatch");
        const std::size_t m = static_cast<std::size_t>(an.rows) * an.cols;
        Node y;
        y.rows = an.rows;
        y.cols = an.cols;
        y.storage.resize(m);
        const S *av = values(a), *bv = values(b);
        for (std::size_t i = 0; i < m; ++i) y.storage[i] = av[i] * bv[i];
        y.back = [a, b, m](TapeT& t) {
            Node& yn = t.nodes_[t.current_];
            t.ensure_grad(a);
            t.ensure_grad(b);
            const S *av = t.values(a), *bv = t.values(b);
            const S* yg = yn.grad.data();
            S* ag = t.nodes_[a].grad.data();
            for (std::size_t i = 0; i < m; ++i) ag[i] += yg[i] * bv[i];
            S* bg = t.nodes_[b].grad.data();
            for (std::size_t i = 0; i < m; ++i) bg[i] += yg[i] * av[i];
        };
        return push(std::move(y));
    }

    Handle square(Handle a) { return mul(a, a); }

    Handle scale(Handle a, double k) {
        const Node& an = nodes_[a];
        Node y;
        y.rows = an.rows;
        y.cols = an.cols;
        y.planes = an.planes;
        const std::size_t total = static_cast<std::size_t>(an.planes) * an.rows * an.cols;
        y.storage.resize(total);
        const S* av = values(a);
        for (std::size_t i = 0; i < total; ++i) y.storage[i] = S(k) * av[i];
        y.back = [a, total, k](TapeT& t) {
            Node& yn = t.nodes_[t.current_];
            t.ensure_grad(a);
            const S* yg = yn.grad.data();
            S* ag = t.nodes_[a].grad.data();
            for (std::size_t i = 0; i < total; ++i) ag[i] += S(k) * yg[i];
        };
        return push(std::move(y));
    }

    Handle concat_cols(Handle a, Handle b) {
        const Node &an = nodes_[a], &bn = nodes_[b];
        if (an.rows != bn.rows) throw config_error("concat: row mismatch");
        Node y;
        y.rows = an.rows;
        y.cols = an.cols + bn.cols;
        y.planes = std::max(an.planes, bn.planes);
        y.storage.assign(static_cast<std::size_t>(y.planes) * y.rows * y.cols, S(0));
        const S *av = values(a), *bv = values(b);
        for (int p = 0; p < y.planes; ++p)
            for (int r = 0; r < y.rows; ++r) {
                S* dst = y.storage.data() + (static_cast<std::size_t>(p) * y.rows + r) * y.cols;
                if (p < an.planes) {
                    const S* s = av + (static_cast<std::size_t>(p) * an.rows + r) * an.cols;
                    for (int c = 0; c < an.cols; ++c) dst[c] = s[c];
                }
                if (p < bn.planes) {
                    const S* s = bv + (static_cast<std::size_t>(p) * bn.rows + r) * bn.cols;
                    for (int c = 0; c < bn.cols; ++c) dst[an.cols + c] = s[c];
                }
            }
        y.back = [a, b](TapeT& t) {
            Node& yn = t.nodes_[t.current_];
            Node &an = t.nodes_[a], &bn = t.nodes_[b];
            t.ensure_grad(a);
            t.ensure_grad(b);
            for (int p = 0; p < yn.planes; ++p)
                for (int r = 0; r < yn.rows; ++r) {
                    const S* yg =
                        yn.grad.data() + (static_cast<std::size_t>(p) * yn.rows + r) * yn.cols;
                    if (p < an.planes) {
                        S* ag = t.grad_plane(a, p) + static_cast<std::size_t>(r) * an.cols;
                        for (int c = 0; c < an.cols; ++c) ag[c] += yg[c];
                    }
                    if (p < bn.planes) {
                        S* bg = t.grad_plane(b, p) + static_cast<std::size_t>(r) * bn.cols;
                        for (int c = 0; c < bn.cols; ++c) bg[c] += yg[an.cols + c];
                    }
                }
        };
        return push(std::move(y));
    }

    Handle broadcast_rows(Handle a, int n) {
        const Node& an = nodes_[a];
        if (an.rows != 1) throw config_error("broadcast_rows: source must have one row");
        Node y;
        y.rows = n;
        y.cols = an.cols;
        y.planes = an.planes;
        y.storage.resize(static_cast<std::size_t>(y.planes) * n * y.cols);
        const S* av = values(a);
        for (int p = 0; p < y.planes; ++p)
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < y.cols; ++c)
                    y.storage[(static_cast<std::size_t>(p) * n + r) * y.cols + c] =
                        av[static_cast<std::size_t>(p) * y.cols + c];
        y.back = [a, n](TapeT& t) {
            Node& yn = t.nodes_[t.current_];
            t.ensure_grad(a);
            for (int p = 0; p < yn.planes; ++p) {
                S* ag = t.grad_plane(a, p);
                const S* yg = yn.grad.data() + static_cast<std::size_t>(p) * n * yn.cols;
                for (int r = 0; r < n; ++r)
                    for (int c = 0; c < yn.cols; ++c) ag[c] += yg[r * yn.cols + c];
            }
        };
        return push(std::move(y));
    }

    Handle mean_rows(Handle a) {
        const Node& an = nodes_[a];
        const int n = an.rows, c = an.cols;
        if (n == 0) throw domain_error("mean_rows: empty input");
        Node y;
        y.rows = 1;
        y.cols = c;
        y.planes = an.planes;
        y.storage.assign(static_cast<std::size_t>(y.planes) * c, S(0));
        const S* av = values(a);
        const S inv = S(1.0 / n);
        for (int p = 0; p < y.planes; ++p)
            for (int r = 0; r < n; ++r)
                for (int j = 0; j < c; ++j)
                    y.storage[static_cast<std::size_t>(p) * c + j] +=
                        inv * av[(static_cast<std::size_t>(p) * n + r) * c + j];
        y.back = [a, n, c](TapeT& t) {
            Node& yn = t.nodes_[t.current_];
            t.ensure_grad(a);
            const S inv = S(1.0 / n);
            for (int p = 0; p < yn.planes; ++p) {
                S* ag = t.grad_plane(a, p);
                const S* yg = yn.grad.data() + static_cast<std::size_t>(p) * c;
                for (int r = 0; r < n; ++r)
                    for (int j = 0; j < c; ++j) ag[r * c + j] += inv * yg[j];
            }
        };
        return push(std::move(y));
    }

    // Jet component plane -> plain-value node.
    Handle extract(Handle a, int comp) {
        const Node& an = nodes_[a];
        if (comp < 0 || comp >= an.planes) throw config_error("extract: no such component");
        const std::size_t m = static_cast<std::size_t>(an.rows) * an.cols;
        Node y;
        y.rows = an.rows;
        y.cols = an.cols;
        y.storage.assign(values(a) + comp * m, values(a) + (comp + 1) * m);
        y.back = [a, comp, m](TapeT& t) {
            Node& yn = t.nodes_[t.current_];
            t.ensure_grad(a);
            S* ag = t.grad_plane(a, comp);
            const S* yg = yn.grad.data();
            for (std::size_t i = 0; i < m; ++i) ag[i] += yg[i];
        };
        return push(std::move(y));
    }

    Handle mean_all(Handle a) {
        const Node& an = nodes_[a];
        if (an.planes != 1) throw config_error("mean_all: jet input unsupported");
        const std::size_t m = static_cast<std::size_t>(an.rows) * an.cols;
        if (m == 0) throw domain_error("mean_all: empty input");
        Node y;
        y.rows = 1;
        y.cols = 1;
        S acc{};
        const S* av = values(a);
        for (std::size_t i = 0; i < m; ++i) acc += av[i];
        y.storage.assign(1, acc * S(1.0 / static_cast<double>(m)));
        y.back = [a, m](TapeT& t) {
            Node& yn = t.nodes_[t.current_];
            t.ensure_grad(a);
            const S g = yn.grad[0] * S(1.0 / static_cast<double>(m));
            S* ag = t.nodes_[a].grad.data();
            for (std::size_t i = 0; i < m; ++i) ag[i] += g;
        };
        return push(std::move(y));
    }

    // ---- reverse pass ------------------------------------------------------

    void backward(Handle loss) {
        const Node& ln = nodes_[loss];
        if (ln.rows != 1 || ln.cols != 1 || ln.planes != 1)
            throw config_error("backward: loss must be a 1x1 plain node");
        if (!finite_value(values(loss)[0])) throw numeric_error("backward: loss is not finite");
        ensure_grad(loss);
        nodes_[loss].grad[0] = S(1);
        for (int i = loss; i >= 0; --i) {
            current_ = i;
            Node& n = nodes_[i];
            if (!n.grad.empty() && n.back) n.back(*this);
        }
    }

    JetValue jet_at(Handle a, int row, int col) const {
        const Node& n = nodes_[a];
        const std::size_t m = static_cast<std::size_t>(n.rows) * n.cols;
        const std::size_t i = static_cast<std::size_t>(row) * n.cols + col;
        const S* v = values(a);
        JetValue j;
        j.value = value_of(v[i]);
        if (n.planes == 6) {
            j.d1 = {value_of(v[m + i]), value_of(v[2 * m + i])};
            j.d2 = {value_of(v[3 * m + i]), value_of(v[4 * m + i]), value_of(v[5 * m + i])};
        }
        return j;
    }

  private:
    std::vector<Node> nodes_;
    Handle current_ = -1;

    Handle push(Node&& n) {
        nodes_.push_back(std::move(n));
        return static_cast<Handle>(nodes_.size() - 1);
    }

    void ensure_grad(Handle h) {
        Node& n = nodes_[h];
        if (n.grad.empty())
            n.grad.assign(static_cast<std::size_t>(n.planes) * n.rows * n.cols, S(0));
    }

    static std::pair<int, int> rank2(const std::vector<int>& shape) {
        if (shape.size() == 1) return {1, shape[0]};
        if (shape.size() == 2) return {shape[0], shape[1]};
        throw config_error("tape nodes must be rank 1 or 2");
    }

    Handle add_sub(Handle a, Handle b, S sign) {
        const Node &an = nodes_[a], &bn = nodes_[b];
        if (an.rows != bn.rows || an.cols != bn.cols) throw config_error("add/sub: shape mismatch");
        const std::size_t m = static_cast<std::size_t>(an.rows) * an.cols;
        Node y;
        y.rows = an.rows;
        y.cols = an.cols;
        y.planes = std::max(an.planes, bn.planes);
        y.storage.assign(static_cast<std::size_t>(y.planes) * m, S(0));
        const S *av = values(a), *bv = values(b);
        for (int p = 0; p < y.planes; ++p)
            for (std::size_t i = 0; i < m; ++i) {
                S v{};
                if (p < an.planes) v += av[p * m + i];
                if (p < bn.planes) v += sign * bv[p * m + i];
                y.storage[p * m + i] = v;
            }
        y.back = [a, b, m, sign](TapeT& t) {
            Node& yn = t.nodes_[t.current_];
            Node &an = t.nodes_[a], &bn = t.nodes_[b];
            t.ensure_grad(a);
            t.ensure_grad(b);
            const S* yg = yn.grad.data();
            for (int p = 0; p < yn.planes; ++p)
                for (std::size_t i = 0; i < m; ++i) {
                    if (p < an.planes) t.grad_plane(a, p)[i] += yg[p * m + i];
                    if (p < bn.planes) t.grad_plane(b, p)[i] += sign * yg[p * m + i];
                }
        };
        return push(std::move(y));
    }
};

using Tape = TapeT<double>;

}  // namespace mpde
