#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "homolab/core/errors.hpp"
#include "homolab/core/tensor.hpp"

namespace homolab {

// A named, trainable tensor owned by a model component. Gradients accumulate
// here after Graph::backward.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;

    Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
    void zero_grad() { grad.fill(0.0); }
};

namespace ag {

struct Node;
using Var = std::shared_ptr<Node>;

// One vertex of the reverse-mode tape.
struct Node {
    Tensor v;                              // value
    Tensor g;                              // gradient, lazily sized
    bool req = false;                      // participates in backward
    std::vector<Var> parents;
    std::function<void(Node&)> back;       // reads g, accumulates into parents
    Param* src = nullptr;                  // leaf binding, if any
};

inline Tensor& grad_buf(Node& n) {
    if (n.g.empty()) n.g = Tensor(n.v.shape());
    return n.g;
}

inline Var make_node(Tensor value, std::vector<Var> parents, bool req) {
    auto n = std::make_shared<Node>();
    n->v = std::move(value);
    n->parents = std::move(parents);
    n->req = req;
    return n;
}

inline bool any_req(const std::vector<Var>& vars) {
    for (const auto& v : vars)
        if (v->req) return true;
    return false;
}

// Define-by-run graph. Caches one leaf per Param so a parameter used twice
// accumulates its gradient in a single buffer.
class Graph {
  public:
    explicit Graph(bool grads = true) : grads_(grads) {}

    bool grads_enabled() const { return grads_; }

    Var leaf(Param& p) {
        auto it = cache_.find(&p);
        if (it != cache_.end()) return it->second;
        Var n = make_node(p.value, {}, grads_ && p.trainable);
        n->src = &p;
        cache_.emplace(&p, n);
        order_.push_back(n);
        return n;
    }

    Var constant(Tensor t) { return make_node(std::move(t), {}, false); }

    Var input(Tensor t, bool req = false) { return make_node(std::move(t), {}, grads_ && req); }

    // Reverse-mode sweep from a scalar followed by a flush of leaf gradients
    // into their Params.
    void backward(const Var& root) {
        if (root->v.numel() != 1) throw ShapeMismatch("backward: root must be scalar");
        if (!root->req) return;
        std::vector<Node*> topo = topo_order(root.get());
        grad_buf(*root).fill(1.0);
        for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
            Node* n = *it;
            if (n->back && !n->g.empty()) n->back(*n);
        }
        for (const auto& leafv : order_) {
            if (leafv->req && leafv->src && !leafv->g.empty()) leafv->src->grad.add_(leafv->g);
        }
    }

  private:
    static std::vector<Node*> topo_order(Node* root) {
        std::vector<Node*> out;
        std::vector<std::pair<Node*, bool>> stack{{root, false}};
        std::unordered_set<Node*> seen;
        while (!stack.empty()) {
            auto [n, expanded] = stack.back();
            stack.pop_back();
            if (expanded) {
                out.push_back(n);
                continue;
            }
            if (seen.count(n)) continue;
            seen.insert(n);
            stack.emplace_back(n, true);
            for (const auto& p : n->parents)
                if (p->req && !seen.count(p.get())) stack.emplace_back(p.get(), false);
        }
        return out;
    }

    bool grads_;
    std::unordered_map<Param*, Var> cache_;
    std::vector<Var> order_;
};

// ---------------------------------------------------------------------------
// elementwise and reduction ops

inline Var add(const Var& a, const Var& b) {
    if (!a->v.same_shape(b->v)) throw ShapeMismatch("add: shape mismatch");
    Tensor out = a->v;
    out.add_(b->v);
    Var n = make_node(std::move(out), {a, b}, any_req({a, b}));
    if (n->req)
        n->back = [a, b](Node& self) {
            if (a->req) grad_buf(*a).add_(self.g);
            if (b->req) grad_buf(*b).add_(self.g);
        };
    return n;
}

inline Var sub(const Var& a, const Var& b) {
    if (!a->v.same_shape(b->v)) throw ShapeMismatch("sub: shape mismatch");
    Tensor out = a->v;
    out.axpy_(-1.0, b->v);
    Var n = make_node(std::move(out), {a, b}, any_req({a, b}));
    if (n->req)
        n->back = [a, b](Node& self) {
            if (a->req) grad_buf(*a).add_(self.g);
            if (b->req) grad_buf(*b).axpy_(-1.0, self.g);
        };
    return n;
}

inline Var mul(const Var& a, const Var& b) {
    if (!a->v.same_shape(b->v)) throw ShapeMismatch("mul: shape mismatch");
    Tensor out = a->v;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] *= b->v[i];
    Var n = make_node(std::move(out), {a, b}, any_req({a, b}));
    if (n->req)
        n->back = [a, b](Node& self) {
            if (a->req) {
                Tensor& ga = grad_buf(*a);
                for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += self.g[i] * b->v[i];
            }
            if (b->req) {
                Tensor& gb = grad_buf(*b);
                for (std::int64_t i = 0; i < gb.numel(); ++i) gb[i] += self.g[i] * a->v[i];
            }
        };
    return n;
}

inline Var scale(const Var& a, double s) {
    Tensor out = a->v;
    out.scale_(s);
    Var n = make_node(std::move(out), {a}, a->req);
    if (n->req)
        n->back = [a, s](Node& self) { grad_buf(*a).axpy_(s, self.g); };
    return n;
}

inline Var relu(const Var& a) {
    Tensor out = a->v;
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
    Var n = make_node(std::move(out), {a}, a->req);
    if (n->req)
        n->back = [a](Node& self) {
            Tensor& ga = grad_buf(*a);
            for (std::int64_t i = 0; i < ga.numel(); ++i)
                if (a->v[i] > 0.0) ga[i] += self.g[i];
        };
    return n;
}

inline Var view(const Var& a, std::vector<int> shape) {
    Tensor out = a->v.reshaped(std::move(shape));
    Var n = make_node(std::move(out), {a}, a->req);
    if (n->req)
        n->back = [a](Node& self) {
            Tensor& ga = grad_buf(*a);
            for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += self.g[i];
        };
    return n;
}

inline Var mean_all(const Var& a) {
    const double inv = 1.0 / static_cast<double>(a->v.numel());
    double s = 0.0;
    for (std::int64_t i = 0; i < a->v.numel(); ++i) s += a->v[i];
    Var n = make_node(Tensor::scalar(s * inv), {a}, a->req);
    if (n->req)
        n->back = [a, inv](Node& self) {
            Tensor& ga = grad_buf(*a);
            const double g = self.g[0] * inv;
            for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
        };
    return n;
}

inline Var sum_all(const Var& a) {
    double s = 0.0;
    for (std::int64_t i = 0; i < a->v.numel(); ++i) s += a->v[i];
    Var n = make_node(Tensor::scalar(s), {a}, a->req);
    if (n->req)
        n->back = [a](Node& self) {
            Tensor& ga = grad_buf(*a);
            const double g = self.g[0];
            for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
        };
    return n;
}

// mean |x - t| against a constant target
inline Var l1_to(const Var& x, const Tensor& target) {
    if (!x->v.same_shape(target)) throw ShapeMismatch("l1_to: shape mismatch");
    const double inv = 1.0 / static_cast<double>(x->v.numel());
    double s = 0.0;
    for (std::int64_t i = 0; i < x->v.numel(); ++i) s += std::abs(x->v[i] - target[i]);
    Var n = make_node(Tensor::scalar(s * inv), {x}, x->req);
    if (n->req) {
        Tensor t = target;
        n->back = [x, t, inv](Node& self) {
            Tensor& gx = grad_buf(*x);
            const double g = self.g[0] * inv;
            for (std::int64_t i = 0; i < gx.numel(); ++i) {
                const double d = x->v[i] - t[i];
                gx[i] += d > 0.0 ? g : (d < 0.0 ? -g : 0.0);
            }
        };
    }
    return n;
}

// mean (x - y)^2 between two variables
inline Var mse_between(const Var& x, const Var& y) {
    if (!x->v.same_shape(y->v)) throw ShapeMismatch("mse_between: shape mismatch");
    const double inv = 1.0 / static_cast<double>(x->v.numel());
    double s = 0.0;
    for (std::int64_t i = 0; i < x->v.numel(); ++i) {
        const double d = x->v[i] - y->v[i];
        s += d * d;
    }
    Var n = make_node(Tensor::scalar(s * inv), {x, y}, any_req({x, y}));
    if (n->req)
        n->back = [x, y, inv](Node& self) {
            const double g = 2.0 * self.g[0] * inv;
            if (x->req) {
                Tensor& gx = grad_buf(*x);
                for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += g * (x->v[i] - y->v[i]);
            }
            if (y->req) {
                Tensor& gy = grad_buf(*y);
                for (std::int64_t i = 0; i < gy.numel(); ++i) gy[i] -= g * (x->v[i] - y->v[i]);
            }
        };
    return n;
}

// Huber-style loss against a constant target, summed (caller normalizes).
inline Var smooth_l1_sum(const Var& x, const Tensor& target, double beta = 1.0) {
    if (!x->v.same_shape(target)) throw ShapeMismatch("smooth_l1_sum: shape mismatch");
    double s = 0.0;
    for (std::int64_t i = 0; i < x->v.numel(); ++i) {
        const double d = std::abs(x->v[i] - target[i]);
        s += d < beta ? 0.5 * d * d / beta : d - 0.5 * beta;
    }
    Var n = make_node(Tensor::scalar(s), {x}, x->req);
    if (n->req) {
        Tensor t = target;
        n->back = [x, t, beta](Node& self) {
            Tensor& gx = grad_buf(*x);
            const double g = self.g[0];
            for (std::int64_t i = 0; i < gx.numel(); ++i) {
                const double d = x->v[i] - t[i];
                gx[i] += g * (std::abs(d) < beta ? d / beta : (d > 0.0 ? 1.0 : -1.0));
            }
        };
    }
    return n;
}

// ---------------------------------------------------------------------------
// matrix ops (Eigen-backed)

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConst = Eigen::Map<const RowMat>;

// x [N,K] * w [K,M] + b [M]
inline Var linear(const Var& x, const Var& w, const Var& b) {
    const int n = x->v.dim(0), k = x->v.dim(1);
    if (w->v.dim(0) != k) throw ShapeMismatch("linear: inner dims");
    const int m = w->v.dim(1);
    if (b->v.numel() != m) throw ShapeMismatch("linear: bias size");
    Tensor out({n, m});
    MapMat(out.data(), n, m) = MapConst(x->v.data(), n, k) * MapConst(w->v.data(), k, m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) out.at(i, j) += b->v[j];
    Var nd = make_node(std::move(out), {x, w, b}, any_req({x, w, b}));
    if (nd->req)
        nd->back = [x, w, b, n, k, m](Node& self) {
            MapConst go(self.g.data(), n, m);
            if (x->req) MapMat(grad_buf(*x).data(), n, k) += go * MapConst(w->v.data(), k, m).transpose();
            if (w->req) MapMat(grad_buf(*w).data(), k, m) += MapConst(x->v.data(), n, k).transpose() * go;
            if (b->req) {
                Tensor& gb = grad_buf(*b);
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < m; ++j) gb[j] += self.g.at(i, j);
            }
        };
    return nd;
}

// Batched matmul with optional transposes: out[b] = op(A[b]) * op(B[b]).
inline Var bmm(const Var& a, const Var& b, bool ta = false, bool tb = false) {
    if (a->v.ndim() != 3 || b->v.ndim() != 3 || a->v.dim(0) != b->v.dim(0))
        throw ShapeMismatch("bmm: expects matching 3-d batches");
    const int bs = a->v.dim(0);
    const int m = ta ? a->v.dim(2) : a->v.dim(1);
    const int k = ta ? a->v.dim(1) : a->v.dim(2);
    const int kb = tb ? b->v.dim(2) : b->v.dim(1);
    const int n = tb ? b->v.dim(1) : b->v.dim(2);
    if (k != kb) throw ShapeMismatch("bmm: inner dims");
    Tensor out({bs, m, n});
    const int ar = a->v.dim(1), ac = a->v.dim(2), br = b->v.dim(1), bc = b->v.dim(2);
    for (int i = 0; i < bs; ++i) {
        MapConst ma(a->v.data() + static_cast<std::size_t>(i) * ar * ac, ar, ac);
        MapConst mb(b->v.data() + static_cast<std::size_t>(i) * br * bc, br, bc);
        MapMat mo(out.data() + static_cast<std::size_t>(i) * m * n, m, n);
        if (!ta && !tb) mo = ma * mb;
        else if (ta && !tb) mo = ma.transpose() * mb;
        else if (!ta && tb) mo = ma * mb.transpose();
        else mo = ma.transpose() * mb.transpose();
    }
    Var nd = make_node(std::move(out), {a, b}, any_req({a, b}));
    if (nd->req)
        nd->back = [a, b, ta, tb, bs, m, n, ar, ac, br, bc](Node& self) {
            for (int i = 0; i < bs; ++i) {
                MapConst go(self.g.data() + static_cast<std::size_t>(i) * m * n, m, n);
                MapConst ma(a->v.data() + static_cast<std::size_t>(i) * ar * ac, ar, ac);
                MapConst mb(b->v.data() + static_cast<std::size_t>(i) * br * bc, br, bc);
                if (a->req) {
                    MapMat ga(grad_buf(*a).data() + static_cast<std::size_t>(i) * ar * ac, ar, ac);
                    // dAeff = go * Beff^T
                    if (!ta) {
                        if (!tb) ga += go * mb.transpose();
                        else ga += go * mb;
                    } else {
                        if (!tb) ga += (go * mb.transpose()).transpose().eval();
                        else ga += (go * mb).transpose().eval();
                    }
                }
                if (b->req) {
                    MapMat gb(grad_buf(*b).data() + static_cast<std::size_t>(i) * br * bc, br, bc);
                    // dBeff = Aeff^T * go
                    if (!tb) {
                        if (!ta) gb += ma.transpose() * go;
                        else gb += ma * go;
                    } else {
                        if (!ta) gb += (ma.transpose() * go).transpose().eval();
                        else gb += (ma * go).transpose().eval();
                    }
                }
            }
        };
    return nd;
}

// Softmax over the last dim of [B,M,N]; positions with mask[b,n]==0 get
// exactly zero weight. Mask is per batch row.
inline Var masked_softmax(const Var& x, const Tensor& mask) {
    if (x->v.ndim() != 3) throw ShapeMismatch("masked_softmax: expects [B,M,N]");
    const int bs = x->v.dim(0), m = x->v.dim(1), n = x->v.dim(2);
    if (mask.ndim() != 2 || mask.dim(0) != bs || mask.dim(1) != n)
        throw ShapeMismatch("masked_softmax: mask must be [B,N]");
    Tensor out({bs, m, n});
    for (int b = 0; b < bs; ++b)
        for (int i = 0; i < m; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < n; ++j)
                if (mask.at(b, j) > 0.5) mx = std::max(mx, x->v.at(b, i, j));
            double denom = 0.0;
            for (int j = 0; j < n; ++j) {
                if (mask.at(b, j) > 0.5) {
                    const double e = std::exp(x->v.at(b, i, j) - mx);
                    out.at(b, i, j) = e;
                    denom += e;
                } else {
                    out.at(b, i, j) = 0.0;
                }
            }
            if (denom > 0.0)
                for (int j = 0; j < n; ++j) out.at(b, i, j) /= denom;
        }
    Var nd = make_node(std::move(out), {x}, x->req);
    if (nd->req)
        nd->back = [x, bs, m, n](Node& self) {
            Tensor& gx = grad_buf(*x);
            for (int b = 0; b < bs; ++b)
                for (int i = 0; i < m; ++i) {
                    double dot = 0.0;
                    for (int j = 0; j < n; ++j) dot += self.g.at(b, i, j) * self.v.at(b, i, j);
                    for (int j = 0; j < n; ++j)
                        gx.at(b, i, j) += self.v.at(b, i, j) * (self.g.at(b, i, j) - dot);
                }
        };
    return nd;
}

// Row-wise log-softmax on [R,C].
inline Var log_softmax(const Var& x) {
    if (x->v.ndim() != 2) throw ShapeMismatch("log_softmax: expects [R,C]");
    const int r = x->v.dim(0), c = x->v.dim(1);
    Tensor out({r, c});
    for (int i = 0; i < r; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < c; ++j) mx = std::max(mx, x->v.at(i, j));
        double denom = 0.0;
        for (int j = 0; j < c; ++j) denom += std::exp(x->v.at(i, j) - mx);
        const double lse = mx + std::log(denom);
        for (int j = 0; j < c; ++j) out.at(i, j) = x->v.at(i, j) - lse;
    }
    Var nd = make_node(std::move(out), {x}, x->req);
    if (nd->req)
        nd->back = [x, r, c](Node& self) {
            Tensor& gx = grad_buf(*x);
            for (int i = 0; i < r; ++i) {
                double gsum = 0.0;
                for (int j = 0; j < c; ++j) gsum += self.g.at(i, j);
                for (int j = 0; j < c; ++j)
                    gx.at(i, j) += self.g.at(i, j) - std::exp(self.v.at(i, j)) * gsum;
            }
        };
    return nd;
}

// Select rows of [R,C] by index.
inline Var gather_rows(const Var& x, std::vector<int> rows) {
    if (x->v.ndim() != 2) throw ShapeMismatch("gather_rows: expects [R,C]");
    const int c = x->v.dim(1);
    Tensor out({static_cast<int>(rows.size()), c});
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (int j = 0; j < c; ++j) out.at(static_cast<int>(i), j) = x->v.at(rows[i], j);
    Var nd = make_node(std::move(out), {x}, x->req);
    if (nd->req)
        nd->back = [x, rows = std::move(rows), c](Node& self) {
            Tensor& gx = grad_buf(*x);
            for (std::size_t i = 0; i < rows.size(); ++i)
                for (int j = 0; j < c; ++j) gx.at(rows[i], j) += self.g.at(static_cast<int>(i), j);
        };
    return nd;
}

// Channel concatenation of [N,C1,H,W] and [N,C2,H,W].
inline Var concat_channels(const Var& a, const Var& b) {
    if (a->v.ndim() != 4 || b->v.ndim() != 4) throw ShapeMismatch("concat_channels: expects 4-d");
    const int n = a->v.dim(0), c1 = a->v.dim(1), h = a->v.dim(2), w = a->v.dim(3);
    if (b->v.dim(0) != n || b->v.dim(2) != h || b->v.dim(3) != w)
        throw ShapeMismatch("concat_channels: spatial mismatch");
    const int c2 = b->v.dim(1);
    Tensor out({n, c1 + c2, h, w});
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int i = 0; i < n; ++i) {
        std::copy_n(a->v.data() + static_cast<std::size_t>(i) * c1 * plane, c1 * plane,
                    out.data() + static_cast<std::size_t>(i) * (c1 + c2) * plane);
        std::copy_n(b->v.data() + static_cast<std::size_t>(i) * c2 * plane, c2 * plane,
                    out.data() + (static_cast<std::size_t>(i) * (c1 + c2) + c1) * plane);
    }
    Var nd = make_node(std::move(out), {a, b}, any_req({a, b}));
    if (nd->req)
        nd->back = [a, b, n, c1, c2, plane](Node& self) {
            for (int i = 0; i < n; ++i) {
                if (a->req) {
                    double* ga = grad_buf(*a).data() + static_cast<std::size_t>(i) * c1 * plane;
                    const double* gs = self.g.data() + static_cast<std::size_t>(i) * (c1 + c2) * plane;
                    for (std::size_t j = 0; j < c1 * plane; ++j) ga[j] += gs[j];
                }
                if (b->req) {
                    double* gb = grad_buf(*b).data() + static_cast<std::size_t>(i) * c2 * plane;
                    const double* gs =
                        self.g.data() + (static_cast<std::size_t>(i) * (c1 + c2) + c1) * plane;
                    for (std::size_t j = 0; j < c2 * plane; ++j) gb[j] += gs[j];
                }
            }
        };
    return nd;
}

}  // namespace ag
}  // namespace homolab
