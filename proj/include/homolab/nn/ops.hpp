#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "homolab/core/autograd.hpp"

namespace homolab::ag {

namespace detail {

// im2col for one sample: x [C,H,W] -> col [C*k*k, Ho*Wo]
inline void im2col(const double* x, int c, int h, int w, int k, int stride, int pad, int ho, int wo,
                   double* col) {
    for (int ci = 0; ci < c; ++ci)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                double* dst = col + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) *
                                        (static_cast<std::size_t>(ho) * wo);
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) {
                        std::fill_n(dst + static_cast<std::size_t>(oy) * wo, wo, 0.0);
                        continue;
                    }
                    const double* src = x + (static_cast<std::size_t>(ci) * h + iy) * w;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        dst[static_cast<std::size_t>(oy) * wo + ox] =
                            (ix >= 0 && ix < w) ? src[ix] : 0.0;
                    }
                }
            }
}

inline void col2im_add(const double* col, int c, int h, int w, int k, int stride, int pad, int ho,
                       int wo, double* x) {
    for (int ci = 0; ci < c; ++ci)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const double* src = col + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) *
                                              (static_cast<std::size_t>(ho) * wo);
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    double* dst = x + (static_cast<std::size_t>(ci) * h + iy) * w;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) dst[ix] += src[static_cast<std::size_t>(oy) * wo + ox];
                    }
                }
            }
}

}  // namespace detail

// 2-d convolution. x [N,Cin,H,W], w [Cout,Cin*k*k], b [Cout].
inline Var conv2d(const Var& x, const Var& w, const Var& b, int k, int stride, int pad) {
    if (x->v.ndim() != 4) throw ShapeMismatch("conv2d: input must be [N,C,H,W]");
    const int n = x->v.dim(0), cin = x->v.dim(1), h = x->v.dim(2), wd = x->v.dim(3);
    const int cout = w->v.dim(0);
    if (w->v.dim(1) != cin * k * k) throw ShapeMismatch("conv2d: weight does not match Cin*k*k");
    if (b->v.numel() != cout) throw ShapeMismatch("conv2d: bias size");
    const int ho = (h + 2 * pad - k) / stride + 1;
    const int wo = (wd + 2 * pad - k) / stride + 1;
    if (ho <= 0 || wo <= 0) throw ShapeMismatch("conv2d: empty output");

    Tensor out({n, cout, ho, wo});
    const int ck = cin * k * k;
    const std::size_t osz = static_cast<std::size_t>(ho) * wo;
    std::vector<double> col(static_cast<std::size_t>(ck) * osz);
    for (int i = 0; i < n; ++i) {
        detail::im2col(x->v.data() + static_cast<std::size_t>(i) * cin * h * wd, cin, h, wd, k,
                       stride, pad, ho, wo, col.data());
        MapMat mo(out.data() + static_cast<std::size_t>(i) * cout * osz, cout, static_cast<int>(osz));
        mo = MapConst(w->v.data(), cout, ck) * MapConst(col.data(), ck, static_cast<int>(osz));
        for (int co = 0; co < cout; ++co) {
            double* dst = out.data() + (static_cast<std::size_t>(i) * cout + co) * osz;
            const double bias = b->v[co];
            for (std::size_t j = 0; j < osz; ++j) dst[j] += bias;
        }
    }
    Var nd = make_node(std::move(out), {x, w, b}, any_req({x, w, b}));
    if (nd->req)
        nd->back = [x, w, b, n, cin, h, wd, cout, k, stride, pad, ho, wo, ck, osz](Node& self) {
            std::vector<double> col(static_cast<std::size_t>(ck) * osz);
            std::vector<double> dcol(static_cast<std::size_t>(ck) * osz);
            for (int i = 0; i < n; ++i) {
                MapConst go(self.g.data() + static_cast<std::size_t>(i) * cout * osz, cout,
                            static_cast<int>(osz));
                if (w->req) {
                    detail::im2col(x->v.data() + static_cast<std::size_t>(i) * cin * h * wd, cin, h,
                                   wd, k, stride, pad, ho, wo, col.data());
                    MapMat gw(grad_buf(*w).data(), cout, ck);
                    gw += go * MapConst(col.data(), ck, static_cast<int>(osz)).transpose();
                }
                if (b->req) {
                    Tensor& gb = grad_buf(*b);
                    for (int co = 0; co < cout; ++co) {
                        const double* src = self.g.data() + (static_cast<std::size_t>(i) * cout + co) * osz;
                        double s = 0.0;
                        for (std::size_t j = 0; j < osz; ++j) s += src[j];
                        gb[co] += s;
                    }
                }
                if (x->req) {
                    MapMat(dcol.data(), ck, static_cast<int>(osz)) =
                        MapConst(w->v.data(), cout, ck).transpose() * go;
                    detail::col2im_add(dcol.data(), cin, h, wd, k, stride, pad, ho, wo,
                                       grad_buf(*x).data() + static_cast<std::size_t>(i) * cin * h * wd);
                }
            }
        };
    return nd;
}

// 2x2 average pooling with stride 2; odd edges average over the valid taps so
// output dims are ceil(H/2) x ceil(W/2).
inline Var avgpool2(const Var& x) {
    if (x->v.ndim() != 4) throw ShapeMismatch("avgpool2: input must be [N,C,H,W]");
    const int n = x->v.dim(0), c = x->v.dim(1), h = x->v.dim(2), w = x->v.dim(3);
    const int ho = (h + 1) / 2, wo = (w + 1) / 2;
    Tensor out({n, c, ho, wo});
    for (int i = 0; i < n; ++i)
        for (int ci = 0; ci < c; ++ci)
            for (int oy = 0; oy < ho; ++oy)
                for (int ox = 0; ox < wo; ++ox) {
                    double s = 0.0;
                    int cnt = 0;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const int iy = 2 * oy + dy, ix = 2 * ox + dx;
                            if (iy < h && ix < w) {
                                s += x->v.at(i, ci, iy, ix);
                                ++cnt;
                            }
                        }
                    out.at(i, ci, oy, ox) = s / cnt;
                }
    Var nd = make_node(std::move(out), {x}, x->req);
    if (nd->req)
        nd->back = [x, n, c, h, w, ho, wo](Node& self) {
            Tensor& gx = grad_buf(*x);
            for (int i = 0; i < n; ++i)
                for (int ci = 0; ci < c; ++ci)
                    for (int oy = 0; oy < ho; ++oy)
                        for (int ox = 0; ox < wo; ++ox) {
                            int cnt = 0;
                            for (int dy = 0; dy < 2; ++dy)
                                for (int dx = 0; dx < 2; ++dx)
                                    if (2 * oy + dy < h && 2 * ox + dx < w) ++cnt;
                            const double g = self.g.at(i, ci, oy, ox) / cnt;
                            for (int dy = 0; dy < 2; ++dy)
                                for (int dx = 0; dx < 2; ++dx) {
                                    const int iy = 2 * oy + dy, ix = 2 * ox + dx;
                                    if (iy < h && ix < w) gx.at(i, ci, iy, ix) += g;
                                }
                        }
        };
    return nd;
}

// Index map describing a gather from a [H,W] plane into [nW, P] window slots.
// Entries are linear y*W+x indices, -1 for padded slots.
struct WindowMap {
    int windows = 0;
    int slots = 0;
    int src_h = 0, src_w = 0;
    std::vector<int> idx;  // windows * slots
};

// Non-overlapping SxS windows over an [H,W] plane padded up to multiples of S.
inline WindowMap window_map_full(int h, int w, int s) {
    const int nwy = (h + s - 1) / s, nwx = (w + s - 1) / s;
    WindowMap m;
    m.windows = nwy * nwx;
    m.slots = s * s;
    m.src_h = h;
    m.src_w = w;
    m.idx.assign(static_cast<std::size_t>(m.windows) * m.slots, -1);
    for (int wy = 0; wy < nwy; ++wy)
        for (int wx = 0; wx < nwx; ++wx)
            for (int sy = 0; sy < s; ++sy)
                for (int sx = 0; sx < s; ++sx) {
                    const int y = wy * s + sy, x = wx * s + sx;
                    if (y < h && x < w)
                        m.idx[(static_cast<std::size_t>(wy) * nwx + wx) * m.slots + sy * s + sx] =
                            y * w + x;
                }
    return m;
}

// For each full-resolution SxS window, the covering region of the 2x
// downsampled plane, padded with -1 up to S*S slots.
inline WindowMap window_map_down(int h, int w, int s, int hd, int wd) {
    const int nwy = (h + s - 1) / s, nwx = (w + s - 1) / s;
    WindowMap m;
    m.windows = nwy * nwx;
    m.slots = s * s;
    m.src_h = hd;
    m.src_w = wd;
    m.idx.assign(static_cast<std::size_t>(m.windows) * m.slots, -1);
    for (int wy = 0; wy < nwy; ++wy)
        for (int wx = 0; wx < nwx; ++wx) {
            const int y0 = (wy * s) / 2, y1 = std::min(hd, ((wy + 1) * s + 1) / 2);
            const int x0 = (wx * s) / 2, x1 = std::min(wd, ((wx + 1) * s + 1) / 2);
            int p = 0;
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x)
                    m.idx[(static_cast<std::size_t>(wy) * nwx + wx) * m.slots + p++] = y * wd + x;
        }
    return m;
}

// Validity mask [N*nW, P] for attention over packed windows.
inline Tensor window_mask(const WindowMap& m, int n) {
    Tensor mask({n * m.windows, m.slots});
    for (int i = 0; i < n; ++i)
        for (int w = 0; w < m.windows; ++w)
            for (int p = 0; p < m.slots; ++p)
                mask.at(i * m.windows + w, p) =
                    m.idx[static_cast<std::size_t>(w) * m.slots + p] >= 0 ? 1.0 : 0.0;
    return mask;
}

// Gather [N,C,H,W] into window slots [N*nW, C, P]; padded slots are zero.
inline Var window_pack(const Var& x, const WindowMap& m) {
    if (x->v.ndim() != 4) throw ShapeMismatch("window_pack: input must be [N,C,H,W]");
    const int n = x->v.dim(0), c = x->v.dim(1), h = x->v.dim(2), w = x->v.dim(3);
    if (h != m.src_h || w != m.src_w) throw ShapeMismatch("window_pack: map does not match input");
    Tensor out({n * m.windows, c, m.slots});
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int i = 0; i < n; ++i)
        for (int wi = 0; wi < m.windows; ++wi)
            for (int ci = 0; ci < c; ++ci) {
                const double* src = x->v.data() + (static_cast<std::size_t>(i) * c + ci) * plane;
                double* dst = out.data() +
                              ((static_cast<std::size_t>(i) * m.windows + wi) * c + ci) * m.slots;
                const int* ix = m.idx.data() + static_cast<std::size_t>(wi) * m.slots;
                for (int p = 0; p < m.slots; ++p) dst[p] = ix[p] >= 0 ? src[ix[p]] : 0.0;
            }
    Var nd = make_node(std::move(out), {x}, x->req);
    if (nd->req) {
        const WindowMap* mp = &m;  // maps outlive graphs (owned by the block)
        nd->back = [x, mp, n, c, plane](Node& self) {
            Tensor& gx = grad_buf(*x);
            for (int i = 0; i < n; ++i)
                for (int wi = 0; wi < mp->windows; ++wi)
                    for (int ci = 0; ci < c; ++ci) {
                        double* dst = gx.data() + (static_cast<std::size_t>(i) * c + ci) * plane;
                        const double* src =
                            self.g.data() +
                            ((static_cast<std::size_t>(i) * mp->windows + wi) * c + ci) * mp->slots;
                        const int* ix = mp->idx.data() + static_cast<std::size_t>(wi) * mp->slots;
                        for (int p = 0; p < mp->slots; ++p)
                            if (ix[p] >= 0) dst[ix[p]] += src[p];
                    }
        };
    }
    return nd;
}

// Inverse of window_pack for a full (non-overlapping) map: scatter packed
// windows back to the [N,C,H,W] plane, dropping padded slots.
inline Var window_unpack(const Var& y, const WindowMap& m, int n, int c) {
    if (y->v.ndim() != 3) throw ShapeMismatch("window_unpack: input must be [B,C,P]");
    Tensor out({n, c, m.src_h, m.src_w});
    const std::size_t plane = static_cast<std::size_t>(m.src_h) * m.src_w;
    for (int i = 0; i < n; ++i)
        for (int wi = 0; wi < m.windows; ++wi)
            for (int ci = 0; ci < c; ++ci) {
                const double* src =
                    y->v.data() + ((static_cast<std::size_t>(i) * m.windows + wi) * c + ci) * m.slots;
                double* dst = out.data() + (static_cast<std::size_t>(i) * c + ci) * plane;
                const int* ix = m.idx.data() + static_cast<std::size_t>(wi) * m.slots;
                for (int p = 0; p < m.slots; ++p)
                    if (ix[p] >= 0) dst[ix[p]] = src[p];
            }
    Var nd = make_node(std::move(out), {y}, y->req);
    if (nd->req) {
        const WindowMap* mp = &m;
        nd->back = [y, mp, n, c, plane](Node& self) {
            Tensor& gy = grad_buf(*y);
            for (int i = 0; i < n; ++i)
                for (int wi = 0; wi < mp->windows; ++wi)
                    for (int ci = 0; ci < c; ++ci) {
                        double* dst =
                            gy.data() +
                            ((static_cast<std::size_t>(i) * mp->windows + wi) * c + ci) * mp->slots;
                        const double* src = self.g.data() + (static_cast<std::size_t>(i) * c + ci) * plane;
                        const int* ix = mp->idx.data() + static_cast<std::size_t>(wi) * mp->slots;
                        for (int p = 0; p < mp->slots; ++p)
                            if (ix[p] >= 0) dst[p] += src[ix[p]];
                    }
        };
    }
    return nd;
}

// Local correlation volume between two [N,C,H,W] maps over a (2r+1)^2 search
// window, channel-normalized. Out-of-range taps contribute zero.
inline Var corr_volume(const Var& a, const Var& b, int r) {
    if (a->v.ndim() != 4 || !a->v.same_shape(b->v)) throw ShapeMismatch("corr_volume: shape mismatch");
    const int n = a->v.dim(0), c = a->v.dim(1), h = a->v.dim(2), w = a->v.dim(3);
    const int side = 2 * r + 1, d = side * side;
    const double inv = 1.0 / c;
    Tensor out({n, d, h, w});
    for (int i = 0; i < n; ++i)
        for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx) {
                const int di = (dy + r) * side + (dx + r);
                for (int y = 0; y < h; ++y) {
                    const int yy = y + dy;
                    if (yy < 0 || yy >= h) continue;
                    for (int x = 0; x < w; ++x) {
                        const int xx = x + dx;
                        if (xx < 0 || xx >= w) continue;
                        double s = 0.0;
                        for (int ci = 0; ci < c; ++ci)
                            s += a->v.at(i, ci, y, x) * b->v.at(i, ci, yy, xx);
                        out.at(i, di, y, x) = s * inv;
                    }
                }
            }
    Var nd = make_node(std::move(out), {a, b}, any_req({a, b}));
    if (nd->req)
        nd->back = [a, b, n, c, h, w, r, side, inv](Node& self) {
            for (int i = 0; i < n; ++i)
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx) {
                        const int di = (dy + r) * side + (dx + r);
                        for (int y = 0; y < h; ++y) {
                            const int yy = y + dy;
                            if (yy < 0 || yy >= h) continue;
                            for (int x = 0; x < w; ++x) {
                                const int xx = x + dx;
                                if (xx < 0 || xx >= w) continue;
                                const double g = self.g.at(i, di, y, x) * inv;
                                if (g == 0.0) continue;
                                if (a->req) {
                                    Tensor& ga = grad_buf(*a);
                                    for (int ci = 0; ci < c; ++ci)
                                        ga.at(i, ci, y, x) += g * b->v.at(i, ci, yy, xx);
                                }
                                if (b->req) {
                                    Tensor& gb = grad_buf(*b);
                                    for (int ci = 0; ci < c; ++ci)
                                        gb.at(i, ci, yy, xx) += g * a->v.at(i, ci, y, x);
                                }
                            }
                        }
                    }
        };
    return nd;
}

// Bilinear sampling of x [N,C,H,W] at grid [N,2,Ho,Wo] source coordinates
// (x-coord plane then y-coord plane). The grid is constant: gradients flow to
// the feature values only. Samples outside the input read zero.
inline Var bilinear_sample(const Var& x, const Tensor& grid) {
    if (x->v.ndim() != 4 || grid.ndim() != 4 || grid.dim(1) != 2 || grid.dim(0) != x->v.dim(0))
        throw ShapeMismatch("bilinear_sample: bad shapes");
    const int n = x->v.dim(0), c = x->v.dim(1), h = x->v.dim(2), w = x->v.dim(3);
    const int ho = grid.dim(2), wo = grid.dim(3);
    Tensor out({n, c, ho, wo});
    for (int i = 0; i < n; ++i)
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                const double sx = grid.at(i, 0, oy, ox);
                const double sy = grid.at(i, 1, oy, ox);
                const int x0 = static_cast<int>(std::floor(sx));
                const int y0 = static_cast<int>(std::floor(sy));
                const double fx = sx - x0, fy = sy - y0;
                for (int ci = 0; ci < c; ++ci) {
                    auto tap = [&](int yy, int xx) -> double {
                        if (yy < 0 || xx < 0 || yy >= h || xx >= w) return 0.0;
                        return x->v.at(i, ci, yy, xx);
                    };
                    out.at(i, ci, oy, ox) =
                        (1.0 - fy) * ((1.0 - fx) * tap(y0, x0) + fx * tap(y0, x0 + 1)) +
                        fy * ((1.0 - fx) * tap(y0 + 1, x0) + fx * tap(y0 + 1, x0 + 1));
                }
            }
    Var nd = make_node(std::move(out), {x}, x->req);
    if (nd->req) {
        Tensor g = grid;
        nd->back = [x, g, n, c, h, w, ho, wo](Node& self) {
            Tensor& gx = grad_buf(*x);
            for (int i = 0; i < n; ++i)
                for (int oy = 0; oy < ho; ++oy)
                    for (int ox = 0; ox < wo; ++ox) {
                        const double sx = g.at(i, 0, oy, ox);
                        const double sy = g.at(i, 1, oy, ox);
                        const int x0 = static_cast<int>(std::floor(sx));
                        const int y0 = static_cast<int>(std::floor(sy));
                        const double fx = sx - x0, fy = sy - y0;
                        const double wgt[4] = {(1.0 - fy) * (1.0 - fx), (1.0 - fy) * fx,
                                               fy * (1.0 - fx), fy * fx};
                        const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
                        const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
                        for (int ci = 0; ci < c; ++ci) {
                            const double go = self.g.at(i, ci, oy, ox);
                            if (go == 0.0) continue;
                            for (int t = 0; t < 4; ++t)
                                if (ys[t] >= 0 && xs[t] >= 0 && ys[t] < h && xs[t] < w)
                                    gx.at(i, ci, ys[t], xs[t]) += go * wgt[t];
                        }
                    }
        };
    }
    return nd;
}

// Rearrange [N, G*R, H, W] into rows [N*H*W*G, R]; used to turn per-location
// head outputs into per-anchor rows.
inline Var channels_to_rows(const Var& x, int r) {
    if (x->v.ndim() != 4) throw ShapeMismatch("channels_to_rows: input must be [N,C,H,W]");
    const int n = x->v.dim(0), c = x->v.dim(1), h = x->v.dim(2), w = x->v.dim(3);
    if (c % r != 0) throw ShapeMismatch("channels_to_rows: C not divisible");
    const int g = c / r;
    Tensor out({n * h * w * g, r});
    for (int i = 0; i < n; ++i)
        for (int y = 0; y < h; ++y)
            for (int x2 = 0; x2 < w; ++x2)
                for (int gi = 0; gi < g; ++gi)
                    for (int ri = 0; ri < r; ++ri)
                        out.at(((i * h + y) * w + x2) * g + gi, ri) = x->v.at(i, gi * r + ri, y, x2);
    Var nd = make_node(std::move(out), {x}, x->req);
    if (nd->req)
        nd->back = [x, n, h, w, g, r](Node& self) {
            Tensor& gx = grad_buf(*x);
            for (int i = 0; i < n; ++i)
                for (int y = 0; y < h; ++y)
                    for (int x2 = 0; x2 < w; ++x2)
                        for (int gi = 0; gi < g; ++gi)
                            for (int ri = 0; ri < r; ++ri)
                                gx.at(i, gi * r + ri, y, x2) +=
                                    self.g.at(((i * h + y) * w + x2) * g + gi, ri);
        };
    return nd;
}

// Vertical concatenation of two [R,C] matrices.
inline Var vconcat(const Var& a, const Var& b) {
    if (a->v.ndim() != 2 || b->v.ndim() != 2 || a->v.dim(1) != b->v.dim(1))
        throw ShapeMismatch("vconcat: column mismatch");
    const int ra = a->v.dim(0), rb = b->v.dim(0), c = a->v.dim(1);
    Tensor out({ra + rb, c});
    std::copy_n(a->v.data(), static_cast<std::size_t>(ra) * c, out.data());
    std::copy_n(b->v.data(), static_cast<std::size_t>(rb) * c,
                out.data() + static_cast<std::size_t>(ra) * c);
    Var nd = make_node(std::move(out), {a, b}, any_req({a, b}));
    if (nd->req)
        nd->back = [a, b, ra, rb, c](Node& self) {
            if (a->req) {
                Tensor& ga = grad_buf(*a);
                for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += self.g[i];
            }
            if (b->req) {
                Tensor& gb = grad_buf(*b);
                const double* src = self.g.data() + static_cast<std::size_t>(ra) * c;
                for (std::int64_t i = 0; i < gb.numel(); ++i) gb[i] += src[i];
            }
        };
    return nd;
}

// Sum of -logp at selected (row, class) positions of a log-probability
// matrix.
inline Var gather_nll(const Var& logp, std::vector<std::pair<int, int>> picks) {
    if (logp->v.ndim() != 2) throw ShapeMismatch("gather_nll: expects [R,C]");
    double s = 0.0;
    for (const auto& [r, c] : picks) s -= logp->v.at(r, c);
    Var nd = make_node(Tensor::scalar(s), {logp}, logp->req);
    if (nd->req)
        nd->back = [logp, picks = std::move(picks)](Node& self) {
            Tensor& g = grad_buf(*logp);
            for (const auto& [r, c] : picks) g.at(r, c) -= self.g[0];
        };
    return nd;
}

// Spatial mean: [N,C,H,W] -> [N,C].
inline Var global_avgpool(const Var& x) {
    if (x->v.ndim() != 4) throw ShapeMismatch("global_avgpool: input must be [N,C,H,W]");
    const int n = x->v.dim(0), c = x->v.dim(1), h = x->v.dim(2), w = x->v.dim(3);
    const double inv = 1.0 / (static_cast<double>(h) * w);
    Tensor out({n, c});
    for (int i = 0; i < n; ++i)
        for (int ci = 0; ci < c; ++ci) {
            double s = 0.0;
            for (int y = 0; y < h; ++y)
                for (int x2 = 0; x2 < w; ++x2) s += x->v.at(i, ci, y, x2);
            out.at(i, ci) = s * inv;
        }
    Var nd = make_node(std::move(out), {x}, x->req);
    if (nd->req)
        nd->back = [x, n, c, h, w, inv](Node& self) {
            Tensor& gx = grad_buf(*x);
            for (int i = 0; i < n; ++i)
                for (int ci = 0; ci < c; ++ci) {
                    const double g = self.g.at(i, ci) * inv;
                    for (int y = 0; y < h; ++y)
                        for (int x2 = 0; x2 < w; ++x2) gx.at(i, ci, y, x2) += g;
                }
        };
    return nd;
}

}  // namespace homolab::ag
