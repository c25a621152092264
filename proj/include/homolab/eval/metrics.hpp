#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "homolab/core/errors.hpp"
#include "homolab/geometry/homography.hpp"
#include "homolab/image/image.hpp"

namespace homolab {

constexpr double kPsnrCapDb = 100.0;

// Average corner error: mean Euclidean distance over the four corners.
inline double ace(const CornerOffsets& pred, const CornerOffsets& gt) {
    if (!pred.all_finite() || !gt.all_finite()) throw BadParams("ace: non-finite offsets");
    double s = 0.0;
    for (int c = 0; c < 4; ++c)
        s += std::hypot(pred.dx(c) - gt.dx(c), pred.dy(c) - gt.dy(c));
    return s / 4.0;
}

// RMSE reading of the corner error, selectable in reports.
inline double ace_rmse(const CornerOffsets& pred, const CornerOffsets& gt) {
    double s = 0.0;
    for (int c = 0; c < 4; ++c) {
        const double dx = pred.dx(c) - gt.dx(c);
        const double dy = pred.dy(c) - gt.dy(c);
        s += dx * dx + dy * dy;
    }
    return std::sqrt(s / 4.0);
}

struct MaceResult {
    double mace = 0.0;
    std::vector<double> per_sample_ace;
};

inline MaceResult mace(const std::vector<CornerOffsets>& preds, const std::vector<CornerOffsets>& gts,
                       bool rmse = false) {
    if (preds.empty()) throw EmptySet("mace: no samples");
    if (preds.size() != gts.size()) throw ShapeMismatch("mace: prediction/gt count mismatch");
    MaceResult r;
    r.per_sample_ace.reserve(preds.size());
    double s = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double a = rmse ? ace_rmse(preds[i], gts[i]) : ace(preds[i], gts[i]);
        r.per_sample_ace.push_back(a);
        s += a;
    }
    r.mace = s / static_cast<double>(preds.size());
    return r;
}

inline double pme(const Homography& h_pred, const std::vector<std::pair<Vec2, Vec2>>& point_pairs) {
    if (point_pairs.empty()) throw EmptySet("pme: no point pairs");
    double s = 0.0;
    for (const auto& [src, dst] : point_pairs) {
        const Vec2 mapped = h_pred.apply(src);
        s += (mapped - dst).norm();
    }
    return s / static_cast<double>(point_pairs.size());
}

// 10*log10(peak^2 / MSE). Identical images are reported at the 100 dB cap.
inline double psnr(const Image& a, const Image& b, double peak = 1.0, bool* capped = nullptr) {
    if (!a.same_shape(b)) throw ShapeMismatch("psnr: shapes differ");
    const double mse = image_mse(a, b);
    if (capped) *capped = false;
    if (mse <= 0.0) {
        if (capped) *capped = true;
        return kPsnrCapDb;
    }
    const double v = 10.0 * std::log10(peak * peak / mse);
    if (v >= kPsnrCapDb) {
        if (capped) *capped = true;
        return kPsnrCapDb;
    }
    return v;
}

inline double psnr_from_mse(double mse, double peak) {
    if (mse <= 0.0) return kPsnrCapDb;
    return 10.0 * std::log10(peak * peak / mse);
}

namespace detail {
inline std::vector<double> gaussian_kernel(int size, double sigma) {
    std::vector<double> k(static_cast<std::size_t>(size));
    const int half = size / 2;
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        const double d = i - half;
        k[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += k[static_cast<std::size_t>(i)];
    }
    for (double& v : k) v /= sum;
    return k;
}

// Separable Gaussian filter, valid region only. Input/output are single
// channel planes stored row-major.
inline std::vector<double> gauss_valid(const std::vector<double>& in, int h, int w,
                                       const std::vector<double>& k, int& oh, int& ow) {
    const int n = static_cast<int>(k.size());
    ow = w - n + 1;
    oh = h - n + 1;
    std::vector<double> tmp(static_cast<std::size_t>(h) * ow, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += k[static_cast<std::size_t>(i)] * in[static_cast<std::size_t>(y) * w + x + i];
            tmp[static_cast<std::size_t>(y) * ow + x] = s;
        }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += k[static_cast<std::size_t>(i)] * tmp[static_cast<std::size_t>(y + i) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = s;
        }
    return out;
}
}  // namespace detail

// Windowed SSIM, 11x11 Gaussian window sigma 1.5, standard stabilization
// constants, mean over windows; channels averaged.
inline double ssim(const Image& a, const Image& b, double peak = 1.0) {
    if (!a.same_shape(b)) throw ShapeMismatch("ssim: shapes differ");
    constexpr int kWin = 11;
    if (a.height < kWin || a.width < kWin) throw ImageTooSmall("ssim: image smaller than window");
    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);
    const auto kern = detail::gaussian_kernel(kWin, 1.5);

    double total = 0.0;
    for (int ch = 0; ch < a.channels; ++ch) {
        const std::size_t n = static_cast<std::size_t>(a.height) * a.width;
        std::vector<double> pa(n), pb(n), paa(n), pbb(n), pab(n);
        for (int y = 0; y < a.height; ++y)
            for (int x = 0; x < a.width; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * a.width + x;
                const double va = a.at(y, x, ch);
                const double vb = b.at(y, x, ch);
                pa[i] = va;
                pb[i] = vb;
                paa[i] = va * va;
                pbb[i] = vb * vb;
                pab[i] = va * vb;
            }
        int oh = 0, ow = 0;
        const auto mu_a = detail::gauss_valid(pa, a.height, a.width, kern, oh, ow);
        const auto mu_b = detail::gauss_valid(pb, a.height, a.width, kern, oh, ow);
        const auto s_aa = detail::gauss_valid(paa, a.height, a.width, kern, oh, ow);
        const auto s_bb = detail::gauss_valid(pbb, a.height, a.width, kern, oh, ow);
        const auto s_ab = detail::gauss_valid(pab, a.height, a.width, kern, oh, ow);
        double acc = 0.0;
        for (std::size_t i = 0; i < mu_a.size(); ++i) {
            const double ma = mu_a[i], mb = mu_b[i];
            const double va = s_aa[i] - ma * ma;
            const double vb = s_bb[i] - mb * mb;
            const double cov = s_ab[i] - ma * mb;
            acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                   ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        total += acc / static_cast<double>(mu_a.size());
    }
    return total / a.channels;
}

// Zero-mean normalized cross-correlation over all pixels and channels.
inline double ncc(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw ShapeMismatch("ncc: shapes differ");
    const std::size_t n = a.px.size();
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a.px[i];
        mb += b.px[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = a.px[i] - ma;
        const double db = b.px[i] - mb;
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    if (saa <= 0.0 || sbb <= 0.0) throw ZeroVariance("ncc: constant image");
    return sab / std::sqrt(saa * sbb);
}

// CDF of per-sample corner errors: fraction of samples at or below each
// threshold.
inline std::vector<std::pair<double, double>> ace_cdf(const std::vector<double>& per_sample_ace,
                                                      const std::vector<double>& thresholds) {
    if (per_sample_ace.empty()) throw EmptySet("ace_cdf: no samples");
    std::vector<double> sorted = per_sample_ace;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::pair<double, double>> out;
    out.reserve(thresholds.size());
    for (double t : thresholds) {
        const auto it = std::upper_bound(sorted.begin(), sorted.end(), t);
        out.emplace_back(t, static_cast<double>(it - sorted.begin()) / static_cast<double>(sorted.size()));
    }
    return out;
}

}  // namespace homolab
