#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <vector>

#include "homolab/core/errors.hpp"

namespace homolab {

using Vec2 = Eigen::Vector2d;

// Axis-aligned patch placed inside a parent image. Corners are the centers of
// the four corner pixels, ordered TL, TR, BR, BL.
struct PatchFrame {
    double ox = 0.0, oy = 0.0;
    double width = 0.0, height = 0.0;

    PatchFrame() = default;
    PatchFrame(double ox_, double oy_, double w_, double h_) : ox(ox_), oy(oy_), width(w_), height(h_) {
        if (width <= 0.0 || height <= 0.0) throw BadParams("patch frame size must be positive");
    }

    std::array<Vec2, 4> corners() const {
        return {Vec2(ox, oy), Vec2(ox + width - 1.0, oy), Vec2(ox + width - 1.0, oy + height - 1.0),
                Vec2(ox, oy + height - 1.0)};
    }
};

// Displacements of the four frame corners, ordered TL, TR, BR, BL.
struct CornerOffsets {
    std::array<double, 8> d{};  // dx0,dy0,dx1,dy1,dx2,dy2,dx3,dy3

    double& dx(int corner) { return d[static_cast<std::size_t>(2 * corner)]; }
    double& dy(int corner) { return d[static_cast<std::size_t>(2 * corner + 1)]; }
    double dx(int corner) const { return d[static_cast<std::size_t>(2 * corner)]; }
    double dy(int corner) const { return d[static_cast<std::size_t>(2 * corner + 1)]; }

    bool all_finite() const {
        for (double v : d)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : d) m = std::max(m, std::abs(v));
        return m;
    }
};

// 3x3 planar projective transform in pixel coordinates, homogeneous.
// Canonical form divides by h22 so h(2,2) == 1.
struct Homography {
    Eigen::Matrix3d h = Eigen::Matrix3d::Identity();

    static Homography identity() { return Homography{}; }

    static Homography translation(double tx, double ty) {
        Homography m;
        m.h(0, 2) = tx;
        m.h(1, 2) = ty;
        return m;
    }

    static Homography from_matrix(const Eigen::Matrix3d& m) {
        Homography out{m};
        out.normalize();
        return out;
    }

    void normalize() {
        if (std::abs(h(2, 2)) < 1e-9) throw DegenerateCorners("homography scale entry near zero");
        h /= h(2, 2);
        if (!h.allFinite()) throw DegenerateCorners("homography has non-finite entries");
        if (std::abs(h.determinant()) <= 1e-12) throw DegenerateCorners("homography is singular");
    }

    Homography inverse() const {
        return from_matrix(h.inverse());
    }

    Homography compose(const Homography& rhs) const {  // this ∘ rhs
        return from_matrix(h * rhs.h);
    }

    Vec2 apply(const Vec2& p) const {
        const double w = h(2, 0) * p.x() + h(2, 1) * p.y() + h(2, 2);
        if (std::abs(w) <= 1e-12) throw ProjectiveOverflow("point maps to the line at infinity");
        return Vec2((h(0, 0) * p.x() + h(0, 1) * p.y() + h(0, 2)) / w,
                    (h(1, 0) * p.x() + h(1, 1) * p.y() + h(1, 2)) / w);
    }

    std::array<double, 9> row_major() const {
        return {h(0, 0), h(0, 1), h(0, 2), h(1, 0), h(1, 1), h(1, 2), h(2, 0), h(2, 1), h(2, 2)};
    }

    static Homography from_row_major(const std::array<double, 9>& v) {
        Eigen::Matrix3d m;
        m << v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8];
        return from_matrix(m);
    }
};

// Exact DLT on the four corner correspondences: eight unknowns (h22 fixed to
// 1), one 8x8 linear solve. Rank deficiency means three target corners are
// collinear.
inline Homography offsets_to_homography(const PatchFrame& frame, const CornerOffsets& d) {
    if (!d.all_finite()) throw BadParams("corner offsets must be finite");
    const auto src = frame.corners();
    Eigen::Matrix<double, 8, 8> a = Eigen::Matrix<double, 8, 8>::Zero();
    Eigen::Matrix<double, 8, 1> b;
    for (int c = 0; c < 4; ++c) {
        const double x = src[static_cast<std::size_t>(c)].x();
        const double y = src[static_cast<std::size_t>(c)].y();
        const double u = x + d.dx(c);
        const double v = y + d.dy(c);
        a(2 * c, 0) = x;
        a(2 * c, 1) = y;
        a(2 * c, 2) = 1.0;
        a(2 * c, 6) = -u * x;
        a(2 * c, 7) = -u * y;
        b(2 * c) = u;
        a(2 * c + 1, 3) = x;
        a(2 * c + 1, 4) = y;
        a(2 * c + 1, 5) = 1.0;
        a(2 * c + 1, 6) = -v * x;
        a(2 * c + 1, 7) = -v * y;
        b(2 * c + 1) = v;
    }
    Eigen::FullPivLU<Eigen::Matrix<double, 8, 8>> lu(a);
    if (!lu.isInvertible()) throw DegenerateCorners("DLT system is rank-deficient");
    const Eigen::Matrix<double, 8, 1> z = lu.solve(b);
    Eigen::Matrix3d m;
    m << z(0), z(1), z(2), z(3), z(4), z(5), z(6), z(7), 1.0;
    return Homography::from_matrix(m);
}

inline CornerOffsets homography_to_offsets(const PatchFrame& frame, const Homography& h) {
    CornerOffsets d;
    const auto src = frame.corners();
    for (int c = 0; c < 4; ++c) {
        const Vec2 mapped = h.apply(src[static_cast<std::size_t>(c)]);
        d.dx(c) = mapped.x() - src[static_cast<std::size_t>(c)].x();
        d.dy(c) = mapped.y() - src[static_cast<std::size_t>(c)].y();
    }
    return d;
}

inline std::vector<Vec2> warp_points(const Homography& h, const std::vector<Vec2>& pts) {
    std::vector<Vec2> out;
    out.reserve(pts.size());
    for (const Vec2& p : pts) out.push_back(h.apply(p));
    return out;
}

}  // namespace homolab
