#pragma once

#include <cmath>

#include "homolab/geometry/homography.hpp"
#include "homolab/image/image.hpp"

namespace homolab {

// Inverse-mapped bilinear warp: out(x) = img(h^-1 x). Samples outside the
// input are zero; output clamped to [0,1].
inline Image warp_image(const Homography& h, const Image& img, int out_h, int out_w) {
    if (out_h <= 0 || out_w <= 0) throw BadParams("warp_image: output size must be positive");
    const Eigen::Matrix3d inv = h.inverse().h;
    Image out(out_h, out_w, img.channels);
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            const double w = inv(2, 0) * x + inv(2, 1) * y + inv(2, 2);
            if (std::abs(w) <= 1e-12) continue;
            const double sx = (inv(0, 0) * x + inv(0, 1) * y + inv(0, 2)) / w;
            const double sy = (inv(1, 0) * x + inv(1, 1) * y + inv(1, 2)) / w;
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const double fx = sx - x0;
            const double fy = sy - y0;
            for (int c = 0; c < img.channels; ++c) {
                auto tap = [&](int yy, int xx) -> double {
                    if (yy < 0 || xx < 0 || yy >= img.height || xx >= img.width) return 0.0;
                    return img.at(yy, xx, c);
                };
                const double v = (1.0 - fy) * ((1.0 - fx) * tap(y0, x0) + fx * tap(y0, x0 + 1)) +
                                 fy * ((1.0 - fx) * tap(y0 + 1, x0) + fx * tap(y0 + 1, x0 + 1));
                out.at(y, x, c) = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return out;
}

}  // namespace homolab
