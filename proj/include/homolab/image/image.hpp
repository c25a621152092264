#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "homolab/core/errors.hpp"

namespace homolab {

// Interleaved HWC image with values in [0,1].
struct Image {
    int height = 0, width = 0, channels = 0;
    std::vector<double> px;

    Image() = default;
    Image(int h, int w, int c, double fill = 0.0)
        : height(h), width(w), channels(c), px(static_cast<std::size_t>(h) * w * c, fill) {
        if (h <= 0 || w <= 0 || c <= 0) throw BadParams("image dimensions must be positive");
    }

    double& at(int y, int x, int c) {
        return px[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    double at(int y, int x, int c) const {
        return px[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }

    std::size_t size() const { return px.size(); }
    bool same_shape(const Image& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }

    void clamp01() {
        for (double& v : px) v = std::clamp(v, 0.0, 1.0);
    }

    Image crop(int y0, int x0, int h, int w) const {
        if (y0 < 0 || x0 < 0 || y0 + h > height || x0 + w > width)
            throw BadParams("crop exceeds image bounds");
        Image out(h, w, channels);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < channels; ++c) out.at(y, x, c) = at(y0 + y, x0 + x, c);
        return out;
    }

    // Bilinear resize, pixel-center aligned.
    Image resize(int h, int w) const {
        Image out(h, w, channels);
        const double sy = static_cast<double>(height) / h;
        const double sx = static_cast<double>(width) / w;
        for (int y = 0; y < h; ++y) {
            const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(height - 1));
            const int y0 = static_cast<int>(std::floor(fy));
            const int y1 = std::min(y0 + 1, height - 1);
            const double wy = fy - y0;
            for (int x = 0; x < w; ++x) {
                const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(width - 1));
                const int x0 = static_cast<int>(std::floor(fx));
                const int x1 = std::min(x0 + 1, width - 1);
                const double wx = fx - x0;
                for (int c = 0; c < channels; ++c) {
                    const double top = (1.0 - wx) * at(y0, x0, c) + wx * at(y0, x1, c);
                    const double bot = (1.0 - wx) * at(y1, x0, c) + wx * at(y1, x1, c);
                    out.at(y, x, c) = (1.0 - wy) * top + wy * bot;
                }
            }
        }
        return out;
    }

    // Quantize to 8 bits and back; the on-disk representation round trip.
    Image quantized() const {
        Image out(height, width, channels);
        for (std::size_t i = 0; i < px.size(); ++i) {
            const int q = static_cast<int>(std::lround(std::clamp(px[i], 0.0, 1.0) * 255.0));
            out.px[i] = q / 255.0;
        }
        return out;
    }
};

inline double image_mse(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw ShapeMismatch("image_mse: shapes differ");
    double s = 0.0;
    for (std::size_t i = 0; i < a.px.size(); ++i) {
        const double d = a.px[i] - b.px[i];
        s += d * d;
    }
    return s / static_cast<double>(a.px.size());
}

}  // namespace homolab
