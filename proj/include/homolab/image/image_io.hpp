#pragma once

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <filesystem>
#include <string>
#include <vector>

#include "homolab/core/errors.hpp"
#include "homolab/image/image.hpp"

namespace homolab {

inline Image load_image(const std::string& path) {
    cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
    if (m.empty()) throw IoError("cannot decode image: " + path);
    Image out(m.rows, m.cols, 3);
    for (int y = 0; y < m.rows; ++y) {
        const auto* row = m.ptr<cv::Vec3b>(y);
        for (int x = 0; x < m.cols; ++x) {
            // OpenCV loads BGR
            out.at(y, x, 0) = row[x][2] / 255.0;
            out.at(y, x, 1) = row[x][1] / 255.0;
            out.at(y, x, 2) = row[x][0] / 255.0;
        }
    }
    return out;
}

inline void save_png(const Image& img, const std::string& path) {
    if (img.channels != 3 && img.channels != 1) throw BadParams("save_png expects 1 or 3 channels");
    cv::Mat m(img.height, img.width, CV_8UC3);
    for (int y = 0; y < img.height; ++y) {
        auto* row = m.ptr<cv::Vec3b>(y);
        for (int x = 0; x < img.width; ++x) {
            auto q = [&](int c) {
                const int ch = img.channels == 1 ? 0 : c;
                return static_cast<unsigned char>(
                    std::lround(std::clamp(img.at(y, x, ch), 0.0, 1.0) * 255.0));
            };
            row[x] = cv::Vec3b(q(2), q(1), q(0));
        }
    }
    if (!cv::imwrite(path, m, {cv::IMWRITE_PNG_COMPRESSION, 6}))
        throw IoError("cannot write image: " + path);
}

inline std::vector<std::string> list_images(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        auto ext = e.path().extension().string();
        for (auto& c : ext) c = static_cast<char>(std::tolower(c));
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp")
            out.push_back(e.path().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace homolab
