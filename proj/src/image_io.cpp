#include "wid/image_io.h"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "wid/errors.h"

namespace wid {

Tensor<float> load_image(const std::string& path) {
    cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
    if (bgr.empty()) throw DataError("cannot read image: " + path);
    Tensor<float> img{{bgr.rows, bgr.cols, 3}};
    for (int r = 0; r < bgr.rows; ++r) {
        const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(r);
        float* dst = img.data() + (int64_t)r * bgr.cols * 3;
        for (int c = 0; c < bgr.cols; ++c) {
            dst[c * 3 + 0] = row[c][2] / 255.0f;
            dst[c * 3 + 1] = row[c][1] / 255.0f;
            dst[c * 3 + 2] = row[c][0] / 255.0f;
        }
    }
    return img;
}

void save_image(const Tensor<float>& img, const std::string& path) {
    const int h = img.dim(0), w = img.dim(1);
    cv::Mat bgr(h, w, CV_8UC3);
    for (int r = 0; r < h; ++r) {
        cv::Vec3b* row = bgr.ptr<cv::Vec3b>(r);
        const float* src = img.data() + (int64_t)r * w * 3;
        for (int c = 0; c < w; ++c) {
            auto q = [](float v) {
                return (unsigned char)std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f);
            };
            row[c] = {q(src[c * 3 + 2]), q(src[c * 3 + 1]), q(src[c * 3 + 0])};
        }
    }
    if (!cv::imwrite(path, bgr)) throw DataError("cannot write image: " + path);
}

}  // namespace wid
