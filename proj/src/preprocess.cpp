#include "wid/preprocess.h"

#include <algorithm>
#include <cmath>

#include "wid/errors.h"
#include "wid/image_io.h"

namespace wid {

namespace {

// Standard half-pixel-center bilinear; an identity scale copies exactly.
Tensor<float> bilinear_resize(const Tensor<float>& src, int oh, int ow) {
    const int h = src.dim(0), w = src.dim(1);
    Tensor<float> dst{{oh, ow, 3}};
    const double sy = (double)h / oh, sx = (double)w / ow;
    for (int r = 0; r < oh; ++r) {
        double fy = (r + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, (double)(h - 1));
        const int y0 = (int)fy;
        const int y1 = std::min(y0 + 1, h - 1);
        const double wy = fy - y0;
        for (int c = 0; c < ow; ++c) {
            double fx = (c + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, (double)(w - 1));
            const int x0 = (int)fx;
            const int x1 = std::min(x0 + 1, w - 1);
            const double wx = fx - x0;
            for (int ch = 0; ch < 3; ++ch) {
                const double v00 = src[((int64_t)y0 * w + x0) * 3 + ch];
                const double v01 = src[((int64_t)y0 * w + x1) * 3 + ch];
                const double v10 = src[((int64_t)y1 * w + x0) * 3 + ch];
                const double v11 = src[((int64_t)y1 * w + x1) * 3 + ch];
                const double top = v00 + (v01 - v00) * wx;
                const double bot = v10 + (v11 - v10) * wx;
                dst[((int64_t)r * ow + c) * 3 + ch] = (float)(top + (bot - top) * wy);
            }
        }
    }
    return dst;
}

}  // namespace

PreprocessedImage block_process(const Tensor<float>& image, int target) {
    if (image.rank() != 3 || image.dim(2) != 3)
        throw std::invalid_argument("block_process: expected an [H,W,3] image");
    const int h = image.dim(0), w = image.dim(1);
    if (h < 1 || w < 1) throw std::invalid_argument("block_process: zero-sized image");

    const int longest = std::max(h, w);
    // Integer arithmetic: floor(dim * target / longest), clamped to >= 1.
    const int oh = std::max(1, (int)((int64_t)h * target / longest));
    const int ow = std::max(1, (int)((int64_t)w * target / longest));

    Tensor<float> scaled =
        (oh == h && ow == w) ? image.clone() : bilinear_resize(image, oh, ow);
    PreprocessedImage out;
    out.pixels = Tensor<float>::zeros({target, target, 3});
    for (int r = 0; r < oh; ++r)
        std::copy_n(scaled.data() + (int64_t)r * ow * 3, ow * 3,
                    out.pixels.data() + (int64_t)r * target * 3);
    return out;
}

PreprocessedImage augment(const PreprocessedImage& img, const AugmentParams& p,
                          std::mt19937_64& rng) {
    auto draw = [&rng](double range) {
        if (range == 0.0) return 0.0;
        return std::uniform_real_distribution<double>(-range, range)(rng);
    };
    const double theta = draw(p.rotation_deg) * M_PI / 180.0;
    const double zoom = draw(p.zoom_frac);
    const double shear = draw(p.shear_frac);
    const double tx = draw(p.width_shift_frac);
    const double ty = draw(p.height_shift_frac);

    const int size = img.pixels.dim(0);
    const double cx = (size - 1) / 2.0, cy = (size - 1) / 2.0;

    // Inverse map (destination -> source) about the image center:
    // rotate, shear, then inverse-zoom; shifts move the sampling window.
    const double inv_scale = 1.0 / (1.0 + zoom);
    const double ca = std::cos(theta), sa = std::sin(theta);
    // A = R(-theta) * Sh(-shear) * inv_scale
    const double a00 = ca * inv_scale, a01 = (sa - ca * shear) * inv_scale;
    const double a10 = -sa * inv_scale, a11 = (ca + sa * shear) * inv_scale;
    const double ox = tx * size, oy = ty * size;

    PreprocessedImage out;
    out.source_line_id = img.source_line_id;
    out.pixels = Tensor<float>{{size, size, 3}};
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) {
            const double dx = c - cx, dy = r - cy;
            const double sxf = cx + a00 * dx + a01 * dy - ox;
            const double syf = cy + a10 * dx + a11 * dy - oy;
            // nearest lookup; edge clamp doubles as nearest fill
            const int sx = std::clamp((int)std::lround(sxf), 0, size - 1);
            const int sy = std::clamp((int)std::lround(syf), 0, size - 1);
            const float* src = img.pixels.data() + ((int64_t)sy * size + sx) * 3;
            float* dst = out.pixels.data() + ((int64_t)r * size + c) * 3;
            dst[0] = src[0];
            dst[1] = src[1];
            dst[2] = src[2];
        }
    return out;
}

BatchLoader::BatchLoader(const DatasetManifest& m, const SplitAssignment& split, Role role,
                         int batch, uint64_t seed, AugmentParams aug, bool augment_train)
    : manifest_(m), role_(role), batch_(batch), seed_(seed), aug_(aug),
      augment_train_(augment_train), num_classes_((int)split.classes.size()) {
    if (batch <= 0) throw std::invalid_argument("loader: batch size must be positive");
    std::vector<int> split_class(m.num_classes(), -1);
    for (int c = 0; c < m.num_classes(); ++c)
        split_class[c] = split.class_index(m.classes[c].key());
    for (int i = 0; i < (int)m.lines.size(); ++i) {
        const auto& l = m.lines[i];
        auto it = split.assignment.find(l.line_id);
        if (it == split.assignment.end() || it->second != role) continue;
        if (l.writer < 0 || split_class[l.writer] < 0) continue;
        base_.push_back(i);  // manifest order (page_id, line_id)
        labels_.push_back(split_class[l.writer]);
    }
    order_.resize(base_.size());
    for (size_t i = 0; i < base_.size(); ++i) order_[i] = (int)i;
    cache_.resize(base_.size());
}

Tensor<float> BatchLoader::decoded(int pos) {
    CachedImage& ci = cache_[pos];
    if (ci.rgb.empty()) {
        Tensor<float> img = load_image(manifest_.lines[base_[pos]].image_path);
        ci.h = img.dim(0);
        ci.w = img.dim(1);
        ci.rgb.resize(img.numel());
        for (int64_t i = 0; i < img.numel(); ++i)
            ci.rgb[i] = (unsigned char)std::lround(img[i] * 255.0f);
    }
    Tensor<float> img{{ci.h, ci.w, 3}};
    for (int64_t i = 0; i < img.numel(); ++i) img[i] = ci.rgb[i] / 255.0f;
    return img;
}

void BatchLoader::start_epoch(int epoch) {
    epoch_ = epoch;
    cursor_ = 0;
    for (size_t i = 0; i < base_.size(); ++i) order_[i] = (int)i;
    if (role_ == Role::train) {
        std::mt19937_64 rng(seed_ * 0x2545f4914f6cdd1dull + (uint64_t)epoch + 1);
        std::shuffle(order_.begin(), order_.end(), rng);
    }
}

bool BatchLoader::next(Batch& out) {
    if (cursor_ >= order_.size()) return false;
    const int n = (int)std::min((size_t)batch_, order_.size() - cursor_);
    out.images = Tensor<float>{{n, 224, 224, 3}};
    out.labels = Tensor<float>::zeros({n, num_classes_});
    out.line_ids.assign(n, "");
    for (int i = 0; i < n; ++i) {
        const int pos = order_[cursor_ + i];
        const auto& line = manifest_.lines[base_[pos]];
        PreprocessedImage pre = block_process(decoded(pos));
        pre.source_line_id = line.line_id;
        if (role_ == Role::train && augment_train_) {
            // per-line stream: fixed (seed, epoch, line) -> identical batches
            // regardless of worker layout
            std::mt19937_64 rng(seed_ ^ (0x9e3779b97f4a7c15ull * (uint64_t)(epoch_ + 1)) ^
                                ((uint64_t)pos << 20));
            pre = augment(pre, aug_, rng);
        }
        std::copy_n(pre.pixels.data(), pre.pixels.numel(),
                    out.images.data() + (int64_t)i * 224 * 224 * 3);
        out.labels[(int64_t)i * num_classes_ + labels_[pos]] = 1.0f;
        out.line_ids[i] = line.line_id;
    }
    cursor_ += n;
    return true;
}

}  // namespace wid
