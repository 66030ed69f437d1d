#ifndef WID_PREPROCESS_H
#define WID_PREPROCESS_H

#include <random>

#include "wid/splits.h"
#include "wid/tensor.h"

namespace wid {

struct PreprocessedImage {
    Tensor<float> pixels;  // [target, target, 3] in [0,1]; padding exactly zero
    std::string source_line_id;
};

// Aspect-preserving resize of an [H,W,3] line image onto a zero-filled
// target x target canvas, anchored top-left. The scale is target/max(H,W);
// output dims are floor(dim * scale), clamped to >= 1. Bilinear.
PreprocessedImage block_process(const Tensor<float>& image, int target = 224);

// Training-only affine jitter ranges (defaults match the training recipe).
struct AugmentParams {
    double rotation_deg = 15.0;
    double zoom_frac = 0.30;
    double shear_frac = 0.30;
    double width_shift_frac = 0.20;
    double height_shift_frac = 0.20;
    // fill mode is fixed: nearest

    static AugmentParams none() { return {0, 0, 0, 0, 0}; }
};

// Samples one affine transform uniformly within the ranges (draw order:
// rotation, zoom, shear, width shift, height shift) and resamples with
// nearest-neighbor lookup; out-of-bounds sources clamp to the nearest edge
// pixel. All parameters at zero is the identity.
PreprocessedImage augment(const PreprocessedImage& img, const AugmentParams& p,
                          std::mt19937_64& rng);

// Batch stream over one split role. Train order reshuffles per epoch from
// the seed and applies augmentation; val/test keep manifest order untouched.
// Labels are one-hot against the split's class list.
class BatchLoader {
public:
    BatchLoader(const DatasetManifest& m, const SplitAssignment& split, Role role, int batch,
                uint64_t seed, AugmentParams aug, bool augment_train = true);

    struct Batch {
        Tensor<float> images;  // [B,224,224,3]
        Tensor<float> labels;  // [B,num_classes]
        std::vector<std::string> line_ids;
    };

    void start_epoch(int epoch);
    bool next(Batch& out);

    int size() const { return (int)order_.size(); }
    int num_batches() const { return (size() + batch_ - 1) / batch_; }
    int num_classes() const { return num_classes_; }

private:
    const DatasetManifest& manifest_;
    Role role_;
    int batch_;
    uint64_t seed_;
    AugmentParams aug_;
    bool augment_train_;
    int num_classes_;
    int epoch_ = 0;
    size_t cursor_ = 0;
    std::vector<int> base_;   // manifest line indices for this role
    std::vector<int> order_;  // current epoch order
    std::vector<int> labels_;

    // decoded-image cache (images are 8-bit on disk, so the u8 cache is
    // bit-exact vs re-decoding)
    struct CachedImage {
        int h = 0, w = 0;
        std::vector<unsigned char> rgb;
    };
    std::vector<CachedImage> cache_;
    Tensor<float> decoded(int pos);
};

}  // namespace wid

#endif
