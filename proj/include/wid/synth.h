#ifndef WID_SYNTH_H
#define WID_SYNTH_H

#include "wid/data_model.h"
#include "wid/tensor.h"

namespace wid {

// Pseudo-glyph line-image corpus. Writer identity fixes stroke statistics
// (thickness, slant, glyph width/spacing); page identity fixes nuisance
// factors (background tint, additive noise, ink level, and a style drift
// that grows with `nuisance`). nuisance = 0 makes pages of one writer
// i.i.d. in background statistics.
struct SynthSpec {
    int num_writers = 10;
    int pages_per_writer = 6;
    int lines_per_page = 10;
    double nuisance = 0.5;  // 0 = clean .. 1 = strong page cues
    uint64_t seed = 1;
    int line_height = 64;
    int line_width = 160;
    bool target_protocol_b = true;  // needs >= 3 pages per writer

    void validate() const;
};

// Renders the corpus under out_dir (<out_dir>/<page_id>/<line_id>.png) and
// returns the finalized manifest. Deterministic per (seed, page).
DatasetManifest generate_corpus(const SynthSpec& spec, const std::string& out_dir);

// Raw stroke statistics used by the nearest-centroid sanity floor.
struct StrokeStats {
    double ink_fraction = 0;  // fraction of ink pixels
    double thickness = 0;     // area/perimeter proxy
    double slant = 0;         // shear maximizing the vertical projection profile
    double glyph_density = 0; // ink column-segment starts per 100 columns
    double ink_level = 0;     // mean ink intensity (page cue)
    double bg_level = 0;      // mean background intensity (page cue)
};

StrokeStats stroke_stats(const Tensor<float>& image);

}  // namespace wid

#endif
