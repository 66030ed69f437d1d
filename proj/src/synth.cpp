#include "wid/synth.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "wid/errors.h"
#include "wid/image_io.h"

namespace fs = std::filesystem;

namespace wid {

void SynthSpec::validate() const {
    if (num_writers < 1 || pages_per_writer < 1 || lines_per_page < 1)
        throw std::invalid_argument("synth: counts must be positive");
    if (target_protocol_b && pages_per_writer < 3)
        throw std::invalid_argument(
            "synth: protocol B target needs at least 3 pages per writer");
    if (nuisance < 0 || nuisance > 1)
        throw std::invalid_argument("synth: nuisance must lie in [0,1]");
    if (line_height < 16 || line_width < 32)
        throw std::invalid_argument("synth: line geometry too small");
}

namespace {

uint64_t mix(uint64_t a, uint64_t b) {
    uint64_t x = a * 0x9e3779b97f4a7c15ull + b + 0x632be59bd9b4e019ull;
    x ^= x >> 27;
    x *= 0x2545f4914f6cdd1dull;
    x ^= x >> 31;
    return x;
}

struct WriterStyle {
    double thickness;
    double slant;
    double glyph_w;
    double spacing_jitter;
    double curvature;
};

// Style parameters sit on a coarse grid (joint residues keep 10+ writers
// distinct) with a small seeded jitter on top.
WriterStyle writer_style(uint64_t seed, int w) {
    std::mt19937_64 rng(mix(seed, 0x57a1 + (uint64_t)w));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    WriterStyle s;
    s.thickness = 1.5 + 1.6 * (w % 4) + 0.08 * u(rng);
    s.slant = -0.54 + 0.27 * (w % 5) + 0.01 * u(rng);
    s.glyph_w = 10.0 + 7.0 * (w % 3) + 0.3 * u(rng);
    s.spacing_jitter = 1.5 + 2.6 * ((w / 3) % 3);
    s.curvature = 0.25 + 0.3 * ((w / 5) % 2);
    return s;
}

struct PageNuisance {
    double bg;
    double noise_sigma;
    double ink;
    double thickness_drift;
    double slant_drift;
};

PageNuisance page_nuisance(uint64_t seed, int w, int p, double level) {
    std::mt19937_64 rng(mix(seed, 0xbadcab1e + (uint64_t)w * 131 + (uint64_t)p));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    PageNuisance n;
    n.bg = 1.0 - level * 0.38 * u01(rng);
    n.noise_sigma = 0.015 + level * 0.08 * u01(rng);
    n.ink = 0.08 + level * 0.30 * u01(rng);
    // style drift ramps superlinearly: mild mid-level corpora stay writer-
    // separable from raw stroke stats while high-nuisance pages diverge
    n.thickness_drift = level * level * 0.45 * gauss(rng);
    n.slant_drift = level * level * 0.07 * gauss(rng);
    return n;
}

void stamp_disk(Tensor<float>& img, double cx, double cy, double radius, float ink) {
    const int h = img.dim(0), w = img.dim(1);
    const int r0 = std::max(0, (int)std::floor(cy - radius));
    const int r1 = std::min(h - 1, (int)std::ceil(cy + radius));
    const int c0 = std::max(0, (int)std::floor(cx - radius));
    const int c1 = std::min(w - 1, (int)std::ceil(cx + radius));
    for (int r = r0; r <= r1; ++r)
        for (int c = c0; c <= c1; ++c) {
            const double dx = c - cx, dy = r - cy;
            if (dx * dx + dy * dy > radius * radius) continue;
            float* px = img.data() + ((int64_t)r * w + c) * 3;
            const float v = std::min(px[0], ink);
            px[0] = px[1] = px[2] = v;
        }
}

void draw_stroke(Tensor<float>& img, double x0, double y0, double x1, double y1, double cx,
                 double cy, double slant, double y_ref, double thickness, float ink) {
    const int steps = 48;
    for (int i = 0; i <= steps; ++i) {
        const double t = (double)i / steps;
        const double omt = 1.0 - t;
        double x = omt * omt * x0 + 2 * omt * t * cx + t * t * x1;
        double y = omt * omt * y0 + 2 * omt * t * cy + t * t * y1;
        x += slant * (y_ref - y);  // positive slant leans the stroke forward
        stamp_disk(img, x, y, thickness, ink);
    }
}

Tensor<float> render_line(const SynthSpec& spec, const WriterStyle& style,
                          const PageNuisance& page, uint64_t line_seed) {
    std::mt19937_64 rng(line_seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const int h = spec.line_height, w = spec.line_width;
    Tensor<float> img{{h, w, 3}};
    img.fill((float)page.bg);

    const double thickness = std::max(0.7, style.thickness + page.thickness_drift);
    const double slant = style.slant + page.slant_drift;
    const double y_mid = h / 2.0;
    const float ink = (float)page.ink;

    double x = 6.0 + 2.0 * u01(rng);
    while (x < w - style.glyph_w - 6.0) {
        const int strokes = 2 + (int)(u01(rng) * 3.0);
        const double gw = style.glyph_w * (0.85 + 0.3 * u01(rng));
        const double gh = h * (0.45 + 0.2 * u01(rng));
        const double base = y_mid + gauss(rng) * 2.0;
        for (int s = 0; s < strokes; ++s) {
            const double x0 = x + u01(rng) * gw, x1 = x + u01(rng) * gw;
            const double y0 = base - gh / 2 + u01(rng) * gh;
            const double y1 = base - gh / 2 + u01(rng) * gh;
            const double cxp = x + u01(rng) * gw;
            const double cyp = base - gh / 2 + u01(rng) * gh +
                               style.curvature * gh * (u01(rng) - 0.5);
            draw_stroke(img, x0, y0, x1, y1, cxp, cyp, slant, base, thickness, ink);
        }
        x += gw + style.spacing_jitter * (0.6 + 0.8 * u01(rng)) + 2.0;
    }

    if (page.noise_sigma > 0) {
        for (int64_t i = 0; i < (int64_t)h * w; ++i) {
            const float n = (float)(gauss(rng) * page.noise_sigma);
            float* px = img.data() + i * 3;
            for (int c = 0; c < 3; ++c) px[c] = std::clamp(px[c] + n, 0.0f, 1.0f);
        }
    }
    return img;
}

}  // namespace

DatasetManifest generate_corpus(const SynthSpec& spec, const std::string& out_dir) {
    spec.validate();
    DatasetManifest m;
    m.provenance = "synth seed=" + std::to_string(spec.seed);

    for (int w = 0; w < spec.num_writers; ++w) {
        char wname[32];
        std::snprintf(wname, sizeof wname, "Synth Writer %02d", w);
        m.classes.push_back(WriterClass::make_single(wname));
    }

    for (int w = 0; w < spec.num_writers; ++w) {
        const WriterStyle style = writer_style(spec.seed, w);
        for (int p = 0; p < spec.pages_per_writer; ++p) {
            const PageNuisance page = page_nuisance(spec.seed, w, p, spec.nuisance);
            char page_id[32];
            std::snprintf(page_id, sizeof page_id, "w%02d_p%02d", w, p);
            fs::create_directories(fs::path(out_dir) / page_id);
            for (int l = 0; l < spec.lines_per_page; ++l) {
                char line_tag[16];
                std::snprintf(line_tag, sizeof line_tag, "l%02d", l);
                LineRecord rec;
                rec.page_id = page_id;
                rec.line_id = std::string(page_id) + "_" + line_tag;
                rec.image_path =
                    (fs::path(out_dir) / page_id / (std::string(line_tag) + ".png")).string();
                rec.writer = w;
                rec.flags = kHandwritten;

                const uint64_t line_seed =
                    mix(spec.seed, mix((uint64_t)w * 8209 + p, (uint64_t)l + 17));
                save_image(render_line(spec, style, page, line_seed), rec.image_path);
                m.lines.push_back(std::move(rec));
            }
            PageRecord pg;
            pg.page_id = page_id;
            pg.collection = "synth";
            m.pages.push_back(pg);
        }
    }
    m.finalize();
    return m;
}

StrokeStats stroke_stats(const Tensor<float>& image) {
    const int h = image.dim(0), w = image.dim(1);
    std::vector<float> raw((size_t)h * w);
    for (int64_t i = 0; i < (int64_t)h * w; ++i)
        raw[i] = (image[i * 3] + image[i * 3 + 1] + image[i * 3 + 2]) / 3.0f;

    // 3x3 box smoothing suppresses additive page noise before thresholding
    std::vector<float> gray((size_t)h * w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            float sum = 0;
            int n = 0;
            for (int dr = -1; dr <= 1; ++dr)
                for (int dc = -1; dc <= 1; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
                    sum += raw[(size_t)rr * w + cc];
                    ++n;
                }
            gray[(size_t)r * w + c] = sum / n;
        }

    auto sorted = gray;
    std::nth_element(sorted.begin(), sorted.begin() + (size_t)(sorted.size() * 0.9),
                     sorted.end());
    const float bg = sorted[(size_t)(sorted.size() * 0.9)];
    float mn = gray[0];
    for (float v : gray) mn = std::min(mn, v);
    const float thr = (bg + mn) / 2.0f;

    StrokeStats st;
    std::vector<char> ink((size_t)h * w, 0);
    int64_t ink_n = 0;
    double ink_sum = 0, bg_sum = 0;
    int64_t bg_n = 0;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const float v = gray[(size_t)r * w + c];
            if (v < thr) {
                ink[(size_t)r * w + c] = 1;
                ++ink_n;
                ink_sum += v;
            } else {
                ++bg_n;
                bg_sum += v;
            }
        }
    st.ink_fraction = (double)ink_n / ((double)h * w);
    st.ink_level = ink_n ? ink_sum / ink_n : 0.0;
    st.bg_level = bg_n ? bg_sum / bg_n : 1.0;
    if (ink_n == 0) return st;

    // thickness proxy: ink area over ink boundary length
    int64_t perimeter = 0;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            if (!ink[(size_t)r * w + c]) continue;
            bool edge = r == 0 || r == h - 1 || c == 0 || c == w - 1;
            if (!edge)
                edge = !ink[(size_t)(r - 1) * w + c] || !ink[(size_t)(r + 1) * w + c] ||
                       !ink[(size_t)r * w + c - 1] || !ink[(size_t)r * w + c + 1];
            if (edge) ++perimeter;
        }
    st.thickness = (double)ink_n / std::max<int64_t>(1, perimeter);

    // slant: the shear whose unshear maximizes the column-profile energy
    const double y_ref = h / 2.0;
    double best_score = -1, best_shear = 0;
    for (int si = -16; si <= 16; ++si) {
        const double shear = si * 0.04;
        std::vector<int> profile(w + 2 * h, 0);
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c)
                if (ink[(size_t)r * w + c]) {
                    const int cc = (int)std::lround(c + shear * (y_ref - r)) + h;
                    if (cc >= 0 && cc < (int)profile.size()) ++profile[cc];
                }
        double score = 0;
        for (int v : profile) score += (double)v * v;
        if (score > best_score) {
            best_score = score;
            best_shear = shear;
        }
    }
    st.slant = best_shear;

    // glyph density: rising edges of the column-occupancy profile
    int edges = 0;
    bool prev = false;
    for (int c = 0; c < w; ++c) {
        bool any = false;
        for (int r = 0; r < h && !any; ++r) any = ink[(size_t)r * w + c];
        if (any && !prev) ++edges;
        prev = any;
    }
    st.glyph_density = 100.0 * edges / w;
    return st;
}

}  // namespace wid
