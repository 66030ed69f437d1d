#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "wid/image_io.h"
#include "wid/splits.h"
#include "wid/synth.h"

using namespace wid;
namespace fs = std::filesystem;

namespace {
fs::path scratch(const std::string& tag) {
    auto p = fs::temp_directory_path() / ("wid_synth_" + tag);
    fs::remove_all(p);
    return p;
}
}  // namespace

TEST_CASE("generate: counts follow the spec") {
    SynthSpec spec;
    spec.num_writers = 2;
    spec.pages_per_writer = 3;
    spec.lines_per_page = 10;
    spec.seed = 5;
    auto m = generate_corpus(spec, scratch("counts").string());
    CHECK(m.lines.size() == 60);
    CHECK(m.pages.size() == 6);
    CHECK(m.num_classes() == 2);
    for (const auto& l : m.lines) CHECK(fs::exists(l.image_path));
}

TEST_CASE("generate: same seed is bit-identical") {
    SynthSpec spec;
    spec.num_writers = 2;
    spec.pages_per_writer = 3;
    spec.lines_per_page = 2;
    spec.seed = 9;
    auto m1 = generate_corpus(spec, scratch("det1").string());
    auto m2 = generate_corpus(spec, scratch("det2").string());
    REQUIRE(m1.lines.size() == m2.lines.size());
    for (size_t i = 0; i < m1.lines.size(); ++i) {
        std::ifstream a(m1.lines[i].image_path, std::ios::binary);
        std::ifstream b(m2.lines[i].image_path, std::ios::binary);
        std::string sa((std::istreambuf_iterator<char>(a)), {});
        std::string sb((std::istreambuf_iterator<char>(b)), {});
        CHECK(sa == sb);
    }
}

TEST_CASE("generate: rejects protocol-B-infeasible specs") {
    SynthSpec spec;
    spec.pages_per_writer = 2;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec.target_protocol_b = false;
    CHECK_NOTHROW(spec.validate());
}

TEST_CASE("nuisance level 0 keeps page backgrounds i.i.d.") {
    SynthSpec spec;
    spec.num_writers = 2;
    spec.pages_per_writer = 4;
    spec.lines_per_page = 4;
    spec.nuisance = 0.0;
    spec.seed = 3;
    auto m = generate_corpus(spec, scratch("clean").string());

    // per-page mean background; at nuisance 0 all pages share bg=1.0 and
    // sigma=0.015, so the across-page variance of page means is noise-level
    std::map<std::string, std::pair<double, int>> page_bg;
    for (const auto& l : m.lines) {
        auto img = load_image(l.image_path);
        const auto st = stroke_stats(img);
        page_bg[l.page_id].first += st.bg_level;
        page_bg[l.page_id].second += 1;
    }
    std::vector<double> means;
    for (auto& [pid, acc] : page_bg) means.push_back(acc.first / acc.second);
    double mu = 0;
    for (double v : means) mu += v;
    mu /= means.size();
    double var = 0;
    for (double v : means) var += (v - mu) * (v - mu);
    var /= means.size();
    CHECK(var < 1e-5);

    // and the high-nuisance corpus has visibly dispersed page backgrounds
    spec.nuisance = 1.0;
    auto hi = generate_corpus(spec, scratch("noisy").string());
    std::map<std::string, std::pair<double, int>> hi_bg;
    for (const auto& l : hi.lines) {
        const auto st = stroke_stats(load_image(l.image_path));
        hi_bg[l.page_id].first += st.bg_level;
        hi_bg[l.page_id].second += 1;
    }
    std::vector<double> hi_means;
    for (auto& [pid, acc] : hi_bg) hi_means.push_back(acc.first / acc.second);
    double hmu = 0;
    for (double v : hi_means) hmu += v;
    hmu /= hi_means.size();
    double hvar = 0;
    for (double v : hi_means) hvar += (v - hmu) * (v - hmu);
    hvar /= hi_means.size();
    CHECK(hvar > 100 * var);
}

TEST_CASE("writer separability floor: nearest centroid on stroke stats > 90%") {
    SynthSpec spec;  // default spec: 10 writers x 6 pages x 10 lines, mid nuisance
    spec.seed = 21;
    auto m = generate_corpus(spec, scratch("sep").string());

    struct Feat {
        double x[4];
    };
    std::vector<std::vector<Feat>> by_writer(m.num_classes());
    for (const auto& l : m.lines) {
        const auto st = stroke_stats(load_image(l.image_path));
        by_writer[l.writer].push_back(
            {{st.ink_fraction, st.thickness, st.slant, st.glyph_density}});
    }

    // even lines fit the centroids, odd lines are classified (interleaving
    // mixes pages into both halves; page-disjoint behavior is measured by
    // the training harness, not this floor)
    std::vector<Feat> train_all;
    for (const auto& w : by_writer)
        for (size_t i = 0; i < w.size(); i += 2) train_all.push_back(w[i]);
    double mu[4] = {0, 0, 0, 0}, sd[4] = {0, 0, 0, 0};
    for (const auto& f : train_all)
        for (int d = 0; d < 4; ++d) mu[d] += f.x[d];
    for (int d = 0; d < 4; ++d) mu[d] /= train_all.size();
    for (const auto& f : train_all)
        for (int d = 0; d < 4; ++d) sd[d] += (f.x[d] - mu[d]) * (f.x[d] - mu[d]);
    for (int d = 0; d < 4; ++d) sd[d] = std::sqrt(sd[d] / train_all.size()) + 1e-9;

    std::vector<Feat> centroids(m.num_classes(), {{0, 0, 0, 0}});
    for (int w = 0; w < m.num_classes(); ++w) {
        const size_t n = (by_writer[w].size() + 1) / 2;
        for (size_t i = 0; i < by_writer[w].size(); i += 2)
            for (int d = 0; d < 4; ++d)
                centroids[w].x[d] += (by_writer[w][i].x[d] - mu[d]) / sd[d] / n;
    }

    int correct = 0, total = 0;
    for (int w = 0; w < m.num_classes(); ++w)
        for (size_t i = 1; i < by_writer[w].size(); i += 2) {
            double best = 1e300;
            int arg = -1;
            for (int c = 0; c < m.num_classes(); ++c) {
                double dist = 0;
                for (int d = 0; d < 4; ++d) {
                    const double z = (by_writer[w][i].x[d] - mu[d]) / sd[d] - centroids[c].x[d];
                    dist += z * z;
                }
                if (dist < best) {
                    best = dist;
                    arg = c;
                }
            }
            correct += arg == w;
            ++total;
        }
    const double acc = (double)correct / total;
    CHECK(acc > 0.90);
}

TEST_CASE("synthetic manifests split cleanly under both protocols") {
    SynthSpec spec;
    spec.num_writers = 4;
    spec.pages_per_writer = 3;
    spec.lines_per_page = 4;
    spec.seed = 8;
    auto m = generate_corpus(spec, scratch("split").string());
    CHECK(verify_split(split_line_level(m, 1), m).passed);
    auto b = split_page_disjoint(m, 3, 1);
    CHECK(verify_split(b, m).passed);
    CHECK(b.classes.size() == 4);  // exactly 3 pages each: all eligible
}
