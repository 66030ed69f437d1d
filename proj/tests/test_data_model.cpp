#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "wid/data_model.h"
#include "wid/errors.h"
#include "wid/image_io.h"

using namespace wid;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    auto p = fs::temp_directory_path() / ("wid_dm_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write_line_image(const fs::path& path, int h = 8, int w = 16) {
    fs::create_directories(path.parent_path());
    Tensor<float> img{{h, w, 3}};
    img.fill(0.5f);
    save_image(img, path.string());
}

// 2 pages x 3 lines, 2 writers, one stampy extra page.
fs::path make_fixture(const std::string& tag, std::string* table_out) {
    auto root = temp_dir(tag);
    for (int p = 0; p < 2; ++p)
        for (int l = 0; l < 3; ++l)
            write_line_image(root / ("page" + std::to_string(p)) /
                             ("line" + std::to_string(l) + ".png"));
    auto table = root.string() + "_labels.csv";
    std::ofstream f(table);
    f << "page_id,line_id,writer_kind,writer_names,flags,collection\n";
    f << "page0,,single,Writer A,handwritten,collA\n";
    f << "page1,,single,Writer B,handwritten,collA\n";
    if (table_out) *table_out = table;
    return root;
}

}  // namespace

TEST_CASE("writer class canonicalization") {
    auto ab = WriterClass::make_pair("Yousef Hobeiche", "Angele Ellis");
    auto ba = WriterClass::make_pair("Angele Ellis", "Yousef Hobeiche");
    CHECK(ab.key() == ba.key());
    CHECK(ab.names == ba.names);
    CHECK(ab.display() == "Angele Ellis & Yousef Hobeiche");
    CHECK(WriterClass::make_single("May Ziadeh").key() == "may ziadeh");
    CHECK_THROWS_AS(WriterClass::make_pair("Same", "same"), DataError);
}

TEST_CASE("build_manifest on empty input") {
    auto root = temp_dir("empty");
    auto table = root.string() + "_labels.csv";
    std::ofstream(table) << "page_id,line_id,writer_kind,writer_names,flags,collection\n";
    auto m = build_manifest(root.string(), table);
    CHECK(m.pages.empty());
    CHECK(m.lines.empty());
    CHECK(m.num_classes() == 0);
    auto stats = manifest_stats(m);
    CHECK(stats.total_lines == 0);
    CHECK(stats.mean_lines == 0.0);
}

TEST_CASE("build_manifest counts the fixture") {
    std::string table;
    auto root = make_fixture("fixture", &table);
    auto m = build_manifest(root.string(), table);
    CHECK(m.pages.size() == 2);
    CHECK(m.lines.size() == 6);
    CHECK(m.num_classes() == 2);
    for (const auto& l : m.lines) CHECK(l.writer >= 0);

    // deterministic row order: sorted by (page_id, line_id)
    for (size_t i = 1; i < m.lines.size(); ++i)
        CHECK(std::tie(m.lines[i - 1].page_id, m.lines[i - 1].line_id) <
              std::tie(m.lines[i].page_id, m.lines[i].line_id));
}

TEST_CASE("build_manifest flags missing images as hard errors") {
    std::string table;
    auto root = make_fixture("missing", &table);
    std::ofstream(table, std::ios::app) << "page9,,single,Ghost,handwritten,c\n";
    CHECK_THROWS_WITH_AS(build_manifest(root.string(), table),
                         doctest::Contains("page9"), DataError);
}

TEST_CASE("manifest csv round trip") {
    std::string table;
    auto root = make_fixture("roundtrip", &table);
    auto m = build_manifest(root.string(), table);
    const auto path = root.string() + "_manifest.csv";
    save_manifest(m, path);
    auto back = load_manifest(path);
    CHECK(back.lines.size() == m.lines.size());
    CHECK(back.pages.size() == m.pages.size());
    CHECK(back.num_classes() == m.num_classes());
    CHECK(back.checksum() == m.checksum());
    for (size_t i = 0; i < m.lines.size(); ++i) {
        CHECK(back.lines[i].line_id == m.lines[i].line_id);
        CHECK(back.lines[i].writer == m.lines[i].writer);
        CHECK(back.lines[i].flags == m.lines[i].flags);
    }
}

TEST_CASE("duplicate line ids are rejected") {
    DatasetManifest m;
    m.classes.push_back(WriterClass::make_single("W"));
    for (int i = 0; i < 2; ++i) {
        LineRecord l;
        l.line_id = "dup";
        l.page_id = "p";
        l.image_path = "x.png";
        l.writer = 0;
        l.flags = kHandwritten;
        m.lines.push_back(l);
    }
    CHECK_THROWS_AS(m.finalize(), DataError);
}

namespace {
DatasetManifest flag_fixture() {
    DatasetManifest m;
    m.classes.push_back(WriterClass::make_single("A"));
    m.classes.push_back(WriterClass::make_single("B"));
    auto add = [&](const std::string& id, int writer, uint32_t flags) {
        LineRecord l;
        l.line_id = id;
        l.page_id = "pg_" + id.substr(0, 1);
        l.image_path = id + ".png";
        l.writer = writer;
        l.flags = flags;
        m.lines.push_back(l);
    };
    add("a0", 0, kHandwritten);
    add("a1", 0, kHandwritten | kMixedScript);  // retained: mixed script is kept
    add("b0", 1, kHandwritten);
    add("b1", 1, kHandwritten);
    add("s0", 0, kHandwritten | kStamp);
    add("s1", 1, kStamp);
    add("u0", -1, kHandwritten);  // unlabeled
    m.finalize();
    return m;
}
}  // namespace

TEST_CASE("filter_manifest keeps labeled handwritten lines only") {
    auto m = flag_fixture();
    FilterBreakdown b;
    auto f = filter_manifest(m, &b);
    CHECK(f.lines.size() == 4);
    CHECK(b.kept == 4);
    CHECK(b.dropped_unlabeled == 1);
    CHECK(b.dropped_content == 2);
    // conservation: drop reasons partition exactly
    CHECK(b.kept + b.dropped_unlabeled + b.dropped_content == (int)m.lines.size());
    for (const auto& l : f.lines) {
        CHECK(l.writer >= 0);
        CHECK(training_eligible_flags(l.flags));
    }
    // idempotent
    auto ff = filter_manifest(f);
    CHECK(ff.checksum() == f.checksum());
}

TEST_CASE("filtering everything yields an empty manifest") {
    DatasetManifest m;
    m.classes.push_back(WriterClass::make_single("T"));
    for (int i = 0; i < 3; ++i) {
        LineRecord l;
        l.line_id = "t" + std::to_string(i);
        l.page_id = "p";
        l.image_path = l.line_id + ".png";
        l.writer = 0;
        l.flags = kTypewritten;
        m.lines.push_back(l);
    }
    m.finalize();
    auto f = filter_manifest(m);
    CHECK(f.lines.empty());
    CHECK(f.pages.empty());
    CHECK(f.num_classes() == 0);
}

TEST_CASE("manifest_stats population std") {
    DatasetManifest m;
    m.classes.push_back(WriterClass::make_single("A"));
    m.classes.push_back(WriterClass::make_single("B"));
    m.classes.push_back(WriterClass::make_single("C"));
    int id = 0;
    auto add = [&](int writer, int n) {
        for (int i = 0; i < n; ++i) {
            LineRecord l;
            l.line_id = "l" + std::to_string(id++);
            l.page_id = "p" + std::to_string(writer);
            l.image_path = l.line_id + ".png";
            l.writer = writer;
            l.flags = kHandwritten;
            m.lines.push_back(l);
        }
    };
    add(0, 2);
    add(1, 4);
    add(2, 6);
    m.finalize();
    auto s = manifest_stats(m);
    CHECK(s.mean_lines == doctest::Approx(4.0));
    CHECK(s.std_lines == doctest::Approx(1.6329931618554521).epsilon(1e-9));
    CHECK(s.max_lines == 6);
    CHECK(s.min_lines == 2);
    CHECK(s.per_writer[0].lines == 6);  // sorted descending

    // single class: std 0
    DatasetManifest one;
    one.classes.push_back(WriterClass::make_single("Solo"));
    for (int i = 0; i < 10; ++i) {
        LineRecord l;
        l.line_id = "s" + std::to_string(i);
        l.page_id = "sp";
        l.image_path = l.line_id + ".png";
        l.writer = 0;
        l.flags = kHandwritten;
        one.lines.push_back(l);
    }
    one.finalize();
    auto s1 = manifest_stats(one);
    CHECK(s1.mean_lines == doctest::Approx(10.0));
    CHECK(s1.std_lines == doctest::Approx(0.0));
}

TEST_CASE("stats are pure") {
    auto m = flag_fixture();
    auto a = manifest_stats(m);
    auto b = manifest_stats(m);
    CHECK(a.total_lines == b.total_lines);
    CHECK(a.mean_lines == b.mean_lines);
    CHECK(a.std_lines == b.std_lines);
    CHECK(a.per_writer.size() == b.per_writer.size());
}
