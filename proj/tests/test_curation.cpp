#include <doctest.h>

#include <random>

#include "wid/curation.h"
#include "wid/errors.h"

using namespace wid;

TEST_CASE("normalize_name folds case and whitespace") {
    CHECK(normalize_name("  Botros  Hassan ") == "botros hassan");
    CHECK(normalize_name("BOTROS HASAN") == "botros hasan");
    CHECK(normalize_name("") == "");
    CHECK(normalize_name("\t a \n b ") == "a b");
    // idempotent
    CHECK(normalize_name(normalize_name("  A   B ")) == normalize_name("  A   B "));
}

namespace {
// Independent full-table DP oracle.
int dp_oracle(const std::string& a, const std::string& b) {
    const size_t n = a.size(), m = b.size();
    std::vector<std::vector<int>> d(n + 1, std::vector<int>(m + 1));
    for (size_t i = 0; i <= n; ++i) d[i][0] = (int)i;
    for (size_t j = 0; j <= m; ++j) d[0][j] = (int)j;
    for (size_t i = 1; i <= n; ++i)
        for (size_t j = 1; j <= m; ++j)
            d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1,
                                d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    return d[n][m];
}

std::string random_word(std::mt19937_64& rng, int maxlen) {
    std::uniform_int_distribution<int> len(0, maxlen);
    std::uniform_int_distribution<int> ch('a', 'e');  // small alphabet stresses ties
    std::string s;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) s += (char)ch(rng);
    return s;
}
}  // namespace

TEST_CASE("edit_distance basics and oracle") {
    CHECK(edit_distance("abc", "abc") == 0);
    CHECK(edit_distance("abc", "") == 3);
    CHECK(edit_distance("", "abc") == 3);
    CHECK(edit_distance("botros hassan", "boutros hassan") == dp_oracle("botros hassan",
                                                                        "boutros hassan"));
    CHECK(edit_distance("botros hassan", "boutros hassan") == 1);

    std::mt19937_64 rng(5);
    for (int it = 0; it < 200; ++it) {
        const auto a = random_word(rng, 12), b = random_word(rng, 12);
        CHECK(edit_distance(a, b) == dp_oracle(a, b));
    }
}

TEST_CASE("edit_distance metric properties") {
    std::mt19937_64 rng(17);
    for (int it = 0; it < 300; ++it) {
        const auto a = random_word(rng, 10), b = random_word(rng, 10), c = random_word(rng, 10);
        const int ab = edit_distance(a, b);
        CHECK(ab == edit_distance(b, a));                        // symmetry
        CHECK(ab <= edit_distance(a, c) + edit_distance(c, b));  // triangle
        CHECK((ab == 0) == (a == b));
    }
}

TEST_CASE("similarity formula") {
    CHECK(similarity("Same Name", "same  name") == 100);
    CHECK(similarity("abcd", "wxyz") == 0);
    CHECK(similarity("botros hassan", "boutros hassan") == 93);  // d=1, max len 14
    CHECK(similarity("Botros Hassan", "Botros Hasan") == 92);    // d=1, max len 13
    CHECK(similarity("", "") == 100);

    std::mt19937_64 rng(23);
    for (int it = 0; it < 200; ++it) {
        const auto a = random_word(rng, 10), b = random_word(rng, 10);
        const int s = similarity(a, b);
        CHECK(s >= 0);
        CHECK(s <= 100);
        CHECK(s == similarity(b, a));
        if (s == 100) CHECK(normalize_name(a) == normalize_name(b));
    }
}

TEST_CASE("find_duplicate_candidates flags likely duplicates") {
    std::vector<std::string> names = {"Botros Hassan", "Boutros Hassan", "Botros Hasan",
                                      "Ameen Rihani", "May Ziadeh"};
    auto cands = find_duplicate_candidates(names, 90);
    REQUIRE(cands.size() == 2);
    // sorted by descending score
    CHECK(cands[0].score >= cands[1].score);
    for (const auto& c : cands) {
        CHECK(c.score >= 90);
        CHECK(normalize_name(c.name_a) <= normalize_name(c.name_b));
    }

    CHECK(find_duplicate_candidates({"x", "completely different"}, 95).empty());
    CHECK_THROWS_AS(find_duplicate_candidates(names, 80), std::invalid_argument);
    CHECK_THROWS_AS(find_duplicate_candidates(names, 96), std::invalid_argument);
    CHECK_THROWS_AS(find_duplicate_candidates({}, 90), std::invalid_argument);
}

TEST_CASE("lowering the threshold never removes candidates") {
    std::vector<std::string> names;
    std::mt19937_64 rng(31);
    for (int i = 0; i < 12; ++i) names.push_back(random_word(rng, 8) + " " + random_word(rng, 8));
    names.push_back("Botros Hassan");
    names.push_back("Botros Hasan");

    auto key = [](const DuplicateCandidate& c) { return c.name_a + "\x01" + c.name_b; };
    for (int hi = 95; hi > 85; --hi) {
        auto strict = find_duplicate_candidates(names, hi);
        auto loose = find_duplicate_candidates(names, hi - 1);
        for (const auto& c : strict) {
            bool found = false;
            for (const auto& d : loose)
                if (key(c) == key(d)) found = true;
            CHECK(found);
        }
        CHECK(loose.size() >= strict.size());
    }
}

namespace {
DatasetManifest tiny_manifest() {
    DatasetManifest m;
    m.classes.push_back(WriterClass::make_single("Father Youssef Baissary"));
    m.classes.push_back(WriterClass::make_single("Father Youhanna Habib Baissary"));
    m.classes.push_back(WriterClass::make_single("Ameen Rihani"));
    auto add = [&](const std::string& page, int n, int writer) {
        for (int i = 0; i < n; ++i) {
            LineRecord l;
            l.page_id = page;
            l.line_id = page + "_l" + std::to_string(i);
            l.image_path = l.line_id + ".png";
            l.writer = writer;
            l.flags = kHandwritten;
            m.lines.push_back(l);
        }
    };
    add("p0", 3, 0);
    add("p1", 2, 1);
    add("p2", 4, 2);
    m.finalize();
    return m;
}
}  // namespace

TEST_CASE("merge_labels merges classes and conserves lines") {
    auto m = tiny_manifest();
    REQUIRE(m.num_classes() == 3);
    const int before = (int)m.lines.size();

    MergeLog log;
    auto merged = merge_labels(
        m, {{"father youssef baissary", "father youhanna habib baissary"}}, &log);
    CHECK(merged.num_classes() == 2);
    CHECK((int)merged.lines.size() == before);
    CHECK(log.applied.size() == 1);
    CHECK(log.classes_before == 3);
    CHECK(log.classes_after == 2);

    // 3 + 2 lines merged into one class of 5
    const int idx = merged.class_index(normalize_name("Father Youhanna Habib Baissary"));
    REQUIRE(idx >= 0);
    int count = 0;
    for (const auto& l : merged.lines)
        if (l.writer == idx) ++count;
    CHECK(count == 5);
}

TEST_CASE("merge_labels identity and cycles") {
    auto m = tiny_manifest();
    auto same = merge_labels(m, {{"ameen rihani", "Ameen Rihani"}});
    CHECK(same.num_classes() == m.num_classes());
    CHECK(same.lines.size() == m.lines.size());

    CHECK_THROWS_AS(
        merge_labels(m, {{"ameen rihani", "may ziadeh"}, {"may ziadeh", "ameen rihani"}}),
        std::invalid_argument);
}

TEST_CASE("merge_labels rewrites pair members") {
    DatasetManifest m;
    m.classes.push_back(WriterClass::make_pair("Yousef Hobeiche", "Angele Ellis"));
    m.classes.push_back(WriterClass::make_single("Angela Ellis"));
    for (int i = 0; i < 3; ++i) {
        LineRecord l;
        l.page_id = "p0";
        l.line_id = "p0_l" + std::to_string(i);
        l.image_path = l.line_id + ".png";
        l.writer = i == 2 ? 1 : 0;
        l.flags = kHandwritten;
        m.lines.push_back(l);
    }
    m.finalize();

    auto merged = merge_labels(m, {{"angele ellis", "Angela Ellis"}});
    CHECK(merged.num_classes() == 2);
    bool found_pair = false;
    for (const auto& c : merged.classes)
        if (c.kind == WriterClass::Kind::pair) {
            found_pair = true;
            CHECK(c.key() == "angela ellis|yousef hobeiche");
        }
    CHECK(found_pair);
}
