#include "wid/splits.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "wid/csv.h"
#include "wid/errors.h"

namespace wid {

const char* role_name(Role r) {
    switch (r) {
        case Role::train: return "train";
        case Role::val: return "val";
        case Role::test: return "test";
    }
    return "?";
}

Role parse_role(const std::string& s) {
    if (s == "train") return Role::train;
    if (s == "val") return Role::val;
    if (s == "test") return Role::test;
    throw DataError("unknown role '" + s + "'");
}

std::array<int, 3> role_counts(int n) {
    const int test = std::max(1, (int)std::llround(0.15 * n));
    const int val = std::max(1, (int)(0.15 * n));
    return {n - val - test, val, test};
}

int SplitAssignment::class_index(const std::string& key) const {
    for (size_t i = 0; i < classes.size(); ++i)
        if (classes[i].key() == key) return (int)i;
    return -1;
}

namespace {

// Per-class rng derived from (seed, dense class id); stable for a fixed
// (manifest, seed) pair.
std::mt19937_64 class_rng(uint64_t seed, int class_id) {
    return std::mt19937_64(seed * 0x9e3779b97f4a7c15ull + (uint64_t)class_id + 1);
}

std::vector<WriterClass> densify(std::vector<WriterClass> classes) {
    for (size_t i = 0; i < classes.size(); ++i) classes[i].class_id = (int)i;
    return classes;
}

}  // namespace

SplitAssignment split_line_level(const DatasetManifest& m, uint64_t seed) {
    SplitAssignment s;
    s.protocol = 'A';
    s.seed = seed;
    s.manifest_checksum = m.checksum();

    std::vector<std::vector<std::string>> lines_of(m.num_classes());
    for (const auto& l : m.lines)
        if (l.writer >= 0) lines_of[l.writer].push_back(l.line_id);

    for (int c = 0; c < m.num_classes(); ++c)
        if ((int)lines_of[c].size() < 3)
            throw DataError("class '" + m.classes[c].display() + "' has " +
                            std::to_string(lines_of[c].size()) +
                            " lines; protocol A needs at least 3");

    s.classes = densify(m.classes);
    for (int c = 0; c < m.num_classes(); ++c) {
        auto ids = lines_of[c];  // manifest order, then seeded shuffle
        auto rng = class_rng(seed, c);
        std::shuffle(ids.begin(), ids.end(), rng);
        const auto [ntrain, nval, ntest] = role_counts((int)ids.size());
        for (int i = 0; i < (int)ids.size(); ++i) {
            Role r = i < ntrain ? Role::train : (i < ntrain + nval ? Role::val : Role::test);
            s.assignment[ids[i]] = r;
        }
        (void)ntest;
    }
    return s;
}

SplitAssignment split_page_disjoint(const DatasetManifest& m, int min_pages, uint64_t seed) {
    SplitAssignment s;
    s.protocol = 'B';
    s.seed = seed;
    s.manifest_checksum = m.checksum();

    // A page is an unambiguous unit when all its labeled lines share one
    // class; mixed pages cannot be split atomically per class and sit out.
    std::map<std::string, int> page_class;
    for (const auto& p : m.pages) {
        std::set<int> writers;
        for (const auto& lid : p.line_ids) {
            const LineRecord* l = m.find_line(lid);
            if (l && l->writer >= 0) writers.insert(l->writer);
        }
        if (writers.size() == 1) page_class[p.page_id] = *writers.begin();
        else s.excluded_pages.push_back(p.page_id);
    }

    std::vector<std::vector<std::string>> pages_of(m.num_classes());
    for (const auto& [pid, c] : page_class) pages_of[c].push_back(pid);

    std::vector<WriterClass> included;
    std::vector<int> included_old;
    for (int c = 0; c < m.num_classes(); ++c) {
        if ((int)pages_of[c].size() >= min_pages) {
            included_old.push_back(c);
            included.push_back(m.classes[c]);
        } else {
            s.excluded_classes.push_back(m.classes[c].display());
        }
    }
    s.classes = densify(std::move(included));

    std::map<std::string, Role> page_role;
    for (size_t ci = 0; ci < included_old.size(); ++ci) {
        auto ids = pages_of[included_old[ci]];  // already sorted (map order)
        auto rng = class_rng(seed, (int)ci);
        std::shuffle(ids.begin(), ids.end(), rng);
        const auto [ntrain, nval, ntest] = role_counts((int)ids.size());
        (void)ntest;
        for (int i = 0; i < (int)ids.size(); ++i) {
            Role r = i < ntrain ? Role::train : (i < ntrain + nval ? Role::val : Role::test);
            page_role[ids[i]] = r;
        }
    }

    for (const auto& l : m.lines) {
        auto it = page_role.find(l.page_id);
        if (it != page_role.end()) s.assignment[l.line_id] = it->second;
    }
    return s;
}

VerificationReport verify_split(const SplitAssignment& s, const DatasetManifest& m) {
    VerificationReport rep;

    std::map<std::string, const LineRecord*> by_id;
    for (const auto& l : m.lines) by_id[l.line_id] = &l;

    for (const auto& [lid, role] : s.assignment) {
        (void)role;
        if (!by_id.count(lid)) rep.fail("assigned line not in manifest: " + lid);
    }

    // Map manifest classes onto split classes.
    std::vector<int> split_class(m.num_classes(), -1);
    for (int c = 0; c < m.num_classes(); ++c)
        split_class[c] = s.class_index(m.classes[c].key());

    // Included lines must be assigned exactly once (map guarantees at most
    // one role; omissions are caught here).
    if (s.protocol == 'A') {
        for (const auto& l : m.lines) {
            if (l.writer < 0) continue;
            if (split_class[l.writer] < 0) {
                rep.fail("class missing from split class list: " +
                         m.classes[l.writer].display());
                continue;
            }
            if (!s.assignment.count(l.line_id)) rep.fail("line not assigned: " + l.line_id);
        }
    } else {
        // Protocol B: pages are atomic; a page is included iff any of its
        // lines is assigned, and then all must share one role.
        for (const auto& p : m.pages) {
            int nassigned = 0;
            std::set<Role> roles;
            for (const auto& lid : p.line_ids) {
                auto it = s.assignment.find(lid);
                if (it != s.assignment.end()) {
                    ++nassigned;
                    roles.insert(it->second);
                }
            }
            if (nassigned == 0) continue;
            if (nassigned != (int)p.line_ids.size())
                rep.fail("page split across included/excluded lines: " + p.page_id);
            if (roles.size() > 1) rep.fail("page atomicity violated: " + p.page_id);
        }
    }

    // Closed-set coverage + ratio deviation per class.
    const int k = (int)s.classes.size();
    std::vector<std::array<int, 3>> line_counts(k, {0, 0, 0});
    std::vector<std::array<std::set<std::string>, 3>> page_sets(k);
    for (const auto& l : m.lines) {
        auto it = s.assignment.find(l.line_id);
        if (it == s.assignment.end() || l.writer < 0) continue;
        const int sc = split_class[l.writer];
        if (sc < 0) continue;
        ++line_counts[sc][(int)it->second];
        page_sets[sc][(int)it->second].insert(l.page_id);
    }
    for (int c = 0; c < k; ++c) {
        std::array<int, 3> counts;
        if (s.protocol == 'A') {
            counts = line_counts[c];
        } else {
            counts = {(int)page_sets[c][0].size(), (int)page_sets[c][1].size(),
                      (int)page_sets[c][2].size()};
        }
        const int total = counts[0] + counts[1] + counts[2];
        const char* unit = s.protocol == 'A' ? "line" : "page";
        for (int r = 0; r < 3; ++r)
            if (counts[r] == 0)
                rep.fail("class '" + s.classes[c].display() + "' has no " + unit + " in " +
                         role_name((Role)r));
        if (total > 0) {
            const auto expected = role_counts(total);
            for (int r = 0; r < 3; ++r)
                if (std::abs(counts[r] - expected[r]) > 1)
                    rep.fail("class '" + s.classes[c].display() + "' " + role_name((Role)r) +
                             " count " + std::to_string(counts[r]) + " deviates from rule " +
                             std::to_string(expected[r]));
        }
    }
    return rep;
}

std::string VerificationReport::summary() const {
    if (passed) return "split verification: pass";
    std::string out = "split verification: FAIL\n";
    for (const auto& v : violations) out += "  - " + v + "\n";
    return out;
}

void save_split(const SplitAssignment& s, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write split file: " + path);
    f << "# protocol=" << s.protocol << " seed=" << s.seed << " ratios=0.70/0.15/0.15"
      << " manifest_checksum=" << s.manifest_checksum << "\n";
    f << "line_id,role\n";
    for (const auto& [lid, role] : s.assignment)
        f << join_csv({lid, role_name(role)}) << "\n";
}

SplitAssignment load_split(const std::string& path, const DatasetManifest& m) {
    const CsvFile csv = read_csv(path);
    SplitAssignment s;
    s.manifest_checksum = m.checksum();
    for (const auto& c : csv.comments) {
        std::istringstream is(c.substr(1));
        std::string tok;
        while (is >> tok) {
            if (tok.rfind("protocol=", 0) == 0) s.protocol = tok[9];
            if (tok.rfind("seed=", 0) == 0) s.seed = std::stoull(tok.substr(5));
            if (tok.rfind("manifest_checksum=", 0) == 0 && tok.substr(18) != s.manifest_checksum)
                throw DataError("split file was built from a different manifest");
        }
    }
    if (csv.rows.empty() || csv.rows[0] != std::vector<std::string>{"line_id", "role"})
        throw DataError("split header mismatch in " + path);
    for (size_t i = 1; i < csv.rows.size(); ++i)
        s.assignment[csv.rows[i][0]] = parse_role(csv.rows[i][1]);

    // Reconstruct the included class list from the assignment.
    std::set<int> used;
    for (const auto& l : m.lines)
        if (l.writer >= 0 && s.assignment.count(l.line_id)) used.insert(l.writer);
    std::vector<WriterClass> cls;
    for (int c : used) cls.push_back(m.classes[c]);
    s.classes = cls;
    for (size_t i = 0; i < s.classes.size(); ++i) s.classes[i].class_id = (int)i;
    return s;
}

}  // namespace wid
