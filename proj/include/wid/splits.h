#ifndef WID_SPLITS_H
#define WID_SPLITS_H

#include <array>
#include <map>

#include "wid/data_model.h"

namespace wid {

enum class Role { train = 0, val = 1, test = 2 };

const char* role_name(Role r);
Role parse_role(const std::string& s);

// Per-class role counts for n items under the 70/15/15 rule with guaranteed
// closed-set coverage: test = max(1, round(.15n)), val = max(1, floor(.15n)),
// train = remainder.
std::array<int, 3> role_counts(int n);

struct SplitAssignment {
    char protocol = 'A';
    uint64_t seed = 0;
    std::array<double, 3> ratios{0.70, 0.15, 0.15};
    std::map<std::string, Role> assignment;  // line_id -> role
    std::vector<WriterClass> classes;        // included classes, dense ids
    std::vector<std::string> excluded_classes;  // protocol B only
    std::vector<std::string> excluded_pages;    // protocol B: ambiguous units
    std::string manifest_checksum;

    int class_index(const std::string& key) const;
};

// Protocol A: per-class stratified line-level 70/15/15. Every class needs at
// least 3 lines (hard error otherwise) and lands in all three roles.
SplitAssignment split_line_level(const DatasetManifest& m, uint64_t seed);

// Protocol B: pages are indivisible; classes with fewer than min_pages
// single-writer pages are excluded (silently, but logged in the assignment).
SplitAssignment split_page_disjoint(const DatasetManifest& m, int min_pages, uint64_t seed);

struct VerificationReport {
    bool passed = true;
    std::vector<std::string> violations;

    void fail(const std::string& why) {
        passed = false;
        violations.push_back(why);
    }
    std::string summary() const;
};

// Structural leakage checks: exact role partition, protocol-B page
// atomicity, closed-set coverage, and per-class ratio deviation of at most
// one item per role from the stated rounding rule.
VerificationReport verify_split(const SplitAssignment& s, const DatasetManifest& m);

void save_split(const SplitAssignment& s, const std::string& path);
SplitAssignment load_split(const std::string& path, const DatasetManifest& m);

}  // namespace wid

#endif
