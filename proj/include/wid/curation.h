#ifndef WID_CURATION_H
#define WID_CURATION_H

#include <map>

#include "wid/data_model.h"

namespace wid {

// Trims, collapses internal whitespace runs, and case-folds ASCII letters.
// Input is expected to be NFC-normalized UTF-8; non-ASCII bytes pass through.
std::string normalize_name(const std::string& s);

// Levenshtein distance over Unicode code points, unit edit costs.
int edit_distance(const std::string& a, const std::string& b);

// round(100 * (1 - d / max(|a'|,|b'|))) on normalized forms; 100 when both
// normalize to empty.
int similarity(const std::string& a, const std::string& b);

struct DuplicateCandidate {
    std::string name_a, name_b;  // canonical order: normalized(a) < normalized(b)
    int score = 0;
    int threshold_used = 0;
};

// All unordered pairs scoring >= threshold (threshold must be in [85,95]),
// sorted by descending score then pair order. Nothing is merged here; every
// candidate goes to manual review.
std::vector<DuplicateCandidate> find_duplicate_candidates(const std::vector<std::string>& names,
                                                          int threshold);

struct MergeLog {
    std::vector<std::pair<std::string, std::string>> applied;  // (from, to) display names
    int classes_before = 0, classes_after = 0;
};

// Rewrites writer names (single classes and pair members) through the
// mapping, re-canonicalizes, and re-densifies classes. Mappings are matched
// on normalized names and resolved transitively; a non-trivial cycle is an
// error. Total line count is conserved.
DatasetManifest merge_labels(const DatasetManifest& m,
                             const std::map<std::string, std::string>& mapping,
                             MergeLog* log = nullptr);

}  // namespace wid

#endif
