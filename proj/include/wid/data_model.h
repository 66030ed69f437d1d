#ifndef WID_DATA_MODEL_H
#define WID_DATA_MODEL_H

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace wid {

// Line content flags. Training keeps lines that are handwritten and carry
// none of the excluded kinds; ottoman-script and mixed-script are retained
// as informational flags.
enum ContentFlag : uint32_t {
    kHandwritten = 1u << 0,
    kTypewritten = 1u << 1,
    kStamp = 1u << 2,
    kPageNumber = 1u << 3,
    kPrinted = 1u << 4,
    kOttomanScript = 1u << 5,
    kMixedScript = 1u << 6,
};

uint32_t parse_flags(const std::string& joined);       // "handwritten;stamp"
std::string flags_to_string(uint32_t flags);

inline bool training_eligible_flags(uint32_t flags) {
    return (flags & kHandwritten) &&
           !(flags & (kTypewritten | kStamp | kPageNumber | kPrinted));
}

// A single writer or a canonicalized composite writer-pair.
struct WriterClass {
    enum class Kind { single, pair };
    Kind kind = Kind::single;
    std::vector<std::string> names;  // pair members in canonical order
    int class_id = -1;

    static WriterClass make_single(const std::string& name);
    // Member order is normalized-lexicographic, so (a,b) and (b,a) coincide.
    static WriterClass make_pair(const std::string& a, const std::string& b);
    static WriterClass from_fields(const std::string& kind, const std::string& joined_names);

    std::string key() const;      // normalized identity, members joined by '|'
    std::string display() const;  // "A & B" for pairs
    std::string joined_names() const;
    std::string kind_string() const { return kind == Kind::single ? "single" : "pair"; }
};

struct LineRecord {
    std::string line_id;
    std::string page_id;
    std::string image_path;
    int writer = -1;  // index into DatasetManifest::classes, -1 when absent
    uint32_t flags = 0;
};

struct PageRecord {
    std::string page_id;
    int writer = -1;
    std::vector<std::string> line_ids;
    std::string collection;
};

// Immutable once finalized: rows sorted by (page_id, line_id), classes sorted
// by canonical key with dense contiguous ids.
struct DatasetManifest {
    std::vector<PageRecord> pages;
    std::vector<LineRecord> lines;
    std::vector<WriterClass> classes;
    std::string provenance;

    int num_classes() const { return (int)classes.size(); }
    const LineRecord* find_line(const std::string& line_id) const;
    const PageRecord* find_page(const std::string& page_id) const;
    int class_index(const std::string& key) const;

    // Sorts, assigns class ids, groups pages, and validates invariants.
    void finalize();
    std::string checksum() const;
};

// Scans dataset_root for line images (<root>/<page_id>/<line_id>.<ext>) and
// joins them with the label table (CSV: page_id,line_id,writer_kind,
// writer_names,flags,collection; empty line_id rows are page-wide defaults).
DatasetManifest build_manifest(const std::string& dataset_root, const std::string& label_table);

DatasetManifest load_manifest(const std::string& csv_path);
void save_manifest(const DatasetManifest& m, const std::string& csv_path);

struct FilterBreakdown {
    int kept = 0;
    int dropped_unlabeled = 0;
    int dropped_content = 0;
};

DatasetManifest filter_manifest(const DatasetManifest& m, FilterBreakdown* breakdown = nullptr);

struct StatsReport {
    struct PerWriter {
        std::string display;
        int lines = 0;
        int pages = 0;
    };
    std::vector<PerWriter> per_writer;  // descending by line count
    int total_lines = 0, total_pages = 0, num_classes = 0;
    double max_lines = 0, min_lines = 0, mean_lines = 0, std_lines = 0;
    double max_pages = 0, min_pages = 0, mean_pages = 0, std_pages = 0;
};

StatsReport manifest_stats(const DatasetManifest& m);
std::string format_stats(const StatsReport& r);

}  // namespace wid

#endif
