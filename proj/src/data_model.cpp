#include "wid/data_model.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "wid/csv.h"
#include "wid/curation.h"
#include "wid/errors.h"

namespace fs = std::filesystem;

namespace wid {

namespace {

const std::pair<const char*, uint32_t> kFlagNames[] = {
    {"handwritten", kHandwritten}, {"typewritten", kTypewritten},
    {"stamp", kStamp},             {"page-number", kPageNumber},
    {"printed", kPrinted},         {"ottoman-script", kOttomanScript},
    {"mixed-script", kMixedScript},
};

uint64_t fnv1a(const std::string& s, uint64_t h = 1469598103934665603ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

uint32_t parse_flags(const std::string& joined) {
    uint32_t out = 0;
    std::string cur;
    auto flush = [&] {
        if (cur.empty()) return;
        for (const auto& [name, bit] : kFlagNames)
            if (cur == name) {
                out |= bit;
                cur.clear();
                return;
            }
        throw DataError("unknown content flag: '" + cur + "'");
    };
    for (char c : joined) {
        if (c == ';') flush();
        else if (c != ' ') cur += c;
    }
    flush();
    return out;
}

std::string flags_to_string(uint32_t flags) {
    std::string out;
    for (const auto& [name, bit] : kFlagNames)
        if (flags & bit) {
            if (!out.empty()) out += ';';
            out += name;
        }
    return out;
}

WriterClass WriterClass::make_single(const std::string& name) {
    WriterClass w;
    w.kind = Kind::single;
    w.names = {name};
    return w;
}

WriterClass WriterClass::make_pair(const std::string& a, const std::string& b) {
    if (normalize_name(a) == normalize_name(b))
        throw DataError("composite pair needs two distinct names, got '" + a + "' twice");
    WriterClass w;
    w.kind = Kind::pair;
    if (normalize_name(a) <= normalize_name(b)) w.names = {a, b};
    else w.names = {b, a};
    return w;
}

WriterClass WriterClass::from_fields(const std::string& kind, const std::string& joined_names) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : joined_names) {
        if (c == '|') {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    parts.push_back(cur);
    if (kind == "single") {
        if (parts.size() != 1) throw DataError("single writer with " + joined_names);
        return make_single(parts[0]);
    }
    if (kind == "pair") {
        if (parts.size() != 2) throw DataError("pair writer needs 2 names: " + joined_names);
        return make_pair(parts[0], parts[1]);
    }
    throw DataError("unknown writer kind '" + kind + "'");
}

std::string WriterClass::key() const {
    std::string out = normalize_name(names[0]);
    for (size_t i = 1; i < names.size(); ++i) out += "|" + normalize_name(names[i]);
    return out;
}

std::string WriterClass::display() const {
    std::string out = names[0];
    for (size_t i = 1; i < names.size(); ++i) out += " & " + names[i];
    return out;
}

std::string WriterClass::joined_names() const {
    std::string out = names[0];
    for (size_t i = 1; i < names.size(); ++i) out += "|" + names[i];
    return out;
}

const LineRecord* DatasetManifest::find_line(const std::string& line_id) const {
    for (const auto& l : lines)
        if (l.line_id == line_id) return &l;
    return nullptr;
}

const PageRecord* DatasetManifest::find_page(const std::string& page_id) const {
    for (const auto& p : pages)
        if (p.page_id == page_id) return &p;
    return nullptr;
}

int DatasetManifest::class_index(const std::string& key) const {
    for (size_t i = 0; i < classes.size(); ++i)
        if (classes[i].key() == key) return (int)i;
    return -1;
}

void DatasetManifest::finalize() {
    std::sort(lines.begin(), lines.end(), [](const LineRecord& a, const LineRecord& b) {
        return std::tie(a.page_id, a.line_id) < std::tie(b.page_id, b.line_id);
    });
    {
        std::set<std::string> seen;
        for (const auto& l : lines)
            if (!seen.insert(l.line_id).second)
                throw DataError("duplicate line_id: " + l.line_id);
    }

    // Keep only referenced classes, in canonical key order, with dense ids.
    std::set<int> used;
    for (const auto& l : lines)
        if (l.writer >= 0) used.insert(l.writer);
    std::vector<int> order(used.begin(), used.end());
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return classes[a].key() < classes[b].key(); });
    std::vector<int> remap(classes.size(), -1);
    std::vector<WriterClass> dense;
    for (int old : order) {
        remap[old] = (int)dense.size();
        dense.push_back(classes[old]);
        dense.back().class_id = (int)dense.size() - 1;
    }
    for (auto& l : lines)
        if (l.writer >= 0) l.writer = remap[l.writer];

    // Rebuild pages from lines, preserving collection tags where known.
    std::map<std::string, std::string> collections;
    for (const auto& p : pages)
        if (!p.collection.empty()) collections[p.page_id] = p.collection;
    std::map<std::string, PageRecord> grouped;
    for (const auto& l : lines) {
        auto& p = grouped[l.page_id];
        p.page_id = l.page_id;
        p.line_ids.push_back(l.line_id);
        if (l.writer >= 0) {
            if (p.line_ids.size() == 1 || p.writer == l.writer) p.writer = l.writer;
            else p.writer = -2;  // mixed-writer page
        }
    }
    pages.clear();
    for (auto& [id, p] : grouped) {
        if (p.writer == -2) p.writer = -1;
        auto it = collections.find(id);
        if (it != collections.end()) p.collection = it->second;
        pages.push_back(std::move(p));
    }
    classes = std::move(dense);
}

namespace {

std::vector<std::string> manifest_rows(const DatasetManifest& m) {
    std::vector<std::string> rows;
    rows.reserve(m.lines.size() + 1);
    rows.push_back("line_id,page_id,image_path,writer_kind,writer_names,flags");
    for (const auto& l : m.lines) {
        const bool labeled = l.writer >= 0;
        rows.push_back(join_csv({l.line_id, l.page_id, l.image_path,
                                 labeled ? m.classes[l.writer].kind_string() : "",
                                 labeled ? m.classes[l.writer].joined_names() : "",
                                 flags_to_string(l.flags)}));
    }
    return rows;
}

}  // namespace

std::string DatasetManifest::checksum() const {
    uint64_t h = 1469598103934665603ull;
    for (const auto& row : manifest_rows(*this)) h = fnv1a(row, h);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
    return buf;
}

void save_manifest(const DatasetManifest& m, const std::string& csv_path) {
    std::ofstream f(csv_path);
    if (!f) throw DataError("cannot write manifest: " + csv_path);
    for (const auto& row : manifest_rows(m)) f << row << "\n";
}

DatasetManifest load_manifest(const std::string& csv_path) {
    const CsvFile csv = read_csv(csv_path);
    if (csv.rows.empty() || csv.rows[0] != split_csv_line(
            "line_id,page_id,image_path,writer_kind,writer_names,flags"))
        throw DataError("manifest header mismatch in " + csv_path);
    DatasetManifest m;
    m.provenance = csv_path;
    std::map<std::string, int> interned;
    for (size_t i = 1; i < csv.rows.size(); ++i) {
        const auto& r = csv.rows[i];
        if (r.size() != 6) throw DataError("manifest row with wrong arity in " + csv_path);
        LineRecord l;
        l.line_id = r[0];
        l.page_id = r[1];
        l.image_path = r[2];
        l.flags = parse_flags(r[5]);
        if (!r[3].empty()) {
            WriterClass wc = WriterClass::from_fields(r[3], r[4]);
            auto it = interned.find(wc.key());
            if (it == interned.end()) {
                m.classes.push_back(wc);
                it = interned.emplace(wc.key(), (int)m.classes.size() - 1).first;
            }
            l.writer = it->second;
        }
        m.lines.push_back(std::move(l));
    }
    m.finalize();
    return m;
}

DatasetManifest build_manifest(const std::string& dataset_root, const std::string& label_table) {
    struct LabelInfo {
        int writer = -1;
        uint32_t flags = kHandwritten;
        bool has_flags = false;
        std::string collection;
    };
    std::vector<WriterClass> classes;
    std::map<std::string, int> interned;
    auto intern = [&](const WriterClass& wc) {
        auto it = interned.find(wc.key());
        if (it != interned.end()) return it->second;
        classes.push_back(wc);
        return interned.emplace(wc.key(), (int)classes.size() - 1).first->second;
    };

    std::map<std::string, LabelInfo> page_defaults;
    std::map<std::string, LabelInfo> line_overrides;
    if (!label_table.empty()) {
        const CsvFile csv = read_csv(label_table);
        const std::vector<std::string> header = {"page_id",      "line_id", "writer_kind",
                                                 "writer_names", "flags",   "collection"};
        if (!csv.rows.empty() && csv.rows[0] != header)
            throw DataError("label table header mismatch in " + label_table);
        for (size_t i = 1; i < csv.rows.size(); ++i) {
            const auto& r = csv.rows[i];
            if (r.size() != 6) throw DataError("label table row with wrong arity");
            LabelInfo info;
            if (!r[2].empty()) info.writer = intern(WriterClass::from_fields(r[2], r[3]));
            if (!r[4].empty()) {
                info.flags = parse_flags(r[4]);
                info.has_flags = true;
            }
            info.collection = r[5];
            if (r[1].empty()) page_defaults[r[0]] = info;
            else line_overrides[r[1]] = info;
        }
    }

    DatasetManifest m;
    m.provenance = dataset_root;
    m.classes = classes;

    const std::set<std::string> exts = {".png", ".jpg", ".jpeg", ".pgm", ".ppm", ".bmp"};
    std::set<std::string> seen_pages, seen_lines;
    if (!dataset_root.empty() && fs::exists(dataset_root)) {
        for (const auto& entry : fs::recursive_directory_iterator(dataset_root)) {
            if (!entry.is_regular_file()) continue;
            std::string ext = entry.path().extension().string();
            std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
            if (!exts.count(ext)) continue;
            const fs::path rel = fs::relative(entry.path(), dataset_root);
            if (!rel.has_parent_path() || rel.parent_path().empty()) continue;
            LineRecord l;
            l.page_id = rel.parent_path().generic_string();
            l.line_id = (rel.parent_path() / rel.stem()).generic_string();
            l.image_path = entry.path().generic_string();
            seen_pages.insert(l.page_id);
            seen_lines.insert(l.line_id);

            const LabelInfo* info = nullptr;
            auto lo = line_overrides.find(l.line_id);
            if (lo != line_overrides.end()) info = &lo->second;
            else {
                auto pd = page_defaults.find(l.page_id);
                if (pd != page_defaults.end()) info = &pd->second;
            }
            if (info) {
                l.writer = info->writer;
                l.flags = info->has_flags ? info->flags : kHandwritten;
            } else {
                l.flags = kHandwritten;
            }
            m.lines.push_back(std::move(l));
        }
    }

    // Every label-table reference must resolve to an on-disk image.
    std::vector<std::string> offenders;
    for (const auto& [pid, _] : page_defaults)
        if (!seen_pages.count(pid)) offenders.push_back("page " + pid);
    for (const auto& [lid, _] : line_overrides)
        if (!seen_lines.count(lid)) offenders.push_back("line " + lid);
    if (!offenders.empty()) {
        std::string msg = "label table references missing images:";
        for (const auto& o : offenders) msg += " " + o + ";";
        throw DataError(msg);
    }

    m.finalize();
    return m;
}

DatasetManifest filter_manifest(const DatasetManifest& m, FilterBreakdown* breakdown) {
    DatasetManifest out;
    out.provenance = m.provenance;
    out.classes = m.classes;
    out.pages = m.pages;  // collection tags survive via finalize()
    FilterBreakdown b;
    for (const auto& l : m.lines) {
        if (l.writer < 0) {
            ++b.dropped_unlabeled;
            continue;
        }
        if (!training_eligible_flags(l.flags)) {
            ++b.dropped_content;
            continue;
        }
        ++b.kept;
        out.lines.push_back(l);
    }
    out.finalize();
    if (breakdown) *breakdown = b;
    return out;
}

StatsReport manifest_stats(const DatasetManifest& m) {
    StatsReport r;
    r.num_classes = m.num_classes();
    r.total_lines = (int)m.lines.size();
    r.total_pages = (int)m.pages.size();
    if (m.num_classes() == 0) return r;

    std::vector<int> line_counts(m.num_classes(), 0);
    std::vector<std::set<std::string>> page_sets(m.num_classes());
    for (const auto& l : m.lines)
        if (l.writer >= 0) {
            ++line_counts[l.writer];
            page_sets[l.writer].insert(l.page_id);
        }

    auto moments = [](const std::vector<double>& xs, double& mx, double& mn, double& mean,
                      double& sd) {
        mx = mn = xs[0];
        double sum = 0;
        for (double x : xs) {
            mx = std::max(mx, x);
            mn = std::min(mn, x);
            sum += x;
        }
        mean = sum / xs.size();
        double ss = 0;
        for (double x : xs) ss += (x - mean) * (x - mean);
        sd = std::sqrt(ss / xs.size());  // population std
    };

    std::vector<double> lc, pc;
    for (int c = 0; c < m.num_classes(); ++c) {
        r.per_writer.push_back(
            {m.classes[c].display(), line_counts[c], (int)page_sets[c].size()});
        lc.push_back(line_counts[c]);
        pc.push_back((double)page_sets[c].size());
    }
    std::sort(r.per_writer.begin(), r.per_writer.end(), [](const auto& a, const auto& b) {
        if (a.lines != b.lines) return a.lines > b.lines;
        return a.display < b.display;
    });
    moments(lc, r.max_lines, r.min_lines, r.mean_lines, r.std_lines);
    moments(pc, r.max_pages, r.min_pages, r.mean_pages, r.std_pages);
    return r;
}

std::string format_stats(const StatsReport& r) {
    std::ostringstream os;
    os << "classes\t" << r.num_classes << "\n";
    os << "pages\t" << r.total_pages << "\n";
    os << "lines\t" << r.total_lines << "\n";
    char buf[128];
    std::snprintf(buf, sizeof buf, "lines/writer\tmax %.0f min %.0f mean %.2f std %.3f\n",
                  r.max_lines, r.min_lines, r.mean_lines, r.std_lines);
    os << buf;
    std::snprintf(buf, sizeof buf, "pages/writer\tmax %.0f min %.0f mean %.2f std %.3f\n",
                  r.max_pages, r.min_pages, r.mean_pages, r.std_pages);
    os << buf;
    return os.str();
}

}  // namespace wid
