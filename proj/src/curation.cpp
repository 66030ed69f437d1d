#include "wid/curation.h"

#include <algorithm>
#include <cmath>

#include "wid/errors.h"

namespace wid {

std::string normalize_name(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    bool in_space = true;  // leading whitespace is dropped
    for (char c : s) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            if (!in_space) out += ' ';
            in_space = true;
        } else {
            out += (c >= 'A' && c <= 'Z') ? (char)(c - 'A' + 'a') : c;
            in_space = false;
        }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

namespace {

std::vector<uint32_t> decode_utf8(const std::string& s) {
    std::vector<uint32_t> cps;
    for (size_t i = 0; i < s.size();) {
        const unsigned char c = s[i];
        uint32_t cp = c;
        int extra = 0;
        if (c >= 0xF0) { cp = c & 0x07; extra = 3; }
        else if (c >= 0xE0) { cp = c & 0x0F; extra = 2; }
        else if (c >= 0xC0) { cp = c & 0x1F; extra = 1; }
        ++i;
        for (int k = 0; k < extra && i < s.size(); ++k, ++i)
            cp = (cp << 6) | (s[i] & 0x3F);
        cps.push_back(cp);
    }
    return cps;
}

}  // namespace

int edit_distance(const std::string& a, const std::string& b) {
    const auto ca = decode_utf8(a), cb = decode_utf8(b);
    const size_t n = ca.size(), m = cb.size();
    if (n == 0) return (int)m;
    if (m == 0) return (int)n;
    std::vector<int> prev(m + 1), cur(m + 1);
    for (size_t j = 0; j <= m; ++j) prev[j] = (int)j;
    for (size_t i = 1; i <= n; ++i) {
        cur[0] = (int)i;
        for (size_t j = 1; j <= m; ++j) {
            const int sub = prev[j - 1] + (ca[i - 1] == cb[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

int similarity(const std::string& a, const std::string& b) {
    const std::string na = normalize_name(a), nb = normalize_name(b);
    const size_t la = decode_utf8(na).size(), lb = decode_utf8(nb).size();
    const size_t longest = std::max(la, lb);
    if (longest == 0) return 100;
    const int d = edit_distance(na, nb);
    return (int)std::llround(100.0 * (1.0 - (double)d / (double)longest));
}

std::vector<DuplicateCandidate> find_duplicate_candidates(const std::vector<std::string>& names,
                                                          int threshold) {
    if (threshold < 85 || threshold > 95)
        throw std::invalid_argument("dedupe: threshold must lie in [85,95]");
    if (names.empty()) throw std::invalid_argument("dedupe: name list is empty");
    std::vector<DuplicateCandidate> out;
    for (size_t i = 0; i < names.size(); ++i)
        for (size_t j = i + 1; j < names.size(); ++j) {
            const int score = similarity(names[i], names[j]);
            if (score < threshold) continue;
            DuplicateCandidate c;
            c.score = score;
            c.threshold_used = threshold;
            const std::string ni = normalize_name(names[i]), nj = normalize_name(names[j]);
            if (std::tie(ni, names[i]) < std::tie(nj, names[j])) {
                c.name_a = names[i];
                c.name_b = names[j];
            } else {
                c.name_a = names[j];
                c.name_b = names[i];
            }
            out.push_back(std::move(c));
        }
    std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) {
        if (x.score != y.score) return x.score > y.score;
        return std::tie(x.name_a, x.name_b) < std::tie(y.name_a, y.name_b);
    });
    return out;
}

namespace {

// Follows the mapping chain from `name`; throws on non-trivial cycles.
std::string resolve_target(const std::map<std::string, std::string>& mapping,
                           const std::string& name) {
    std::string cur = name;
    std::vector<std::string> seen{cur};
    while (true) {
        auto it = mapping.find(cur);
        if (it == mapping.end()) return cur;
        const std::string next = normalize_name(it->second);
        if (next == cur) return cur;  // self-mapping is a no-op
        for (const auto& s : seen)
            if (s == next)
                throw std::invalid_argument("merge: mapping cycle through '" + name + "'");
        cur = next;
        seen.push_back(cur);
    }
}

}  // namespace

DatasetManifest merge_labels(const DatasetManifest& m,
                             const std::map<std::string, std::string>& mapping, MergeLog* log) {
    // Normalize mapping keys; keep the raw target spelling for display.
    std::map<std::string, std::string> norm_map;       // normalized -> normalized
    std::map<std::string, std::string> target_display; // normalized target -> raw
    for (const auto& [from, to] : mapping) {
        norm_map[normalize_name(from)] = normalize_name(to);
        target_display[normalize_name(to)] = to;
    }
    for (const auto& [from, to] : norm_map) resolve_target(norm_map, from);  // cycle check

    auto mapped_name = [&](const std::string& raw) -> std::string {
        const std::string target = resolve_target(norm_map, normalize_name(raw));
        if (target == normalize_name(raw)) return raw;
        auto it = target_display.find(target);
        return it != target_display.end() ? it->second : target;
    };

    DatasetManifest out;
    out.provenance = m.provenance;
    MergeLog local;
    local.classes_before = m.num_classes();

    std::vector<WriterClass> rewritten(m.classes.size());
    for (size_t i = 0; i < m.classes.size(); ++i) {
        const auto& wc = m.classes[i];
        WriterClass nw = wc.kind == WriterClass::Kind::single
                             ? WriterClass::make_single(mapped_name(wc.names[0]))
                             : WriterClass::make_pair(mapped_name(wc.names[0]),
                                                      mapped_name(wc.names[1]));
        if (nw.key() != wc.key()) local.applied.push_back({wc.display(), nw.display()});
        rewritten[i] = std::move(nw);
    }

    out.lines = m.lines;
    out.pages = m.pages;
    // Re-key lines through rewritten classes; finalize() re-densifies.
    std::vector<WriterClass> cls;
    auto intern = [&](const WriterClass& wc) -> int {
        for (size_t i = 0; i < cls.size(); ++i)
            if (cls[i].key() == wc.key()) return (int)i;
        cls.push_back(wc);
        return (int)cls.size() - 1;
    };
    for (auto& ln : out.lines)
        if (ln.writer >= 0) ln.writer = intern(rewritten[ln.writer]);
    for (auto& pg : out.pages)
        if (pg.writer >= 0) pg.writer = intern(rewritten[pg.writer]);
    out.classes = std::move(cls);
    out.finalize();

    local.classes_after = out.num_classes();
    if (log) *log = std::move(local);
    return out;
}

}  // namespace wid
