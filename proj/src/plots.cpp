#include <algorithm>
#include <map>
#include <set>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "wid/errors.h"
#include "wid/evaluation.h"

namespace wid {

namespace {

void draw_bars(const std::vector<std::pair<std::string, int>>& items, const std::string& title,
               const std::string& ylabel, const std::string& out_png) {
    const int margin_l = 70, margin_b = 110, margin_t = 50, margin_r = 20;
    const int bar_w = items.empty() ? 8 : std::clamp(900 / std::max<int>(1, (int)items.size()), 3, 40);
    const int plot_w = std::max(300, (int)items.size() * bar_w);
    const int plot_h = 360;
    const int w = margin_l + plot_w + margin_r, h = margin_t + plot_h + margin_b;

    cv::Mat canvas(h, w, CV_8UC3, cv::Scalar(255, 255, 255));
    cv::putText(canvas, title, {margin_l, 30}, cv::FONT_HERSHEY_SIMPLEX, 0.6,
                cv::Scalar(20, 20, 20), 1, cv::LINE_AA);
    cv::line(canvas, {margin_l, margin_t}, {margin_l, margin_t + plot_h}, cv::Scalar(0, 0, 0));
    cv::line(canvas, {margin_l, margin_t + plot_h}, {margin_l + plot_w, margin_t + plot_h},
             cv::Scalar(0, 0, 0));
    cv::putText(canvas, ylabel, {6, margin_t - 8}, cv::FONT_HERSHEY_SIMPLEX, 0.45,
                cv::Scalar(20, 20, 20), 1, cv::LINE_AA);

    int peak = 1;
    for (const auto& [_, v] : items) peak = std::max(peak, v);
    for (int tick = 0; tick <= 4; ++tick) {
        const int v = peak * tick / 4;
        const int y = margin_t + plot_h - (int)((int64_t)v * plot_h / peak);
        cv::line(canvas, {margin_l - 4, y}, {margin_l, y}, cv::Scalar(0, 0, 0));
        cv::putText(canvas, std::to_string(v), {6, y + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4,
                    cv::Scalar(60, 60, 60), 1, cv::LINE_AA);
    }

    for (size_t i = 0; i < items.size(); ++i) {
        const int bh = (int)((int64_t)items[i].second * plot_h / peak);
        const int x0 = margin_l + (int)i * bar_w + 1;
        const int y0 = margin_t + plot_h - bh;
        cv::rectangle(canvas, {x0, y0}, {x0 + bar_w - 2, margin_t + plot_h},
                      cv::Scalar(160, 90, 30), cv::FILLED);
        if (bar_w >= 9) {
            // vertical-ish label under the axis
            cv::putText(canvas, items[i].first.substr(0, 14),
                        {x0, margin_t + plot_h + 14 + (int)(i % 4) * 14},
                        cv::FONT_HERSHEY_SIMPLEX, 0.32, cv::Scalar(80, 80, 80), 1, cv::LINE_AA);
        }
    }
    if (items.empty())
        cv::putText(canvas, "(empty manifest)", {margin_l + 20, margin_t + plot_h / 2},
                    cv::FONT_HERSHEY_SIMPLEX, 0.5, cv::Scalar(120, 120, 120), 1, cv::LINE_AA);
    if (!cv::imwrite(out_png, canvas)) throw DataError("cannot write plot: " + out_png);
}

}  // namespace

void emit_distribution_plots(const DatasetManifest& m, char protocol,
                             const std::string& out_png) {
    std::vector<std::pair<std::string, int>> items;
    if (protocol == 'A') {
        std::vector<int> counts(m.num_classes(), 0);
        for (const auto& l : m.lines)
            if (l.writer >= 0) ++counts[l.writer];
        for (int c = 0; c < m.num_classes(); ++c)
            items.push_back({m.classes[c].display(), counts[c]});
    } else if (protocol == 'B') {
        // pages per writer over single-writer pages, B-eligible classes only
        std::vector<std::set<std::string>> pages(m.num_classes());
        for (const auto& p : m.pages) {
            std::set<int> writers;
            for (const auto& lid : p.line_ids) {
                const LineRecord* l = m.find_line(lid);
                if (l && l->writer >= 0) writers.insert(l->writer);
            }
            if (writers.size() == 1) pages[*writers.begin()].insert(p.page_id);
        }
        for (int c = 0; c < m.num_classes(); ++c)
            if ((int)pages[c].size() >= 3)
                items.push_back({m.classes[c].display(), (int)pages[c].size()});
    } else {
        throw std::invalid_argument("plot: protocol must be A or B");
    }
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    draw_bars(items,
              protocol == 'A' ? "Labeled line images per writer" : "Pages per writer",
              protocol == 'A' ? "lines" : "pages", out_png);
}

}  // namespace wid
