#include "wid/evaluation.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "wid/csv.h"
#include "wid/errors.h"

namespace wid {

std::vector<int> PredictionSet::ranked(const Entry& e) const {
    std::vector<int> order(num_classes);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (e.probs[a] != e.probs[b]) return e.probs[a] > e.probs[b];
        return a < b;  // fixed tie order
    });
    return order;
}

double top_k_accuracy(const PredictionSet& p, int k) {
    if (k < 1) throw std::invalid_argument("top_k: k must be >= 1");
    if (p.entries.empty()) throw DataError("top_k: empty prediction set has no defined metric");
    int hits = 0;
    for (const auto& e : p.entries) {
        const auto order = p.ranked(e);
        const int kk = std::min(k, p.num_classes);
        for (int i = 0; i < kk; ++i)
            if (order[i] == e.true_class) {
                ++hits;
                break;
            }
    }
    return (double)hits / p.entries.size();
}

MacroScores macro_f1(const PredictionSet& p) {
    if (p.entries.empty()) throw DataError("macro_f1: empty prediction set");
    std::vector<int> tp(p.num_classes, 0), fp(p.num_classes, 0), fn(p.num_classes, 0);
    int correct = 0;
    for (const auto& e : p.entries) {
        const int pred = p.top1(e);
        if (pred == e.true_class) {
            ++tp[e.true_class];
            ++correct;
        } else {
            ++fp[pred];
            ++fn[e.true_class];
        }
    }
    MacroScores out;
    out.accuracy = (double)correct / p.entries.size();
    out.per_class.resize(p.num_classes);
    for (int c = 0; c < p.num_classes; ++c) {
        auto& m = out.per_class[c];
        m.support = tp[c] + fn[c];
        m.precision = tp[c] + fp[c] > 0 ? (double)tp[c] / (tp[c] + fp[c]) : 0.0;
        m.recall = tp[c] + fn[c] > 0 ? (double)tp[c] / (tp[c] + fn[c]) : 0.0;
        m.f1 = m.precision + m.recall > 0
                   ? 2 * m.precision * m.recall / (m.precision + m.recall)
                   : 0.0;
        out.macro_precision += m.precision;
        out.macro_recall += m.recall;
        out.macro_f1 += m.f1;
    }
    out.macro_precision /= p.num_classes;
    out.macro_recall /= p.num_classes;
    out.macro_f1 /= p.num_classes;
    return out;
}

RunReport make_run_report(const PredictionSet& p, double test_loss,
                          const std::vector<std::string>& class_names) {
    RunReport r;
    r.top1 = top_k_accuracy(p, 1);
    r.top5 = top_k_accuracy(p, 5);
    const auto m = macro_f1(p);
    r.macro_f1 = m.macro_f1;
    r.macro_precision = m.macro_precision;
    r.macro_recall = m.macro_recall;
    r.test_loss = test_loss;
    r.per_class = m.per_class;
    r.class_names = class_names;
    r.test_size = (int)p.entries.size();
    return r;
}

void save_run_report(const RunReport& r, const std::string& csv_path) {
    std::ofstream f(csv_path);
    if (!f) throw DataError("cannot write report: " + csv_path);
    f << "# test_size=" << r.test_size << "\n";
    f << "metric,value\n";
    f.precision(12);
    f << "top1," << r.top1 << "\ntop5," << r.top5 << "\nmacro_f1," << r.macro_f1
      << "\nmacro_precision," << r.macro_precision << "\nmacro_recall," << r.macro_recall
      << "\ntest_loss," << r.test_loss << "\n";
    f << "class,precision,recall,f1,support\n";
    for (size_t c = 0; c < r.per_class.size(); ++c) {
        const auto& m = r.per_class[c];
        f << join_csv({r.class_names[c], std::to_string(m.precision), std::to_string(m.recall),
                       std::to_string(m.f1), std::to_string(m.support)})
          << "\n";
    }
}

RunReport load_run_report(const std::string& csv_path) {
    const CsvFile csv = read_csv(csv_path);
    RunReport r;
    for (const auto& c : csv.comments) {
        const auto pos = c.find("test_size=");
        if (pos != std::string::npos) r.test_size = std::stoi(c.substr(pos + 10));
    }
    size_t i = 0;
    bool in_classes = false;
    for (; i < csv.rows.size(); ++i) {
        const auto& row = csv.rows[i];
        if (row[0] == "metric") continue;
        if (row[0] == "class") {
            in_classes = true;
            continue;
        }
        if (!in_classes) {
            const double v = std::stod(row[1]);
            if (row[0] == "top1") r.top1 = v;
            else if (row[0] == "top5") r.top5 = v;
            else if (row[0] == "macro_f1") r.macro_f1 = v;
            else if (row[0] == "macro_precision") r.macro_precision = v;
            else if (row[0] == "macro_recall") r.macro_recall = v;
            else if (row[0] == "test_loss") r.test_loss = v;
        } else {
            if (row.size() != 5) throw DataError("bad class row in " + csv_path);
            r.class_names.push_back(row[0]);
            ClassMetrics m;
            m.precision = std::stod(row[1]);
            m.recall = std::stod(row[2]);
            m.f1 = std::stod(row[3]);
            m.support = std::stod(row[4]);
            r.per_class.push_back(m);
        }
    }
    return r;
}

MeanStd mean_std(const std::vector<double>& xs) {
    MeanStd out;
    if (xs.empty()) return out;
    for (double x : xs) out.mean += x;
    out.mean /= xs.size();
    double ss = 0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(ss / xs.size());  // population variance, denominator N
    return out;
}

AggregateReport aggregate_runs(const std::vector<RunReport>& reports) {
    if (reports.empty()) throw std::invalid_argument("aggregate: no reports");
    for (const auto& r : reports)
        if (r.class_names != reports[0].class_names)
            throw std::invalid_argument("aggregate: reports disagree on the class list");

    AggregateReport agg;
    agg.num_runs = (int)reports.size();
    agg.class_names = reports[0].class_names;

    auto collect = [&](auto field) {
        std::vector<double> xs;
        for (const auto& r : reports) xs.push_back(field(r));
        return mean_std(xs);
    };
    agg.top1 = collect([](const RunReport& r) { return r.top1; });
    agg.top5 = collect([](const RunReport& r) { return r.top5; });
    agg.macro_f1 = collect([](const RunReport& r) { return r.macro_f1; });
    agg.macro_precision = collect([](const RunReport& r) { return r.macro_precision; });
    agg.macro_recall = collect([](const RunReport& r) { return r.macro_recall; });
    agg.test_loss = collect([](const RunReport& r) { return r.test_loss; });
    agg.accuracy = agg.top1;

    const size_t k = agg.class_names.size();
    agg.per_class.resize(k);
    for (size_t c = 0; c < k; ++c) {
        std::vector<double> ps, rs, fs, ss;
        for (const auto& r : reports) {
            ps.push_back(r.per_class[c].precision);
            rs.push_back(r.per_class[c].recall);
            fs.push_back(r.per_class[c].f1);
            ss.push_back(r.per_class[c].support);
        }
        agg.per_class[c] = {mean_std(ps), mean_std(rs), mean_std(fs), mean_std(ss)};
        agg.total_support += agg.per_class[c].support.mean;
    }
    return agg;
}

namespace {
std::string ms(const MeanStd& m) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.4f (%.4f)", m.mean, m.std);
    return buf;
}
}  // namespace

std::string classification_report(const AggregateReport& agg) {
    size_t name_w = 12;
    for (const auto& n : agg.class_names) name_w = std::max(name_w, n.size());
    std::ostringstream os;
    auto row = [&](const std::string& name, const std::string& a, const std::string& b,
                   const std::string& c, const std::string& d) {
        os << name << std::string(name_w + 2 - name.size(), ' ');
        for (const auto& cell : {a, b, c, d}) os << cell << std::string(18 - cell.size(), ' ');
        os << "\n";
    };
    row("", "precision", "recall", "f1-score", "support");
    os << "\n";
    for (size_t c = 0; c < agg.class_names.size(); ++c) {
        const auto& pc = agg.per_class[c];
        row(agg.class_names[c], ms(pc.precision), ms(pc.recall), ms(pc.f1), ms(pc.support));
    }
    os << "\n";
    // accuracy is one number per report; the text renderer mirrors it
    row("accuracy", ms(agg.accuracy), ms(agg.accuracy), ms(agg.accuracy), ms(agg.accuracy));

    MeanStd mp, mr, mf;
    for (const auto& pc : agg.per_class) {
        mp.mean += pc.precision.mean;
        mr.mean += pc.recall.mean;
        mf.mean += pc.f1.mean;
        mp.std += pc.precision.std;
        mr.std += pc.recall.std;
        mf.std += pc.f1.std;
    }
    const double k = (double)agg.per_class.size();
    mp.mean /= k; mr.mean /= k; mf.mean /= k;
    mp.std /= k; mr.std /= k; mf.std /= k;
    char total[32];
    std::snprintf(total, sizeof total, "%.4f (0.0000)", agg.total_support);
    row("macro avg", ms(mp), ms(mr), ms(mf), total);

    MeanStd wp, wr, wf;
    for (const auto& pc : agg.per_class) {
        const double w = pc.support.mean / std::max(1.0, agg.total_support);
        wp.mean += w * pc.precision.mean;
        wr.mean += w * pc.recall.mean;
        wf.mean += w * pc.f1.mean;
        wp.std += w * pc.precision.std;
        wr.std += w * pc.recall.std;
        wf.std += w * pc.f1.std;
    }
    row("weighted avg", ms(wp), ms(wr), ms(wf), total);
    return os.str();
}

void save_aggregate_csv(const AggregateReport& agg, const std::string& csv_path) {
    std::ofstream f(csv_path);
    if (!f) throw DataError("cannot write aggregate: " + csv_path);
    f << "# runs=" << agg.num_runs << "\n";
    f << "metric,mean,std\n";
    f.precision(12);
    auto line = [&](const char* name, const MeanStd& m) {
        f << name << "," << m.mean << "," << m.std << "\n";
    };
    line("top1", agg.top1);
    line("top5", agg.top5);
    line("macro_f1", agg.macro_f1);
    line("macro_precision", agg.macro_precision);
    line("macro_recall", agg.macro_recall);
    line("test_loss", agg.test_loss);
    f << "class,precision_mean,precision_std,recall_mean,recall_std,f1_mean,f1_std,"
         "support_mean,support_std\n";
    for (size_t c = 0; c < agg.class_names.size(); ++c) {
        const auto& pc = agg.per_class[c];
        f << csv_escape(agg.class_names[c]) << "," << pc.precision.mean << ","
          << pc.precision.std << "," << pc.recall.mean << "," << pc.recall.std << ","
          << pc.f1.mean << "," << pc.f1.std << "," << pc.support.mean << "," << pc.support.std
          << "\n";
    }
}

}  // namespace wid
