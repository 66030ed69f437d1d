#ifndef WID_EVALUATION_H
#define WID_EVALUATION_H

#include <string>
#include <vector>

#include "wid/data_model.h"

namespace wid {

// One probability row per test line; ranking ties break by ascending class id.
struct PredictionSet {
    struct Entry {
        std::string line_id;
        int true_class = -1;
        std::vector<double> probs;
    };
    int num_classes = 0;
    std::vector<Entry> entries;

    std::vector<int> ranked(const Entry& e) const;  // class ids, best first
    int top1(const Entry& e) const { return ranked(e)[0]; }
};

double top_k_accuracy(const PredictionSet& p, int k);

struct ClassMetrics {
    double precision = 0, recall = 0, f1 = 0;
    double support = 0;
};

struct MacroScores {
    double macro_f1 = 0, macro_precision = 0, macro_recall = 0, accuracy = 0;
    std::vector<ClassMetrics> per_class;
};

// Per-class precision/recall/F1 from top-1 predictions; a class with zero
// predicted and zero true positives scores 0 by convention.
MacroScores macro_f1(const PredictionSet& p);

struct RunReport {
    double top1 = 0, top5 = 0;
    double macro_f1 = 0, macro_precision = 0, macro_recall = 0;
    double test_loss = 0;
    std::vector<std::string> class_names;
    std::vector<ClassMetrics> per_class;
    int test_size = 0;
};

RunReport make_run_report(const PredictionSet& p, double test_loss,
                          const std::vector<std::string>& class_names);
void save_run_report(const RunReport& r, const std::string& csv_path);
RunReport load_run_report(const std::string& csv_path);

struct MeanStd {
    double mean = 0, std = 0;  // population std (denominator N)
};

struct AggregateReport {
    int num_runs = 0;
    MeanStd top1, top5, macro_f1, macro_precision, macro_recall, test_loss, accuracy;
    std::vector<std::string> class_names;
    struct PerClass {
        MeanStd precision, recall, f1, support;
    };
    std::vector<PerClass> per_class;
    double total_support = 0;
};

MeanStd mean_std(const std::vector<double>& xs);
AggregateReport aggregate_runs(const std::vector<RunReport>& reports);

// Aligned "Mean (Std)" classification table with accuracy / macro avg /
// weighted avg footer rows.
std::string classification_report(const AggregateReport& agg);
void save_aggregate_csv(const AggregateReport& agg, const std::string& csv_path);

// Bar charts of the per-writer distribution: line counts (protocol A scope)
// or page counts over B-eligible writers (protocol B scope), descending.
void emit_distribution_plots(const DatasetManifest& m, char protocol,
                             const std::string& out_png);

}  // namespace wid

#endif
