// widc — writer-identification toolkit CLI.
//
// Exit codes: 0 ok, 2 config error, 3 data error, 4 training abort,
// 5 verification failure.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "wid/csv.h"
#include "wid/curation.h"
#include "wid/run_config.h"
#include "wid/synth.h"

using namespace wid;
namespace fs = std::filesystem;

namespace {

DatasetManifest load_or_fail(const std::string& path) {
    if (path.empty()) throw ConfigError("missing --manifest");
    return load_manifest(path);
}

SplitAssignment make_split(const DatasetManifest& m, char protocol, int min_pages,
                           uint64_t seed) {
    return protocol == 'A' ? split_line_level(m, seed)
                           : split_page_disjoint(m, min_pages, seed);
}

std::string run_dir_name(const RunConfig& cfg, uint64_t seed) {
    std::string name;
    name += cfg.protocol;
    name += "_" + cfg.model.backbone;
    name += "_" + cfg.train.policy.to_string();
    name += cfg.model.attention ? "_attn" : "_noattn";
    name += "_seed" + std::to_string(seed);
    return (fs::path(cfg.output_dir) / name).string();
}

int main_inner(int argc, char** argv) {
    CLI::App app{"writer identification toolkit"};
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "scan a corpus tree into a manifest csv");
    std::string root = std::getenv("WID_DATA_ROOT") ? std::getenv("WID_DATA_ROOT") : "";
    std::string labels, out, manifest_path, split_path, mapping_path;
    ingest->add_option("--root", root, "corpus root (default: $WID_DATA_ROOT)");
    ingest->add_option("--labels", labels, "label table csv");
    ingest->add_option("--out", out, "output manifest csv")->required();

    // filter
    auto* filter = app.add_subcommand("filter", "keep labeled handwritten-only lines");
    filter->add_option("--manifest", manifest_path)->required();
    filter->add_option("--out", out)->required();

    // dedupe
    auto* dedupe = app.add_subcommand("dedupe", "flag likely duplicate writer names");
    int threshold = 90;
    dedupe->add_option("--threshold", threshold, "similarity threshold in [85,95]");
    dedupe->add_option("--manifest", manifest_path)->required();
    dedupe->add_option("--out", out, "candidate csv (default: stdout)");

    // merge
    auto* merge = app.add_subcommand("merge", "apply a name-merge mapping csv");
    merge->add_option("--manifest", manifest_path)->required();
    merge->add_option("--mapping", mapping_path, "csv: from_name,to_name")->required();
    merge->add_option("--out", out)->required();

    // split
    auto* split_cmd = app.add_subcommand("split", "build a protocol A/B split");
    std::string protocol = "A";
    uint64_t seed = 1;
    int min_pages = 3;
    split_cmd->add_option("--manifest", manifest_path)->required();
    split_cmd->add_option("--protocol", protocol)->check(CLI::IsMember({"A", "B"}));
    split_cmd->add_option("--seed", seed);
    split_cmd->add_option("--min-pages", min_pages);
    split_cmd->add_option("--out", out)->required();

    // verify-split
    auto* verify = app.add_subcommand("verify-split", "check a split for leakage");
    verify->add_option("--manifest", manifest_path)->required();
    verify->add_option("--split", split_path)->required();

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
    SynthSpec spec;
    synth->add_option("--out", out, "output image directory")->required();
    synth->add_option("--writers", spec.num_writers);
    synth->add_option("--pages", spec.pages_per_writer);
    synth->add_option("--lines", spec.lines_per_page);
    synth->add_option("--nuisance", spec.nuisance);
    synth->add_option("--seed", spec.seed);
    std::string synth_manifest;
    synth->add_option("--manifest-out", synth_manifest, "manifest csv path");

    // train
    auto* train = app.add_subcommand("train", "train one or more seeds");
    std::string config_path, backbone, attention, policy;
    std::vector<std::string> overrides;
    long long seed_flag = -1;
    train->add_option("--config", config_path, "run config file");
    train->add_option("--manifest", manifest_path);
    train->add_option("--protocol", protocol)->check(CLI::IsMember({"A", "B"}));
    train->add_option("--backbone", backbone);
    train->add_option("--attention", attention)->check(CLI::IsMember({"on", "off"}));
    train->add_option("--policy", policy,
                      "frozen|last1|last5|last10|last25|full|scratch");
    train->add_option("--seed", seed_flag, "single seed (default: config seeds)");
    train->add_option("--out", out, "output directory");
    train->add_option("--set", overrides, "extra key=value overrides")->take_all();

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "re-evaluate a run checkpoint on test");
    std::string run_dir;
    evaluate->add_option("--run-dir", run_dir)->required();
    evaluate->add_option("--manifest", manifest_path)->required();

    // report
    auto* report = app.add_subcommand("report", "aggregate seed runs");
    std::vector<std::string> run_dirs;
    report->add_option("--runs", run_dirs, "run directories")->required()->take_all();
    report->add_option("--out", out, "output prefix (csv + txt)");

    // plot
    auto* plot = app.add_subcommand("plot", "per-writer distribution chart");
    plot->add_option("--manifest", manifest_path)->required();
    plot->add_option("--protocol", protocol)->check(CLI::IsMember({"A", "B"}));
    plot->add_option("--out", out)->required();

    CLI11_PARSE(app, argc, argv);

    if (*ingest) {
        if (root.empty()) throw ConfigError("ingest: no --root and no WID_DATA_ROOT");
        auto m = build_manifest(root, labels);
        save_manifest(m, out);
        std::cout << "ingest: " << m.pages.size() << " pages, " << m.lines.size()
                  << " lines, " << m.num_classes() << " classes -> " << out << "\n";
    } else if (*filter) {
        FilterBreakdown b;
        auto f = filter_manifest(load_or_fail(manifest_path), &b);
        save_manifest(f, out);
        std::cout << "filter: kept " << b.kept << ", dropped " << b.dropped_unlabeled
                  << " unlabeled + " << b.dropped_content << " non-handwritten\n"
                  << format_stats(manifest_stats(f));
    } else if (*dedupe) {
        auto m = load_or_fail(manifest_path);
        std::set<std::string> distinct;
        for (const auto& c : m.classes)
            for (const auto& n : c.names) distinct.insert(n);
        auto cands = find_duplicate_candidates(
            std::vector<std::string>(distinct.begin(), distinct.end()), threshold);
        std::ostream* os = &std::cout;
        std::ofstream fout;
        if (!out.empty()) {
            fout.open(out);
            os = &fout;
        }
        *os << "name_a,name_b,score,threshold\n";
        for (const auto& c : cands)
            *os << join_csv({c.name_a, c.name_b, std::to_string(c.score),
                             std::to_string(c.threshold_used)})
                << "\n";
        std::cout << "dedupe: " << cands.size() << " candidate pair(s) at threshold "
                  << threshold << "\n";
    } else if (*merge) {
        auto m = load_or_fail(manifest_path);
        const CsvFile csv = read_csv(mapping_path);
        std::map<std::string, std::string> mapping;
        for (size_t i = 0; i < csv.rows.size(); ++i) {
            const auto& r = csv.rows[i];
            if (i == 0 && r.size() == 2 && r[0] == "from_name") continue;
            if (r.size() != 2) throw DataError("merge: mapping rows need 2 columns");
            mapping[r[0]] = r[1];
        }
        MergeLog log;
        auto merged = merge_labels(m, mapping, &log);
        save_manifest(merged, out);
        std::cout << "merge: " << log.classes_before << " -> " << log.classes_after
                  << " classes\n";
        for (const auto& [from, to] : log.applied)
            std::cout << "  " << from << " => " << to << "\n";
    } else if (*split_cmd) {
        auto m = load_or_fail(manifest_path);
        auto s = make_split(m, protocol[0], min_pages, seed);
        save_split(s, out);
        std::cout << "split: protocol " << protocol << ", " << s.classes.size()
                  << " classes, " << s.assignment.size() << " lines";
        if (!s.excluded_classes.size()) std::cout << "\n";
        else std::cout << ", excluded " << s.excluded_classes.size() << " class(es)\n";
    } else if (*verify) {
        auto m = load_or_fail(manifest_path);
        auto s = load_split(split_path, m);
        auto rep = verify_split(s, m);
        std::cout << rep.summary();
        if (!rep.passed) throw VerifyFailure("split verification failed");
    } else if (*synth) {
        auto m = generate_corpus(spec, out);
        std::cout << "synth: " << m.pages.size() << " pages, " << m.lines.size()
                  << " lines, " << m.num_classes() << " classes under " << out << "\n";
        if (!synth_manifest.empty()) save_manifest(m, synth_manifest);
    } else if (*train) {
        RunConfig cfg = config_path.empty() ? RunConfig{} : parse_run_config(config_path);
        if (!manifest_path.empty()) cfg.manifest_path = manifest_path;
        if (!out.empty()) cfg.output_dir = out;
        if (!backbone.empty()) cfg.model.backbone = backbone;
        if (!attention.empty()) cfg.model.attention = attention == "on";
        if (!policy.empty()) cfg.train.policy = FinetunePolicy::parse(policy);
        if (*train->get_option("--protocol")) cfg.protocol = protocol[0];
        apply_run_config_overrides(cfg, overrides);
        if (seed_flag >= 0) cfg.train.seeds = {(uint64_t)seed_flag};
        cfg.validate();

        auto m = load_or_fail(cfg.manifest_path);
        for (uint64_t s : cfg.train.seeds) {
            auto split = make_split(m, cfg.protocol, cfg.min_pages, s);
            auto rep = verify_split(split, m);
            if (!rep.passed) {
                std::cout << rep.summary();
                throw VerifyFailure("refusing to train on an invalid split");
            }
            auto art = train_run(m, split, cfg.model, cfg.train, s, run_dir_name(cfg, s));
            std::cout << "train: seed " << s << " best val f1 " << art.best_val_f1
                      << " (epoch " << art.best_epoch << "), test top1 "
                      << art.test_report.top1 << ", macro f1 " << art.test_report.macro_f1
                      << " -> " << art.run_dir << "\n";
        }
    } else if (*evaluate) {
        auto m = load_or_fail(manifest_path);
        RunConfig cfg = parse_run_config(run_dir + "/config.snapshot");
        auto split = load_split(run_dir + "/split.csv", m);
        cfg.model.num_classes = (int)split.classes.size();
        cfg.model.init_seed = cfg.train.seeds.at(0);
        WriterNet<float> model(cfg.model);
        load_checkpoint(run_dir + "/best.ckpt", model.params());
        double loss = 0;
        auto preds = predict_split(model, m, split, Role::test, cfg.train.batch, &loss);
        std::vector<std::string> names;
        for (const auto& c : split.classes) names.push_back(c.display());
        auto rep = make_run_report(preds, loss, names);
        std::cout << "evaluate: top1 " << rep.top1 << " top5 " << rep.top5 << " macro_f1 "
                  << rep.macro_f1 << " loss " << rep.test_loss << "\n";
        save_run_report(rep, run_dir + "/test_report.csv");
    } else if (*report) {
        std::vector<RunReport> reports;
        for (const auto& d : run_dirs) reports.push_back(load_run_report(d + "/test_report.csv"));
        auto agg = aggregate_runs(reports);
        const std::string text = classification_report(agg);
        if (!out.empty()) {
            save_aggregate_csv(agg, out + ".csv");
            std::ofstream(out + ".txt") << text;
        }
        std::cout << text;
        std::cout << "report: " << agg.num_runs << " run(s), top1 " << agg.top1.mean << " ("
                  << agg.top1.std << "), macro f1 " << agg.macro_f1.mean << " ("
                  << agg.macro_f1.std << ")\n";
    } else if (*plot) {
        auto m = load_or_fail(manifest_path);
        emit_distribution_plots(m, protocol[0], out);
        std::cout << "plot: wrote " << out << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return main_inner(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "error: config: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: argument: " << e.what() << "\n";
        return 2;
    } catch (const TrainAbort& e) {
        std::cerr << "error: training: " << e.what() << "\n";
        return 4;
    } catch (const VerifyFailure& e) {
        std::cerr << "error: verification: " << e.what() << "\n";
        return 5;
    } catch (const DataError& e) {
        std::cerr << "error: data: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
