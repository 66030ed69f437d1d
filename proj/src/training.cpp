#include "wid/training.h"

#include <cmath>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace wid {

FinetunePolicy FinetunePolicy::parse(const std::string& s) {
    FinetunePolicy p;
    if (s == "frozen") p.depth = Depth::frozen;
    else if (s == "full") p.depth = Depth::full;
    else if (s == "scratch") {
        p.depth = Depth::full;
        p.scratch = true;
    } else if (s.rfind("last", 0) == 0) {
        p.depth = Depth::last_k;
        try {
            p.k = std::stoi(s.substr(4));
        } catch (...) {
            throw ConfigError("policy: cannot parse '" + s + "'");
        }
    } else {
        throw ConfigError("policy: unknown value '" + s + "'");
    }
    p.validate();
    return p;
}

std::string FinetunePolicy::to_string() const {
    if (scratch) return "scratch";
    switch (depth) {
        case Depth::frozen: return "frozen";
        case Depth::full: return "full";
        case Depth::last_k: return "last" + std::to_string(k);
    }
    return "?";
}

void scheduler_step(RunState& st, double val_f1, const SchedulerConfig& cfg) {
    if (val_f1 > st.best_val_f1) {
        st.best_val_f1 = val_f1;
        st.best_epoch = st.epoch;
        st.epochs_since_best = 0;
        st.plateau_count = 0;
    } else {
        ++st.epochs_since_best;
        ++st.plateau_count;
        if (st.plateau_count > cfg.patience) {
            st.current_lr = std::max(st.current_lr * cfg.factor, cfg.min_lr);
            st.plateau_count = 0;
        }
    }
}

void apply_finetune_policy(WriterNet<float>& model, const FinetunePolicy& policy,
                           const std::string& backbone_weights) {
    policy.validate();
    if (!backbone_weights.empty()) {
        // strict on the backbone contract, opportunistic for any other
        // shape-compatible tensors (reduce kernel, cluster centers) so a
        // warm start can cross the attention on/off variants
        load_checkpoint(backbone_weights, model.params(), "backbone.");
        load_checkpoint(backbone_weights, model.params(), "", /*match_any=*/true);
    }
    const int layers = model.backbone_layer_count();
    switch (policy.depth) {
        case FinetunePolicy::Depth::frozen:
            model.set_backbone_trainable(layers);  // first trainable index past the end
            break;
        case FinetunePolicy::Depth::full:
            model.set_backbone_trainable(0);
            break;
        case FinetunePolicy::Depth::last_k:
            if (policy.k > layers)
                throw std::invalid_argument("policy: last" + std::to_string(policy.k) +
                                            " exceeds the backbone's " +
                                            std::to_string(layers) + " layers");
            model.set_backbone_trainable(layers - policy.k);
            break;
    }
}

namespace {

uint64_t fnv1a_str(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

double decay_term(const WriterNet<float>& model, double lambda) {
    double sum = 0;
    const auto& ps = model.params();
    for (int i = 0; i < ps.size(); ++i) {
        const auto& e = ps.at(i);
        if (!e.regularized) continue;
        for (int64_t j = 0; j < e.value.numel(); ++j)
            sum += (double)e.value[j] * (double)e.value[j];
    }
    return lambda * sum;
}

std::string config_snapshot(const ModelConfig& mc, const TrainConfig& tc, uint64_t seed) {
    std::ostringstream os;
    os << "model.backbone = " << mc.backbone << "\n";
    os << "model.attention = " << (mc.attention ? "on" : "off") << "\n";
    os << "model.num_classes = " << mc.num_classes << "\n";
    os << "model.dropout = " << mc.dropout_p << "\n";
    os << "model.weight_decay = " << mc.weight_decay << "\n";
    os << "model.head_width = " << mc.head_width << "\n";
    os << "model.vlad_clusters = " << mc.vlad.clusters << "\n";
    os << "train.initial_lr = " << tc.lr0 << "\n";
    os << "train.batch_size = " << tc.batch << "\n";
    os << "train.max_epochs = " << tc.max_epochs << "\n";
    os << "train.scheduler_factor = " << tc.scheduler.factor << "\n";
    os << "train.scheduler_patience = " << tc.scheduler.patience << "\n";
    os << "train.scheduler_min_lr = " << tc.scheduler.min_lr << "\n";
    os << "train.early_stop_patience = " << tc.early_stop.patience << "\n";
    os << "train.policy = " << tc.policy.to_string() << "\n";
    os << "aug.rotation_deg = " << tc.aug.rotation_deg << "\n";
    os << "aug.zoom_frac = " << tc.aug.zoom_frac << "\n";
    os << "aug.shear_frac = " << tc.aug.shear_frac << "\n";
    os << "aug.width_shift_frac = " << tc.aug.width_shift_frac << "\n";
    os << "aug.height_shift_frac = " << tc.aug.height_shift_frac << "\n";
    os << "seed = " << seed << "\n";
    return os.str();
}

}  // namespace

PredictionSet predict_split(WriterNet<float>& model, const DatasetManifest& manifest,
                            const SplitAssignment& split, Role role, int batch,
                            double* mean_loss) {
    BatchLoader loader(manifest, split, role, batch, /*seed=*/0, AugmentParams::none(), false);
    loader.start_epoch(0);
    PredictionSet preds;
    preds.num_classes = (int)split.classes.size();
    double loss_sum = 0;
    int64_t n = 0;
    BatchLoader::Batch b;
    while (loader.next(b)) {
        auto fw = model.forward(b.images, /*train=*/false);
        const int bs = b.images.dim(0), k = preds.num_classes;
        for (int i = 0; i < bs; ++i) {
            PredictionSet::Entry e;
            e.line_id = b.line_ids[i];
            e.probs.resize(k);
            for (int c = 0; c < k; ++c) {
                e.probs[c] = fw->probs->value[(int64_t)i * k + c];
                if (b.labels[(int64_t)i * k + c] > 0.5f) e.true_class = c;
            }
            loss_sum += -std::log(e.probs[e.true_class] + kNormEps);
            ++n;
            preds.entries.push_back(std::move(e));
        }
    }
    if (mean_loss) *mean_loss = n ? loss_sum / n : 0.0;
    return preds;
}

RunArtifacts train_run(const DatasetManifest& manifest, const SplitAssignment& split,
                       ModelConfig model_cfg, const TrainConfig& train_cfg, uint64_t seed,
                       const std::string& run_dir) {
    train_cfg.validate();
    model_cfg.num_classes = (int)split.classes.size();
    model_cfg.init_seed = seed;
    model_cfg.validate();

    fs::create_directories(run_dir);
    RunArtifacts art;
    art.run_dir = run_dir;
    art.split_checksum = split.manifest_checksum;

    const std::string snapshot = config_snapshot(model_cfg, train_cfg, seed);
    {
        std::ofstream f(run_dir + "/config.snapshot");
        f << snapshot;
    }
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx",
                  (unsigned long long)fnv1a_str(snapshot + split.manifest_checksum));
    art.config_hash = hash;
    save_split(split, run_dir + "/split.csv");

    WriterNet<float> model(model_cfg);
    apply_finetune_policy(model, train_cfg.policy, train_cfg.backbone_weights);

    BatchLoader train_loader(manifest, split, Role::train, train_cfg.batch, seed, train_cfg.aug);
    Adam<float> opt(train_cfg.lr0, model_cfg.weight_decay);

    RunState st;
    st.current_lr = train_cfg.lr0;
    art.checkpoint_path = run_dir + "/best.ckpt";

    std::ofstream log_csv(run_dir + "/log.csv");
    log_csv << "epoch,lr,train_loss,val_f1\n";
    log_csv.precision(10);

    uint64_t step_counter = 0;
    for (int epoch = 0; epoch < train_cfg.max_epochs; ++epoch) {
        st.epoch = epoch;
        train_loader.start_epoch(epoch);
        opt.set_lr(st.current_lr);

        double loss_sum = 0;
        int batches = 0;
        BatchLoader::Batch b;
        while (train_loader.next(b)) {
            auto fw = model.forward(b.images, /*train=*/true,
                                    seed * 2654435761ull + step_counter);
            auto loss = ce_loss(fw->tape, fw->probs, b.labels);
            const double ce = loss->value[0];
            if (!std::isfinite(ce)) {
                std::ofstream diag(run_dir + "/abort_diagnostic.txt");
                diag << "non-finite training loss at epoch " << epoch << " step "
                     << step_counter << "\nlr=" << st.current_lr << "\n";
                save_checkpoint(run_dir + "/abort.ckpt", model.params());
                throw TrainAbort("non-finite loss at epoch " + std::to_string(epoch));
            }
            fw->tape.backward(loss);
            opt.step(model.params(), fw->leaves);
            loss_sum += ce;
            ++batches;
            ++step_counter;
        }
        const double train_loss =
            (batches ? loss_sum / batches : 0.0) + decay_term(model, model_cfg.weight_decay);

        auto val_preds = predict_split(model, manifest, split, Role::val, train_cfg.batch);
        const double val_f1 = macro_f1(val_preds).macro_f1;

        log_csv << epoch << "," << st.current_lr << "," << train_loss << "," << val_f1 << "\n";
        log_csv.flush();
        art.log.push_back({epoch, st.current_lr, train_loss, val_f1});
        art.epochs_ran = epoch + 1;

        const double before_best = st.best_val_f1;
        scheduler_step(st, val_f1, train_cfg.scheduler);
        if (val_f1 > before_best) save_checkpoint(art.checkpoint_path, model.params());
        if (early_stop_check(st, train_cfg.early_stop)) break;
    }
    art.best_epoch = st.best_epoch;
    art.best_val_f1 = st.best_val_f1;

    // Test metrics come from the best-validation checkpoint.
    load_checkpoint(art.checkpoint_path, model.params());
    double test_loss = 0;
    auto test_preds = predict_split(model, manifest, split, Role::test, train_cfg.batch,
                                    &test_loss);
    std::vector<std::string> names;
    for (const auto& c : split.classes) names.push_back(c.display());
    art.test_report = make_run_report(test_preds, test_loss, names);
    save_run_report(art.test_report, run_dir + "/test_report.csv");
    {
        AggregateReport agg = aggregate_runs({art.test_report});
        std::ofstream f(run_dir + "/test_report.txt");
        f << classification_report(agg);
    }
    return art;
}

}  // namespace wid
