#ifndef WID_TRAINING_H
#define WID_TRAINING_H

#include "wid/errors.h"
#include "wid/evaluation.h"
#include "wid/model.h"
#include "wid/preprocess.h"

namespace wid {

struct SchedulerConfig {  // ReduceLROnPlateau, mode max
    double factor = 0.5;
    int patience = 10;
    double min_lr = 1e-8;
};

struct EarlyStopConfig {  // metric: validation macro-F1, mode max
    int patience = 50;
};

struct FinetunePolicy {
    enum class Depth { frozen, last_k, full };
    Depth depth = Depth::full;
    int k = 0;
    bool scratch = false;  // random backbone init, implies full

    static FinetunePolicy parse(const std::string& s);
    std::string to_string() const;
    void validate() const {
        if (scratch && depth != Depth::full)
            throw ConfigError("policy: training from scratch contradicts a frozen/partial "
                              "backbone");
        if (depth == Depth::last_k && k < 1)
            throw ConfigError("policy: last_k needs k >= 1");
    }
};

struct TrainConfig {
    double lr0 = 1e-3;
    int batch = 256;  // overridable for desk-scale corpora
    int max_epochs = 450;
    SchedulerConfig scheduler;
    EarlyStopConfig early_stop;
    std::vector<uint64_t> seeds{1, 2, 3};
    FinetunePolicy policy;
    AugmentParams aug;
    std::string backbone_weights;  // optional checkpoint with backbone.* tensors

    void validate() const {
        if (lr0 <= 0 || batch <= 0 || max_epochs <= 0)
            throw ConfigError("train: lr/batch/epochs must be positive");
        if (scheduler.patience <= 0 || early_stop.patience <= 0)
            throw ConfigError("train: patience values must be positive");
        policy.validate();
        if (policy.scratch && !backbone_weights.empty())
            throw ConfigError("train: from-scratch runs cannot load backbone weights");
    }
};

struct RunState {
    int epoch = 0;
    double current_lr = 1e-3;
    double best_val_f1 = -1.0;
    int best_epoch = -1;
    int epochs_since_best = 0;
    int plateau_count = 0;
};

// Plateau rule: an improvement resets the counter; once the counter exceeds
// the patience, lr halves (floored at min_lr) and the counter resets.
void scheduler_step(RunState& st, double val_f1, const SchedulerConfig& cfg);

inline bool early_stop_check(const RunState& st, const EarlyStopConfig& cfg) {
    return st.epochs_since_best >= cfg.patience;
}

// Adam with bias correction; regularized kernels get their decay gradient
// here (lambda * ||w||^2 in the loss, 2*lambda*w in the step).
template <typename T>
class Adam {
public:
    Adam(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8)
        : lr_(lr), decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }

    void step(ModelParams<T>& params, const std::vector<ad::Var<T>>& leaves) {
        if (m_.empty()) {
            m_.resize(params.size());
            v_.resize(params.size());
            for (int i = 0; i < params.size(); ++i) {
                m_[i] = Tensor<double>::zeros(params.at(i).value.shape());
                v_[i] = Tensor<double>::zeros(params.at(i).value.shape());
            }
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (int i = 0; i < params.size(); ++i) {
            auto& e = params.at(i);
            if (!e.trainable) continue;
            const bool has_grad = !leaves[i]->grad.empty();
            for (int64_t j = 0; j < e.value.numel(); ++j) {
                double g = has_grad ? (double)leaves[i]->grad[j] : 0.0;
                if (e.regularized) g += 2.0 * decay_ * (double)e.value[j];
                m_[i][j] = beta1_ * m_[i][j] + (1 - beta1_) * g;
                v_[i][j] = beta2_ * v_[i][j] + (1 - beta2_) * g * g;
                const double mhat = m_[i][j] / bc1, vhat = v_[i][j] / bc2;
                e.value[j] = (T)((double)e.value[j] - lr_ * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

private:
    double lr_, decay_, beta1_, beta2_, eps_;
    int t_ = 0;
    std::vector<Tensor<double>> m_, v_;
};

// Applies the fine-tune depth to the model's backbone layer list; the
// non-backbone modules always stay trainable. Backbone weights load from
// cfg.backbone_weights when given (pre-trained stand-in).
void apply_finetune_policy(WriterNet<float>& model, const FinetunePolicy& policy,
                           const std::string& backbone_weights = "");

struct EpochLog {
    int epoch = 0;
    double lr = 0;
    double train_loss = 0;  // cross-entropy + weight-decay term
    double val_f1 = 0;
};

struct RunArtifacts {
    std::string run_dir;
    int best_epoch = -1;
    double best_val_f1 = 0;
    int epochs_ran = 0;
    std::vector<EpochLog> log;
    RunReport test_report;
    std::string checkpoint_path;
    std::string config_hash;
    std::string split_checksum;
};

// One full training run: epochs of Adam over the train stream, per-epoch
// validation macro-F1 driving scheduler and early stopping, best checkpoint
// by validation macro-F1, final test-set report from the best weights.
// Writes config.snapshot, split.csv, log.csv, best.ckpt, test_report.{csv,txt}
// under run_dir.
RunArtifacts train_run(const DatasetManifest& manifest, const SplitAssignment& split,
                       ModelConfig model_cfg, const TrainConfig& train_cfg, uint64_t seed,
                       const std::string& run_dir);

// Evaluates a checkpoint on one role of a split (forward only).
PredictionSet predict_split(WriterNet<float>& model, const DatasetManifest& manifest,
                            const SplitAssignment& split, Role role, int batch,
                            double* mean_loss = nullptr);

}  // namespace wid

#endif
