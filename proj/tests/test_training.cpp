#include <doctest.h>

#include <filesystem>

#include "wid/csv.h"
#include "wid/run_config.h"
#include "wid/synth.h"
#include "wid/training.h"

using namespace wid;
namespace fs = std::filesystem;

namespace {

// One small shared corpus for the training tests.
struct Corpus {
    DatasetManifest manifest;
    SplitAssignment split;
};

const Corpus& corpus() {
    static Corpus c = [] {
        SynthSpec spec;
        spec.num_writers = 4;
        spec.pages_per_writer = 3;
        spec.lines_per_page = 4;
        spec.nuisance = 0.3;
        spec.seed = 77;
        auto dir = fs::temp_directory_path() / "wid_train_fixture";
        fs::remove_all(dir);
        Corpus out;
        out.manifest = generate_corpus(spec, dir.string());
        out.split = split_line_level(out.manifest, 1);
        return out;
    }();
    return c;
}

TrainConfig quick_config(int epochs) {
    TrainConfig tc;
    tc.batch = 16;
    tc.max_epochs = epochs;
    tc.aug = AugmentParams::none();
    tc.seeds = {1};
    return tc;
}

ModelConfig tiny_model() {
    ModelConfig mc;
    mc.backbone = "tiny-test";
    mc.attention = false;
    mc.num_classes = 4;
    return mc;
}

}  // namespace

TEST_CASE("scheduler: rising f1 never changes the lr") {
    RunState st;
    st.current_lr = 1e-3;
    SchedulerConfig cfg;
    for (int e = 0; e < 40; ++e) {
        st.epoch = e;
        scheduler_step(st, 0.1 + e * 0.01, cfg);
        CHECK(st.current_lr == 1e-3);
        CHECK(st.epochs_since_best == 0);
    }
}

TEST_CASE("scheduler: 11 non-improving epochs halve the lr once") {
    RunState st;
    st.current_lr = 1e-3;
    SchedulerConfig cfg;
    st.epoch = 0;
    scheduler_step(st, 0.5, cfg);  // improvement establishes the best
    for (int e = 1; e <= 10; ++e) {
        st.epoch = e;
        scheduler_step(st, 0.4, cfg);
        CHECK(st.current_lr == 1e-3);  // patience 10 not yet exceeded
    }
    st.epoch = 11;
    scheduler_step(st, 0.4, cfg);  // 11th plateau epoch: counter exceeds patience
    CHECK(st.current_lr == doctest::Approx(5e-4));
    CHECK(st.plateau_count == 0);  // counter reset

    // floor at min_lr
    st.current_lr = 1e-8;
    for (int e = 12; e < 40; ++e) {
        st.epoch = e;
        scheduler_step(st, 0.4, cfg);
        CHECK(st.current_lr >= 1e-8);
    }
    CHECK(st.current_lr == 1e-8);
}

TEST_CASE("early stop fires exactly at 50 non-improving epochs") {
    RunState st;
    EarlyStopConfig cfg;
    SchedulerConfig sched;
    st.current_lr = 1e-3;
    scheduler_step(st, 0.9, sched);
    CHECK_FALSE(early_stop_check(st, cfg));
    for (int e = 1; e <= 49; ++e) {
        st.epoch = e;
        scheduler_step(st, 0.1, sched);
        CHECK_FALSE(early_stop_check(st, cfg));
    }
    st.epoch = 50;
    scheduler_step(st, 0.1, sched);
    CHECK(early_stop_check(st, cfg));

    // improvement at epoch 50 resets instead
    RunState st2;
    st2.current_lr = 1e-3;
    scheduler_step(st2, 0.9, sched);
    for (int e = 1; e <= 49; ++e) {
        st2.epoch = e;
        scheduler_step(st2, 0.1, sched);
    }
    st2.epoch = 50;
    scheduler_step(st2, 0.95, sched);
    CHECK_FALSE(early_stop_check(st2, cfg));
}

TEST_CASE("policy parsing and contradictions") {
    CHECK(FinetunePolicy::parse("frozen").depth == FinetunePolicy::Depth::frozen);
    CHECK(FinetunePolicy::parse("last5").k == 5);
    CHECK(FinetunePolicy::parse("scratch").scratch);
    CHECK(FinetunePolicy::parse("full").depth == FinetunePolicy::Depth::full);
    CHECK_THROWS_AS(FinetunePolicy::parse("lastX"), ConfigError);
    CHECK_THROWS_AS(FinetunePolicy::parse("none"), ConfigError);

    FinetunePolicy contradiction;
    contradiction.depth = FinetunePolicy::Depth::frozen;
    contradiction.scratch = true;
    CHECK_THROWS_AS(contradiction.validate(), ConfigError);

    TrainConfig tc;
    tc.policy = FinetunePolicy::parse("scratch");
    tc.backbone_weights = "weights.ckpt";
    CHECK_THROWS_AS(tc.validate(), ConfigError);
}

namespace {
std::vector<std::vector<float>> snapshot_backbone(const WriterNet<float>& net) {
    std::vector<std::vector<float>> out;
    const auto& ps = net.params();
    for (int i = 0; i < ps.size(); ++i) {
        if (ps.at(i).name.rfind("backbone.", 0) != 0) continue;
        std::vector<float> v(ps.at(i).value.data(),
                             ps.at(i).value.data() + ps.at(i).value.numel());
        out.push_back(std::move(v));
    }
    return out;
}

void run_steps(WriterNet<float>& net, int steps) {
    const auto& c = corpus();
    BatchLoader loader(c.manifest, c.split, Role::train, 16, 3, AugmentParams::none());
    Adam<float> opt(1e-3, net.config().weight_decay);
    int done = 0;
    for (int epoch = 0; done < steps; ++epoch) {
        loader.start_epoch(epoch);
        BatchLoader::Batch b;
        while (done < steps && loader.next(b)) {
            auto fw = net.forward(b.images, true, 1000 + done);
            auto loss = ce_loss(fw->tape, fw->probs, b.labels);
            fw->tape.backward(loss);
            opt.step(net.params(), fw->leaves);
            ++done;
        }
    }
}
}  // namespace

TEST_CASE("frozen policy keeps backbone tensors bit-identical") {
    WriterNet<float> net(tiny_model());
    apply_finetune_policy(net, FinetunePolicy::parse("frozen"));
    const auto before = snapshot_backbone(net);
    run_steps(net, 5);
    const auto after = snapshot_backbone(net);
    CHECK(before == after);
}

TEST_CASE("last1 policy trains exactly one backbone layer") {
    WriterNet<float> net(tiny_model());
    apply_finetune_policy(net, FinetunePolicy::parse("last1"));
    const auto before = snapshot_backbone(net);
    run_steps(net, 5);
    const auto after = snapshot_backbone(net);
    REQUIRE(before.size() == after.size());  // 16 tensors: 4 layers x (w,b,gamma,beta)
    int changed_layers = 0;
    for (size_t i = 0; i < before.size(); i += 4) {
        bool changed = false;
        for (size_t j = i; j < i + 4; ++j) changed = changed || before[j] != after[j];
        if (changed) ++changed_layers;
    }
    CHECK(changed_layers == 1);
    // and it is the last layer
    CHECK(before.back() != after.back());

    CHECK_THROWS_AS(apply_finetune_policy(net, FinetunePolicy::parse("last25")),
                    std::invalid_argument);
}

TEST_CASE("sanity descent: single-batch loss decreases over 10 steps") {
    ModelConfig mc = tiny_model();
    mc.dropout_p = 0.0;
    WriterNet<float> net(mc);
    const auto& c = corpus();
    BatchLoader loader(c.manifest, c.split, Role::train, 8, 5, AugmentParams::none(), false);
    loader.start_epoch(0);
    BatchLoader::Batch b;
    REQUIRE(loader.next(b));

    Adam<float> opt(1e-3, mc.weight_decay);
    double first = 0, last = 0;
    for (int step = 0; step < 10; ++step) {
        auto fw = net.forward(b.images, true, 42);
        auto loss = ce_loss(fw->tape, fw->probs, b.labels);
        if (step == 0) first = loss->value[0];
        last = loss->value[0];
        fw->tape.backward(loss);
        opt.step(net.params(), fw->leaves);
    }
    CHECK(last < first);
}

TEST_CASE("train_run artifacts, determinism, and best-checkpoint selection") {
    const auto& c = corpus();
    const auto dir1 = (fs::temp_directory_path() / "wid_run_a").string();
    const auto dir2 = (fs::temp_directory_path() / "wid_run_b").string();
    fs::remove_all(dir1);
    fs::remove_all(dir2);

    auto art1 = train_run(c.manifest, c.split, tiny_model(), quick_config(4), 5, dir1);
    auto art2 = train_run(c.manifest, c.split, tiny_model(), quick_config(4), 5, dir2);

    // identical seeds and inputs: identical logs (epoch-0 loss in particular)
    REQUIRE(art1.log.size() == art2.log.size());
    CHECK(art1.log[0].train_loss == art2.log[0].train_loss);
    for (size_t i = 0; i < art1.log.size(); ++i)
        CHECK(art1.log[i].val_f1 == art2.log[i].val_f1);

    // artifacts on disk
    for (const char* f :
         {"config.snapshot", "split.csv", "log.csv", "best.ckpt", "test_report.csv",
          "test_report.txt"})
        CHECK(fs::exists(fs::path(dir1) / f));

    // best epoch is the argmax of the logged validation f1
    double best = -1;
    int arg = -1;
    for (const auto& row : art1.log)
        if (row.val_f1 > best) {
            best = row.val_f1;
            arg = row.epoch;
        }
    CHECK(art1.best_epoch == arg);
    CHECK(art1.best_val_f1 == doctest::Approx(best));

    // the saved checkpoint reproduces the logged best validation f1 exactly
    ModelConfig mc = tiny_model();
    mc.init_seed = 5;
    WriterNet<float> reloaded(mc);
    load_checkpoint(art1.checkpoint_path, reloaded.params());
    auto preds = predict_split(reloaded, c.manifest, c.split, Role::val, 16);
    CHECK(macro_f1(preds).macro_f1 == doctest::Approx(best).epsilon(1e-12));

    // the run stops at max_epochs (early stopping never fires past it)
    CHECK(art1.epochs_ran == 4);

    // log.csv matches the in-memory log
    auto csv = read_csv(dir1 + "/log.csv");
    REQUIRE(csv.rows.size() == art1.log.size() + 1);
    CHECK(csv.rows[0] == std::vector<std::string>{"epoch", "lr", "train_loss", "val_f1"});
}

TEST_CASE("train_run aborts on non-finite loss with a diagnostic") {
    // an absurd learning rate overflows the weights within one step
    const auto dir = (fs::temp_directory_path() / "wid_run_nan").string();
    fs::remove_all(dir);
    auto tc = quick_config(3);
    tc.lr0 = 1e37;
    const auto& c = corpus();
    CHECK_THROWS_AS(train_run(c.manifest, c.split, tiny_model(), tc, 5, dir), TrainAbort);
    CHECK(fs::exists(fs::path(dir) / "abort_diagnostic.txt"));
    CHECK(fs::exists(fs::path(dir) / "abort.ckpt"));
}

TEST_CASE("run config parsing") {
    const auto path = (fs::temp_directory_path() / "wid_cfg.conf").string();
    std::ofstream(path) << "model.backbone = tiny-test\n"
                        << "model.attention = on\n"
                        << "# comment line\n"
                        << "train.initial_lr = 5e-4\n"
                        << "train.seeds = 3,5,7\n"
                        << "aug.rotation_deg = 10\n"
                        << "protocol = B\n";
    auto cfg = parse_run_config(path);
    CHECK(cfg.model.backbone == "tiny-test");
    CHECK(cfg.model.attention);
    CHECK(cfg.train.lr0 == doctest::Approx(5e-4));
    CHECK(cfg.train.seeds == std::vector<uint64_t>{3, 5, 7});
    CHECK(cfg.train.aug.rotation_deg == doctest::Approx(10));
    CHECK(cfg.protocol == 'B');

    std::ofstream(path) << "model.unknown_key = 1\n";
    CHECK_THROWS_AS(parse_run_config(path), ConfigError);

    // defaults mirror the training recipe
    RunConfig defaults;
    CHECK(defaults.train.lr0 == doctest::Approx(1e-3));
    CHECK(defaults.train.batch == 256);
    CHECK(defaults.train.max_epochs == 450);
    CHECK(defaults.train.scheduler.factor == doctest::Approx(0.5));
    CHECK(defaults.train.scheduler.patience == 10);
    CHECK(defaults.train.scheduler.min_lr == doctest::Approx(1e-8));
    CHECK(defaults.train.early_stop.patience == 50);
    CHECK(defaults.train.seeds.size() == 3);
    CHECK(defaults.model.dropout_p == doctest::Approx(0.5));
    CHECK(defaults.model.weight_decay == doctest::Approx(1e-4));
    CHECK(defaults.train.aug.rotation_deg == doctest::Approx(15.0));
    CHECK(defaults.train.aug.zoom_frac == doctest::Approx(0.30));
    CHECK(defaults.train.aug.shear_frac == doctest::Approx(0.30));
    CHECK(defaults.train.aug.width_shift_frac == doctest::Approx(0.20));
    CHECK(defaults.train.aug.height_shift_frac == doctest::Approx(0.20));
}
