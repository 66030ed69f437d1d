#include "wid/run_config.h"

#include <fstream>
#include <sstream>

namespace wid {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
    if (v == "off" || v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config: boolean expected for " + key + ", got '" + v + "'");
}

void set_key(RunConfig& cfg, const std::string& key, const std::string& value) {
    auto num = [&] {
        try {
            return std::stod(value);
        } catch (...) {
            throw ConfigError("config: number expected for " + key + ", got '" + value + "'");
        }
    };
    if (key == "paths.manifest") cfg.manifest_path = value;
    else if (key == "paths.output_dir") cfg.output_dir = value;
    else if (key == "protocol") {
        if (value != "A" && value != "B") throw ConfigError("config: protocol must be A or B");
        cfg.protocol = value[0];
    } else if (key == "protocol.min_pages") cfg.min_pages = (int)num();
    else if (key == "model.backbone") cfg.model.backbone = value;
    else if (key == "model.attention") cfg.model.attention = parse_bool(value, key);
    else if (key == "model.num_classes") cfg.model.num_classes = (int)num();
    else if (key == "model.dropout") cfg.model.dropout_p = num();
    else if (key == "model.weight_decay") cfg.model.weight_decay = num();
    else if (key == "model.head_width") cfg.model.head_width = (int)num();
    else if (key == "model.vlad_clusters") cfg.model.vlad.clusters = (int)num();
    else if (key == "train.initial_lr") cfg.train.lr0 = num();
    else if (key == "train.batch_size") cfg.train.batch = (int)num();
    else if (key == "train.max_epochs") cfg.train.max_epochs = (int)num();
    else if (key == "train.scheduler_factor") cfg.train.scheduler.factor = num();
    else if (key == "train.scheduler_patience") cfg.train.scheduler.patience = (int)num();
    else if (key == "train.scheduler_min_lr") cfg.train.scheduler.min_lr = num();
    else if (key == "train.early_stop_patience") cfg.train.early_stop.patience = (int)num();
    else if (key == "train.policy") cfg.train.policy = FinetunePolicy::parse(value);
    else if (key == "train.backbone_weights") cfg.train.backbone_weights = value;
    else if (key == "train.seeds") {
        cfg.train.seeds.clear();
        std::istringstream is(value);
        std::string tok;
        while (std::getline(is, tok, ','))
            cfg.train.seeds.push_back(std::stoull(trim(tok)));
        if (cfg.train.seeds.empty()) throw ConfigError("config: train.seeds is empty");
    } else if (key == "seed") cfg.train.seeds = {(uint64_t)num()};
    else if (key == "aug.rotation_deg") cfg.train.aug.rotation_deg = num();
    else if (key == "aug.zoom_frac") cfg.train.aug.zoom_frac = num();
    else if (key == "aug.shear_frac") cfg.train.aug.shear_frac = num();
    else if (key == "aug.width_shift_frac") cfg.train.aug.width_shift_frac = num();
    else if (key == "aug.height_shift_frac") cfg.train.aug.height_shift_frac = num();
    else throw ConfigError("config: unknown key '" + key + "'");
}

}  // namespace

void RunConfig::validate() const {
    model.validate();
    train.validate();
    if (protocol != 'A' && protocol != 'B') throw ConfigError("config: protocol must be A or B");
    if (min_pages < 3) throw ConfigError("config: protocol.min_pages must be >= 3");
}

RunConfig parse_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open " + path);
    RunConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(lineno) + " has no '='");
        set_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

void apply_run_config_overrides(RunConfig& cfg, const std::vector<std::string>& overrides) {
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: override '" + o + "' has no '='");
        set_key(cfg, trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
    }
}

}  // namespace wid
