#ifndef WID_RUN_CONFIG_H
#define WID_RUN_CONFIG_H

#include "wid/training.h"

namespace wid {

// Declarative run configuration: flat `key = value` lines with dotted
// sections ('#' comments). Unknown keys are rejected before any side effect.
struct RunConfig {
    std::string manifest_path;
    std::string output_dir = "runs";
    char protocol = 'A';
    int min_pages = 3;  // protocol B eligibility
    ModelConfig model;
    TrainConfig train;

    void validate() const;
};

RunConfig parse_run_config(const std::string& path);
void apply_run_config_overrides(RunConfig& cfg, const std::vector<std::string>& overrides);

}  // namespace wid

#endif
