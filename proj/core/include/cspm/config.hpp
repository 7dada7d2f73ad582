#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "cspm/data.hpp"
#include "cspm/model.hpp"
#include "cspm/trainer.hpp"

namespace cspm {

// The full experiment surface. File format is INI/TOML-style sections of
// key = value lines; unknown sections or keys are rejected. Precedence:
// command-line flags > --set overrides > config file > defaults.
struct ExperimentConfig {
    uint64_t seed = 42;
    std::string output_dir = "runs";
    GeneratorConfig generator;
    int64_t test_samples = 20000;  // [generator] test_samples: held-out draw size
    ModelConfig model;             // [embedding]/[csrl]/[stpe]/[stif]/[model] sections
    AblationSwitches switches;     // [model] use_* keys
    TrainConfig train;
    int64_t eval_threads = 1;      // [eval] n_threads
    int64_t ablation_n_seeds = 3;  // [ablation] n_seeds

    // Copies the generator-derived fields (vocab sizes, grid) into `model`
    // and validates every section. Call after all overrides are applied.
    void finalize();
};

ExperimentConfig default_config();

// ConfigError carries file/line context for parse errors and names unknown
// or ill-typed keys.
ExperimentConfig load_config(const std::filesystem::path& path);

// Applies one "section.key=value" override (top-level keys have no section).
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

// Resolved configuration as pretty JSON, for run manifests.
std::string config_to_json(const ExperimentConfig& cfg);

}  // namespace cspm
