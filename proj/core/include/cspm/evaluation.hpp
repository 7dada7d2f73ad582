#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cspm/model.hpp"
#include "cspm/trainer.hpp"

namespace cspm {

struct EvalResult {
    double auc = 0.0;
    int64_t n_pos = 0, n_neg = 0;
    double logloss = 0.0;
};

// Mann-Whitney rank estimator with average ranks for ties; equals the
// pairwise oracle that credits ties 0.5. Single-class input raises DataError.
double auc(std::span<const double> scores, std::span<const int> labels);

EvalResult evaluate(ModelParams& params, std::span<const Sample> data, const ModelConfig& cfg,
                    const AblationSwitches& switches, int n_threads = 1);

struct AblationRow {
    std::string name;
    AblationSwitches switches;
};

// The eight configurations of the ablation table.
std::vector<AblationRow> ablation_grid();

struct AblationResult {
    std::string config;
    uint64_t seed = 0;
    double auc = 0.0;
    double logloss = 0.0;
    double wall_seconds = 0.0;
};

// Trains every (config, seed) pair with identical data order and returns one
// row each. Fresh params per run; training follows tcfg exactly.
std::vector<AblationResult> run_ablation_grid(std::span<const Sample> train_set,
                                              std::span<const Sample> test_set,
                                              std::span<const AblationRow> grid,
                                              std::span<const uint64_t> seeds,
                                              const ModelConfig& mcfg, const TrainConfig& tcfg);

void write_ablation_csv(std::span<const AblationResult> results,
                        const std::filesystem::path& path);

// Aligned mean +/- std table over seeds, sorted by mean AUC descending.
std::string format_ablation_summary(std::span<const AblationResult> results);

struct GateStat {
    std::string feature;
    double mean_gate = 0.0, var_gate = 0.0;
};

// Mean/variance of every StIF gate over a dataset, sorted by mean descending.
std::vector<GateStat> gate_report(ModelParams& params, std::span<const Sample> data,
                                  const ModelConfig& cfg, const AblationSwitches& switches);

void write_gate_report_csv(std::span<const GateStat> stats,
                           const std::filesystem::path& path);

}  // namespace cspm
