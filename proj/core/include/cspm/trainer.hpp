#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cspm/model.hpp"

namespace cspm {

struct TrainConfig {
    int64_t batch_size = 256;
    int64_t epochs = 1;
    double lr0 = 0.01;
    double decay_rate = 0.95;
    int64_t decay_steps = 1000;
    int64_t eval_every = 200;  // steps between held-out evals/checkpoints; 0 = end of epoch only

    void validate() const;  // batch_size >= 4: pair mining needs at least 3 partners
};

// Per-parameter accumulated squared gradients, keyed by parameter name.
struct AdagradState {
    std::unordered_map<std::string, std::vector<real_t>> accum;
    int64_t step = 0;
};

double lr_at(int64_t step, const TrainConfig& cfg);

// One update: G += g*g; theta -= lr_t * g / (sqrt(G) + 1e-8). Embedding
// padding rows are excluded. A NaN gradient aborts with the parameter name.
void adagrad_step(ModelParams& params, AdagradState& state, const TrainConfig& cfg);

struct MetricsRow {
    int64_t step = 0;
    double l_ctr = 0, l_cl = 0, l_total = 0, lr = 0;
    std::optional<double> eval_auc;
};
using MetricsHistory = std::vector<MetricsRow>;

// CSV with header step,l_ctr,l_cl,l_total,lr,eval_auc; byte-deterministic
// shortest-round-trip number formatting.
void write_metrics_csv(const MetricsHistory& history, const std::filesystem::path& path);

struct TrainResult {
    MetricsHistory history;
    int64_t skipped_anchors = 0;  // mining anchors without a usable pair
};

// Mini-batch training; mutates params/state in place. eval_set may be empty.
// checkpoint_dir, when set, receives checkpoint.json every eval period.
TrainResult train(ModelParams& params, AdagradState& state, std::span<const Sample> train_set,
                  std::span<const Sample> eval_set, const ModelConfig& mcfg,
                  const TrainConfig& tcfg, const AblationSwitches& switches, uint64_t seed,
                  const std::filesystem::path& checkpoint_dir = {});

// Checkpoints round-trip every named tensor plus optimizer state and the step
// counter. Loading validates shapes and raises DataError naming the tensor.
void save_checkpoint(ModelParams& params, const AdagradState& state,
                     const std::filesystem::path& path);
void load_checkpoint(ModelParams& params, AdagradState& state,
                     const std::filesystem::path& path);

}  // namespace cspm
