#include "cspm/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

#include "cspm/errors.hpp"

namespace cspm {

double auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size())
        throw ShapeError("auc: scores and labels lengths differ");
    int64_t n_pos = 0, n_neg = 0;
    for (int y : labels) (y ? n_pos : n_neg) += 1;
    if (n_pos == 0 || n_neg == 0)
        throw DataError("auc: undefined for single-class input (n_pos=" +
                        std::to_string(n_pos) + ", n_neg=" + std::to_string(n_neg) + ")");

    const size_t n = scores.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    // Average ranks over tied scores (Wilcoxon convention, 1-based).
    double pos_rank_sum = 0.0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (size_t k = i; k <= j; ++k)
            if (labels[idx[k]]) pos_rank_sum += avg_rank;
        i = j + 1;
    }
    return (pos_rank_sum - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0) /
           (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

namespace {

double stable_bce(double z, int y) {
    return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::fabs(z)));
}

}  // namespace

EvalResult evaluate(ModelParams& params, std::span<const Sample> data, const ModelConfig& cfg,
                    const AblationSwitches& switches, int n_threads) {
    if (data.empty()) throw DataError("evaluate: empty dataset");
    std::vector<double> scores(data.size());
    std::vector<double> losses(data.size());
    std::vector<int> labels(data.size());

    auto run_shard = [&](size_t lo, size_t hi) {
        for (size_t k = lo; k < hi; ++k) {
            ForwardOutput f = forward(data[k], params, cfg, switches);
            scores[k] = f.yhat;
            losses[k] = stable_bce(static_cast<double>(f.logit.value()), data[k].label);
            labels[k] = data[k].label;
        }
    };
    if (n_threads <= 1) {
        run_shard(0, data.size());
    } else {
        std::vector<std::thread> pool;
        const size_t per = (data.size() + static_cast<size_t>(n_threads) - 1) /
                           static_cast<size_t>(n_threads);
        for (int t = 0; t < n_threads; ++t) {
            const size_t lo = static_cast<size_t>(t) * per;
            const size_t hi = std::min(lo + per, data.size());
            if (lo >= hi) break;
            pool.emplace_back(run_shard, lo, hi);
        }
        for (auto& th : pool) th.join();
    }

    EvalResult r;
    r.auc = auc(scores, labels);
    for (int y : labels) (y ? r.n_pos : r.n_neg) += 1;
    r.logloss = std::accumulate(losses.begin(), losses.end(), 0.0) /
                static_cast<double>(losses.size());
    return r;
}

std::vector<AblationRow> ablation_grid() {
    auto sw = [](bool lcl, bool dcn, bool stpe, bool stif) {
        return AblationSwitches{lcl, dcn, stpe, stif};
    };
    return {
        {"full", sw(true, true, true, true)},
        {"wo_CSRL_LCL", sw(false, true, true, true)},
        {"wo_CSRL_DCNv2", sw(true, false, true, true)},
        {"wo_CSRL", sw(false, false, true, true)},
        {"wo_StPE", sw(true, true, false, true)},
        {"wo_StIF", sw(true, true, true, false)},
        {"wo_StPE_StIF", sw(true, true, false, false)},
        {"wo_CSRL_StPE_StIF", sw(false, false, false, false)},
    };
}

std::vector<AblationResult> run_ablation_grid(std::span<const Sample> train_set,
                                              std::span<const Sample> test_set,
                                              std::span<const AblationRow> grid,
                                              std::span<const uint64_t> seeds,
                                              const ModelConfig& mcfg, const TrainConfig& tcfg) {
    std::vector<AblationResult> results;
    for (const AblationRow& row : grid) {
        for (uint64_t seed : seeds) {
            const auto t0 = std::chrono::steady_clock::now();
            ModelParams params = ModelParams::init(mcfg, seed);
            AdagradState state;
            // No mid-run evals: data order depends only on the seed, so every
            // configuration sees identical batches.
            train(params, state, train_set, {}, mcfg, tcfg, row.switches, seed);
            EvalResult ev = evaluate(params, test_set, mcfg, row.switches);
            const auto t1 = std::chrono::steady_clock::now();
            results.push_back({row.name, seed, ev.auc, ev.logloss,
                               std::chrono::duration<double>(t1 - t0).count()});
        }
    }
    return results;
}

namespace {

std::string fmt_num(double v) {
    char buf[40];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

}  // namespace

void write_ablation_csv(std::span<const AblationResult> results,
                        const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("write_ablation_csv: cannot open " + path.string());
    out << "config,seed,auc,logloss,wall_seconds\n";
    for (const AblationResult& r : results)
        out << r.config << ',' << r.seed << ',' << fmt_num(r.auc) << ',' << fmt_num(r.logloss)
            << ',' << fmt_num(r.wall_seconds) << '\n';
    if (!out) throw DataError("write_ablation_csv: write failed for " + path.string());
}

std::string format_ablation_summary(std::span<const AblationResult> results) {
    struct Agg {
        std::vector<double> aucs;
    };
    std::map<std::string, Agg> by_config;
    for (const AblationResult& r : results) by_config[r.config].aucs.push_back(r.auc);

    struct Line {
        std::string name;
        double mean, stdev;
        size_t n;
    };
    std::vector<Line> lines;
    for (auto& [name, agg] : by_config) {
        const double n = static_cast<double>(agg.aucs.size());
        const double mean = std::accumulate(agg.aucs.begin(), agg.aucs.end(), 0.0) / n;
        double var = 0.0;
        for (double a : agg.aucs) var += (a - mean) * (a - mean);
        var = agg.aucs.size() > 1 ? var / (n - 1.0) : 0.0;
        lines.push_back({name, mean, std::sqrt(var), agg.aucs.size()});
    }
    std::stable_sort(lines.begin(), lines.end(),
                     [](const Line& a, const Line& b) { return a.mean > b.mean; });

    size_t width = 6;
    for (const Line& l : lines) width = std::max(width, l.name.size());
    std::ostringstream out;
    out << std::left << std::setw(static_cast<int>(width)) << "config"
        << "  mean_auc   std        n\n";
    out << std::setprecision(4) << std::fixed;
    for (const Line& l : lines)
        out << std::left << std::setw(static_cast<int>(width)) << l.name << "  " << l.mean
            << "     " << l.stdev << "     " << l.n << "\n";
    return out.str();
}

std::vector<GateStat> gate_report(ModelParams& params, std::span<const Sample> data,
                                  const ModelConfig& cfg, const AblationSwitches& switches) {
    if (!switches.use_stif)
        throw ConfigError("gate_report: use_stif is off, no gates to report");
    if (data.empty()) throw DataError("gate_report: empty dataset");
    const std::vector<std::string> names = gated_feature_names();
    std::vector<double> sum(names.size(), 0.0), sum_sq(names.size(), 0.0);
    for (const Sample& s : data) {
        ForwardOutput f = forward(s, params, cfg, switches);
        if (f.gates.size() != names.size())
            throw ShapeError("gate_report: expected " + std::to_string(names.size()) +
                             " gates, got " + std::to_string(f.gates.size()));
        for (size_t j = 0; j < names.size(); ++j) {
            const double w = static_cast<double>(f.gates[j].value());
            sum[j] += w;
            sum_sq[j] += w * w;
        }
    }
    const double n = static_cast<double>(data.size());
    std::vector<GateStat> stats;
    for (size_t j = 0; j < names.size(); ++j) {
        const double mean = sum[j] / n;
        stats.push_back({names[j], mean, std::max(0.0, sum_sq[j] / n - mean * mean)});
    }
    std::stable_sort(stats.begin(), stats.end(),
                     [](const GateStat& a, const GateStat& b) { return a.mean_gate > b.mean_gate; });
    return stats;
}

void write_gate_report_csv(std::span<const GateStat> stats,
                           const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("write_gate_report_csv: cannot open " + path.string());
    out << "feature_name,mean_gate,var_gate\n";
    for (const GateStat& s : stats)
        out << s.feature << ',' << fmt_num(s.mean_gate) << ',' << fmt_num(s.var_gate) << '\n';
    if (!out) throw DataError("write_gate_report_csv: write failed for " + path.string());
}

}  // namespace cspm
