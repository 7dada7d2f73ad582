#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cspm/config.hpp"
#include "cspm/data.hpp"
#include "cspm/errors.hpp"
#include "cspm/evaluation.hpp"
#include "cspm/model.hpp"
#include "cspm/trainer.hpp"

#ifndef CSPM_BUILD_HASH
#define CSPM_BUILD_HASH "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cspm;

namespace {

struct CommonArgs {
    std::string config_path;
    std::optional<uint64_t> seed;
    std::string out_dir;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "Config file (key = value sections)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", args.seed, "Random seed (overrides the config)");
    cmd->add_option("--out", args.out_dir, "Output directory");
    cmd->add_option("--set", args.overrides,
                    "Config override section.key=value (repeatable)");
}

ExperimentConfig resolve_config(const CommonArgs& args) {
    ExperimentConfig cfg =
        args.config_path.empty() ? default_config() : load_config(args.config_path);
    for (const std::string& kv : args.overrides) apply_override(cfg, kv);
    if (args.seed) cfg.seed = *args.seed;
    if (!args.out_dir.empty()) cfg.output_dir = args.out_dir;
    cfg.finalize();
    return cfg;
}

void write_manifest(const ExperimentConfig& cfg, const std::string& command,
                    const json& extra, const fs::path& dir) {
    json j;
    j["command"] = command;
    j["seed"] = cfg.seed;
    j["build_hash"] = CSPM_BUILD_HASH;
    j["config"] = json::parse(config_to_json(cfg));
    for (const auto& [k, v] : extra.items()) j[k] = v;
    std::ofstream out(dir / "manifest.json");
    if (!out) throw DataError("cannot write manifest to " + (dir / "manifest.json").string());
    out << j.dump(2) << '\n';
}

fs::path ensure_out_dir(const ExperimentConfig& cfg) {
    fs::path dir(cfg.output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory " + dir.string());
    return dir;
}

int cmd_generate(const CommonArgs& args) {
    ExperimentConfig cfg = resolve_config(args);
    fs::path dir = ensure_out_dir(cfg);

    GeneratorConfig gen = cfg.generator;
    gen.samples = cfg.generator.samples + cfg.test_samples;
    GeneratedData data = generate_with_truth(gen);

    std::span<const Sample> all(data.samples);
    auto train_part = all.subspan(0, static_cast<size_t>(cfg.generator.samples));
    auto test_part = all.subspan(static_cast<size_t>(cfg.generator.samples));
    save_jsonl(train_part, dir / "train.jsonl");
    if (!test_part.empty()) save_jsonl(test_part, dir / "test.jsonl");
    save_ground_truth(data.truth, dir / "truth.json");

    double pos = 0;
    for (const Sample& s : data.samples) pos += s.label;
    pos /= static_cast<double>(data.samples.size());
    write_manifest(cfg, "generate",
                   json{{"train_file", (dir / "train.jsonl").string()},
                        {"test_file", test_part.empty() ? "" : (dir / "test.jsonl").string()},
                        {"truth_file", (dir / "truth.json").string()}},
                   dir);
    std::printf("generated %zu train + %zu test samples, positive rate %.4f\n",
                train_part.size(), test_part.size(), pos);
    std::printf("wrote %s\n", (dir / "train.jsonl").c_str());
    return 0;
}

AblationSwitches resolve_switches(const ExperimentConfig& cfg, const std::string& ablation) {
    if (ablation.empty()) return cfg.switches;
    for (const AblationRow& row : ablation_grid())
        if (row.name == ablation) return row.switches;
    std::string names;
    for (const AblationRow& row : ablation_grid()) names += " " + row.name;
    throw ConfigError("unknown ablation '" + ablation + "'; valid:" + names);
}

int cmd_train(const CommonArgs& args, const std::string& data_path,
              const std::string& eval_path, const std::string& resume_path,
              const std::string& ablation) {
    ExperimentConfig cfg = resolve_config(args);
    fs::path dir = ensure_out_dir(cfg);
    AblationSwitches switches = resolve_switches(cfg, ablation);

    std::vector<Sample> train_set = load_jsonl(data_path);
    std::vector<Sample> eval_set;
    if (!eval_path.empty()) eval_set = load_jsonl(eval_path);

    ModelParams params = ModelParams::init(cfg.model, cfg.seed);
    AdagradState state;
    if (!resume_path.empty()) load_checkpoint(params, state, resume_path);

    TrainResult result = train(params, state, train_set, eval_set, cfg.model, cfg.train,
                               switches, cfg.seed, dir);
    write_metrics_csv(result.history, dir / "metrics.csv");
    save_checkpoint(params, state, dir / "checkpoint.json");
    write_manifest(cfg, "train",
                   json{{"data", data_path},
                        {"eval_data", eval_path},
                        {"resume", resume_path},
                        {"ablation", ablation},
                        {"final_step", state.step},
                        {"skipped_anchors", result.skipped_anchors},
                        {"switches",
                         {{"use_csrl_loss", switches.use_csrl_loss},
                          {"use_cross_network", switches.use_cross_network},
                          {"use_stpe", switches.use_stpe},
                          {"use_stif", switches.use_stif}}}},
                   dir);

    const MetricsRow& last = result.history.back();
    std::printf("trained %lld steps; final l_total %.6f", static_cast<long long>(state.step),
                last.l_total);
    for (auto it = result.history.rbegin(); it != result.history.rend(); ++it)
        if (it->eval_auc) {
            std::printf("; eval auc %.4f", *it->eval_auc);
            break;
        }
    std::printf("\nwrote %s\n", (dir / "metrics.csv").c_str());
    return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint_path,
             const std::string& data_path, const std::string& ablation) {
    ExperimentConfig cfg = resolve_config(args);
    fs::path dir = ensure_out_dir(cfg);
    AblationSwitches switches = resolve_switches(cfg, ablation);

    std::vector<Sample> data = load_jsonl(data_path);
    ModelParams params = ModelParams::init(cfg.model, cfg.seed);
    AdagradState state;
    load_checkpoint(params, state, checkpoint_path);

    EvalResult r = evaluate(params, data, cfg.model, switches,
                            static_cast<int>(cfg.eval_threads));
    json j{{"auc", r.auc}, {"logloss", r.logloss}, {"n_pos", r.n_pos}, {"n_neg", r.n_neg}};
    std::ofstream out(dir / "eval.json");
    if (!out) throw DataError("cannot write " + (dir / "eval.json").string());
    out << j.dump(2) << '\n';
    write_manifest(cfg, "eval",
                   json{{"checkpoint", checkpoint_path}, {"data", data_path}}, dir);
    std::printf("auc %.6f  logloss %.6f  n_pos %lld  n_neg %lld\n", r.auc, r.logloss,
                static_cast<long long>(r.n_pos), static_cast<long long>(r.n_neg));
    return 0;
}

int cmd_ablate(const CommonArgs& args, const std::string& data_path,
               const std::string& test_path, std::optional<int64_t> n_seeds_flag,
               bool idempotent) {
    ExperimentConfig cfg = resolve_config(args);
    fs::path dir = ensure_out_dir(cfg);

    std::vector<Sample> train_set = load_jsonl(data_path);
    std::vector<Sample> test_set = load_jsonl(test_path);

    const int64_t n_seeds = n_seeds_flag.value_or(cfg.ablation_n_seeds);
    if (n_seeds < 1) throw ConfigError("--seeds must be >= 1");
    std::vector<uint64_t> seeds;
    for (int64_t i = 0; i < n_seeds; ++i) seeds.push_back(cfg.seed + static_cast<uint64_t>(i));

    const fs::path csv_path = dir / "ablation.csv";
    std::vector<AblationResult> existing;
    if (idempotent && fs::exists(csv_path)) {
        std::ifstream in(csv_path);
        std::string line;
        std::getline(in, line);  // header
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            AblationResult r;
            size_t p1 = line.find(','), p2 = line.find(',', p1 + 1),
                   p3 = line.find(',', p2 + 1), p4 = line.find(',', p3 + 1);
            if (p4 == std::string::npos)
                throw DataError(csv_path.string() + ": malformed row '" + line + "'");
            r.config = line.substr(0, p1);
            r.seed = std::stoull(line.substr(p1 + 1, p2 - p1 - 1));
            r.auc = std::stod(line.substr(p2 + 1, p3 - p2 - 1));
            r.logloss = std::stod(line.substr(p3 + 1, p4 - p3 - 1));
            r.wall_seconds = std::stod(line.substr(p4 + 1));
            existing.push_back(std::move(r));
        }
    }
    std::set<std::pair<std::string, uint64_t>> done;
    for (const AblationResult& r : existing) done.insert({r.config, r.seed});

    std::vector<AblationResult> results = existing;
    for (const AblationRow& row : ablation_grid()) {
        std::vector<uint64_t> todo;
        for (uint64_t s : seeds)
            if (!done.contains({row.name, s})) todo.push_back(s);
        if (todo.empty()) continue;
        std::vector<AblationRow> one{row};
        auto part = run_ablation_grid(train_set, test_set, one, todo, cfg.model, cfg.train);
        results.insert(results.end(), part.begin(), part.end());
        std::printf("%-20s done (%zu seeds)\n", row.name.c_str(), todo.size());
        std::fflush(stdout);
    }

    write_ablation_csv(results, csv_path);
    write_manifest(cfg, "ablate",
                   json{{"data", data_path},
                        {"test_data", test_path},
                        {"n_seeds", n_seeds},
                        {"rows", results.size()}},
                   dir);
    std::string summary = format_ablation_summary(results);
    std::fputs(summary.c_str(), stdout);
    std::printf("wrote %s\n", csv_path.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CSPM: contrastive spatiotemporal preference model for CTR prediction"};
    app.require_subcommand(1);

    CommonArgs gen_args, train_args, eval_args, ablate_args;

    CLI::App* generate = app.add_subcommand("generate", "Generate a synthetic dataset");
    add_common(generate, gen_args);

    CLI::App* train_cmd = app.add_subcommand("train", "Train a model on a JSONL dataset");
    add_common(train_cmd, train_args);
    std::string train_data, train_eval, train_resume, train_ablation;
    train_cmd->add_option("--data", train_data, "Training JSONL")->required();
    train_cmd->add_option("--eval-data", train_eval, "Held-out JSONL for periodic AUC");
    train_cmd->add_option("--resume", train_resume, "Checkpoint to resume from");
    train_cmd->add_option("--ablation", train_ablation,
                          "Named ablation row (see `ablate`), e.g. wo_CSRL");

    CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
    add_common(eval_cmd, eval_args);
    std::string eval_ckpt, eval_data, eval_ablation;
    eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint JSON")->required();
    eval_cmd->add_option("--data", eval_data, "Evaluation JSONL")->required();
    eval_cmd->add_option("--ablation", eval_ablation, "Named ablation row");

    CLI::App* ablate = app.add_subcommand("ablate", "Run the ablation grid");
    add_common(ablate, ablate_args);
    std::string ablate_data, ablate_test;
    std::optional<int64_t> ablate_seeds;
    bool ablate_idempotent = false;
    ablate->add_option("--data", ablate_data, "Training JSONL")->required();
    ablate->add_option("--test", ablate_test, "Test JSONL")->required();
    ablate->add_option("--seeds", ablate_seeds, "Number of seeds (base seed, +1, ...)");
    ablate->add_flag("--idempotent", ablate_idempotent,
                     "Skip (config, seed) pairs already present in ablation.csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (generate->parsed()) return cmd_generate(gen_args);
        if (train_cmd->parsed())
            return cmd_train(train_args, train_data, train_eval, train_resume, train_ablation);
        if (eval_cmd->parsed()) return cmd_eval(eval_args, eval_ckpt, eval_data, eval_ablation);
        if (ablate->parsed())
            return cmd_ablate(ablate_args, ablate_data, ablate_test, ablate_seeds,
                              ablate_idempotent);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numerical abort: %s\n", e.what());
        return 3;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
