#include "cspm/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "cspm/csrl.hpp"
#include "cspm/errors.hpp"
#include "cspm/evaluation.hpp"

namespace cspm {

using nlohmann::json;

void TrainConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("train: " + msg); };
    if (batch_size < 4) fail("batch_size must be >= 4 (pair mining needs partners)");
    if (epochs < 1) fail("epochs must be >= 1");
    if (lr0 <= 0) fail("lr0 must be > 0");
    if (decay_rate <= 0 || decay_rate > 1) fail("decay_rate must be in (0, 1]");
    if (decay_steps < 1) fail("decay_steps must be >= 1");
    if (eval_every < 0) fail("eval_every must be >= 0");
}

double lr_at(int64_t step, const TrainConfig& cfg) {
    return cfg.lr0 * std::pow(cfg.decay_rate,
                              static_cast<double>(step) / static_cast<double>(cfg.decay_steps));
}

void adagrad_step(ModelParams& params, AdagradState& state, const TrainConfig& cfg) {
    const real_t lr = static_cast<real_t>(lr_at(state.step, cfg));
    constexpr real_t eps = static_cast<real_t>(1e-8);
    params.for_each([&](const std::string& name, Tensor& t) {
        auto& grad = t.mutable_grad();
        if (grad.empty()) return;  // parameter untouched this step
        auto& data = t.mutable_data();
        auto& G = state.accum[name];
        if (G.empty()) G.assign(data.size(), 0);
        // Embedding tables never update their padding row 0.
        size_t begin = 0;
        if (name.rfind("emb.", 0) == 0) begin = static_cast<size_t>(t.dim(1));
        for (size_t k = begin; k < data.size(); ++k) {
            const real_t g = grad[k];
            if (!std::isfinite(g))
                throw NumericError("adagrad: NaN/Inf gradient in parameter " + name);
            G[k] += g * g;
            data[k] -= lr * g / (std::sqrt(G[k]) + eps);
        }
    });
    ++state.step;
}

namespace {

std::string fmt_num(double v) {
    char buf[40];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

}  // namespace

void write_metrics_csv(const MetricsHistory& history, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("write_metrics_csv: cannot open " + path.string());
    out << "step,l_ctr,l_cl,l_total,lr,eval_auc\n";
    for (const MetricsRow& r : history) {
        out << r.step << ',' << fmt_num(r.l_ctr) << ',' << fmt_num(r.l_cl) << ','
            << fmt_num(r.l_total) << ',' << fmt_num(r.lr) << ',';
        if (r.eval_auc) out << fmt_num(*r.eval_auc);
        out << '\n';
    }
    if (!out) throw DataError("write_metrics_csv: write failed for " + path.string());
}

TrainResult train(ModelParams& params, AdagradState& state, std::span<const Sample> train_set,
                  std::span<const Sample> eval_set, const ModelConfig& mcfg,
                  const TrainConfig& tcfg, const AblationSwitches& switches, uint64_t seed,
                  const std::filesystem::path& checkpoint_dir) {
    tcfg.validate();
    mcfg.validate();
    if (train_set.empty()) throw ConfigError("train: dataset is empty");
    if (static_cast<int64_t>(train_set.size()) < tcfg.batch_size)
        throw ConfigError("train: dataset smaller than one batch (" +
                          std::to_string(train_set.size()) + " < " +
                          std::to_string(tcfg.batch_size) + ")");

    // The contrastive term only enters when its switch is on and alpha leaves
    // it any weight; otherwise that code path is skipped entirely.
    const bool compute_cl = switches.use_csrl_loss && mcfg.alpha < 1.0;

    TrainResult result;
    std::vector<int64_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    for (int64_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
        Rng shuffle_rng = make_rng(seed, "shuffle:" + std::to_string(epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        const int64_t n_batches =
            (static_cast<int64_t>(order.size()) + tcfg.batch_size - 1) / tcfg.batch_size;

        for (int64_t b = 0; b < n_batches; ++b) {
            const int64_t lo = b * tcfg.batch_size;
            const int64_t hi = std::min<int64_t>(lo + tcfg.batch_size,
                                                 static_cast<int64_t>(order.size()));
            std::vector<Sample> batch;
            batch.reserve(static_cast<size_t>(hi - lo));
            for (int64_t k = lo; k < hi; ++k)
                batch.push_back(train_set[static_cast<size_t>(order[static_cast<size_t>(k)])]);

            params.for_each([](const std::string&, Tensor& t) { t.mutable_grad().clear(); });

            ComputationGraph graph;
            GraphScope scope_guard(graph);

            std::vector<Tensor> logits, sars;
            std::vector<real_t> labels;
            logits.reserve(batch.size());
            sars.reserve(batch.size());
            labels.reserve(batch.size());
            for (const Sample& s : batch) {
                ForwardOutput f = forward(s, params, mcfg, switches);
                logits.push_back(f.logit);
                sars.push_back(f.sar);
                labels.push_back(static_cast<real_t>(s.label));
            }
            Tensor l_ctr = ctr_loss(concat(logits, 0), labels);

            Tensor l_cl = Tensor::scalar(0);
            if (compute_cl) {
                Rng mine_rng = make_rng(seed, "mining:" + std::to_string(state.step));
                MiningResult mined = mine_pairs(batch, mcfg.triplet, mcfg.grid_size, mine_rng);
                result.skipped_anchors += mined.skipped;
                std::vector<Tensor> anchors, positives;
                std::vector<std::vector<Tensor>> negatives;
                for (const MinedTriple& t : mined.triples) {
                    anchors.push_back(sars[static_cast<size_t>(t.anchor)]);
                    positives.push_back(sars[static_cast<size_t>(t.positive)]);
                    std::vector<Tensor> negs;
                    for (int64_t j : t.negatives) negs.push_back(sars[static_cast<size_t>(j)]);
                    negatives.push_back(std::move(negs));
                }
                l_cl = triplet_loss(anchors, positives, negatives, mcfg.triplet);
            }

            Tensor l_total = compute_cl ? total_loss(l_ctr, l_cl, mcfg.alpha) : l_ctr;
            graph.backward(l_total);
            adagrad_step(params, state, tcfg);

            MetricsRow row;
            row.step = state.step;
            row.l_ctr = static_cast<double>(l_ctr.value());
            row.l_cl = static_cast<double>(l_cl.value());
            row.l_total = static_cast<double>(l_total.value());
            row.lr = lr_at(state.step - 1, tcfg);

            const bool last_in_epoch = b + 1 == n_batches;
            const bool eval_now =
                (tcfg.eval_every > 0 && state.step % tcfg.eval_every == 0) || last_in_epoch;
            if (eval_now && !eval_set.empty()) {
                row.eval_auc = evaluate(params, eval_set, mcfg, switches).auc;
                if (!checkpoint_dir.empty())
                    save_checkpoint(params, state, checkpoint_dir / "checkpoint.json");
            }
            result.history.push_back(row);
        }
    }
    return result;
}

// ---- checkpoints -----------------------------------------------------------

void save_checkpoint(ModelParams& params, const AdagradState& state,
                     const std::filesystem::path& path) {
    json j;
    j["format_version"] = 1;
    j["step"] = state.step;
    json p = json::object();
    params.for_each([&](const std::string& name, Tensor& t) {
        p[name] = {{"shape", t.shape()},
                   {"data", std::vector<double>(t.data().begin(), t.data().end())}};
    });
    j["params"] = std::move(p);
    json a = json::object();
    for (const auto& [name, G] : state.accum)
        a[name] = std::vector<double>(G.begin(), G.end());
    j["adagrad"] = std::move(a);
    std::ofstream out(path);
    if (!out) throw DataError("save_checkpoint: cannot open " + path.string());
    out << j.dump() << '\n';
    if (!out) throw DataError("save_checkpoint: write failed for " + path.string());
}

void load_checkpoint(ModelParams& params, AdagradState& state,
                     const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_checkpoint: cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw DataError(path.string() + ": parse error: " + e.what());
    }
    if (!j.contains("params") || !j["params"].is_object())
        throw DataError("load_checkpoint: missing params object");
    const json& p = j["params"];
    params.for_each([&](const std::string& name, Tensor& t) {
        auto it = p.find(name);
        if (it == p.end())
            throw DataError("load_checkpoint: tensor " + name + " missing from checkpoint");
        Shape shape = it->at("shape").get<Shape>();
        if (shape != t.shape())
            throw DataError("load_checkpoint: tensor " + name + " has shape " +
                            shape_str(shape) + ", expected " + shape_str(t.shape()));
        auto data = it->at("data").get<std::vector<double>>();
        if (data.size() != t.mutable_data().size())
            throw DataError("load_checkpoint: tensor " + name + " has wrong element count");
        std::copy(data.begin(), data.end(), t.mutable_data().begin());
    });
    state.accum.clear();
    if (j.contains("adagrad"))
        for (const auto& [name, arr] : j["adagrad"].items()) {
            auto v = arr.get<std::vector<double>>();
            state.accum[name].assign(v.begin(), v.end());
        }
    state.step = j.value("step", 0);
    params.for_each([](const std::string& name, Tensor& t) { t.check_finite(name); });
}

}  // namespace cspm
