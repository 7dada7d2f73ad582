// Microbenchmarks for the serial hot paths: tensor kernels, the three model
// modules, whole-sample forward/backward, one optimizer step, and the
// evaluation/mining loops. Run: ./cspm_bench --benchmark_min_time=0.5s

#include <benchmark/benchmark.h>

#include <vector>

#include "cspm/csrl.hpp"
#include "cspm/data.hpp"
#include "cspm/evaluation.hpp"
#include "cspm/model.hpp"
#include "cspm/stpe.hpp"
#include "cspm/tensor.hpp"
#include "cspm/trainer.hpp"

using namespace cspm;

namespace {

GeneratorConfig bench_gen() {
    GeneratorConfig g;
    g.n_users = 500;
    g.n_items = 600;
    g.samples = 4096;
    g.seed = 7;
    return g;
}

ModelConfig bench_model() {
    GeneratorConfig g = bench_gen();
    ModelConfig m;  // shipping defaults: d = 16, H = 2, T = 20
    m.vocabs = VocabSpec::from_generator(g);
    m.grid_size = g.grid_size;
    m.validate();
    return m;
}

const std::vector<Sample>& bench_data() {
    static std::vector<Sample> data = generate(bench_gen());
    return data;
}

}  // namespace

static void BM_MatMul64(benchmark::State& state) {
    Rng rng = make_rng(1, "bench");
    Tensor a = Tensor::uniform({64, 64}, -1, 1, rng);
    Tensor b = Tensor::uniform({64, 64}, -1, 1, rng);
    for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
}
BENCHMARK(BM_MatMul64);

static void BM_Softmax(benchmark::State& state) {
    Rng rng = make_rng(2, "bench");
    Tensor a = Tensor::uniform({64, 64}, -4, 4, rng);
    for (auto _ : state) benchmark::DoNotOptimize(softmax(a, -1));
}
BENCHMARK(BM_Softmax);

static void BM_CrossForward(benchmark::State& state) {
    Rng rng = make_rng(3, "bench");
    CrossNetworkParams p = CrossNetworkParams::init(2, 48, rng);
    Tensor x0 = Tensor::uniform({48}, -1, 1, rng);
    for (auto _ : state) benchmark::DoNotOptimize(encode_sar(x0, p));
}
BENCHMARK(BM_CrossForward);

static void BM_AttentionForward(benchmark::State& state) {
    Rng rng = make_rng(4, "bench");
    const int64_t T = 20;
    AttentionParams p = AttentionParams::init(2, 16, 80, 48, 64, rng);
    Tensor item = Tensor::uniform({80}, -1, 1, rng);
    Tensor sar = Tensor::uniform({48}, -1, 1, rng);
    Tensor seq = Tensor::uniform({T, 64}, -1, 1, rng);
    std::vector<bool> mask(T, true);
    for (auto _ : state) benchmark::DoNotOptimize(stpe_forward(item, sar, seq, mask, p));
}
BENCHMARK(BM_AttentionForward);

static void BM_ModelForward(benchmark::State& state) {
    ModelConfig cfg = bench_model();
    ModelParams params = ModelParams::init(cfg, 7);
    const Sample& s = bench_data()[0];
    AblationSwitches sw;
    for (auto _ : state) benchmark::DoNotOptimize(forward(s, params, cfg, sw));
}
BENCHMARK(BM_ModelForward);

static void BM_ModelForwardBackward(benchmark::State& state) {
    ModelConfig cfg = bench_model();
    ModelParams params = ModelParams::init(cfg, 7);
    const Sample& s = bench_data()[0];
    std::vector<real_t> label = {static_cast<real_t>(s.label)};
    AblationSwitches sw;
    for (auto _ : state) {
        ComputationGraph graph;
        GraphScope scope(graph);
        ForwardOutput out = forward(s, params, cfg, sw);
        Tensor loss = ctr_loss(out.logit, label);
        graph.backward(loss);
        benchmark::DoNotOptimize(loss.value());
    }
}
BENCHMARK(BM_ModelForwardBackward);

static void BM_TrainStep(benchmark::State& state) {
    ModelConfig cfg = bench_model();
    TrainConfig tcfg;
    tcfg.batch_size = 64;
    tcfg.eval_every = 0;
    std::span<const Sample> batch(bench_data().data(), 64);
    ModelParams params = ModelParams::init(cfg, 7);
    AdagradState opt;
    for (auto _ : state) benchmark::DoNotOptimize(
        train(params, opt, batch, {}, cfg, tcfg, AblationSwitches{}, 7));
    state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

static void BM_MinePairs(benchmark::State& state) {
    std::span<const Sample> batch(bench_data().data(), 256);
    TripletConfig cfg;
    for (auto _ : state) {
        Rng rng = make_rng(9, "bench-mine");
        benchmark::DoNotOptimize(mine_pairs(batch, cfg, 8, rng));
    }
}
BENCHMARK(BM_MinePairs);

static void BM_Auc20k(benchmark::State& state) {
    Rng rng = make_rng(5, "bench");
    std::vector<double> scores(20000);
    std::vector<int> labels(20000);
    for (size_t i = 0; i < scores.size(); ++i) {
        scores[i] = std::uniform_real_distribution<double>(0, 1)(rng);
        labels[i] = std::bernoulli_distribution(0.12)(rng) ? 1 : 0;
    }
    labels[0] = 1;
    labels[1] = 0;
    for (auto _ : state) benchmark::DoNotOptimize(auc(scores, labels));
}
BENCHMARK(BM_Auc20k);

static void BM_Generate1k(benchmark::State& state) {
    GeneratorConfig g = bench_gen();
    g.samples = 1000;
    for (auto _ : state) benchmark::DoNotOptimize(generate(g));
    state.SetItemsProcessed(state.iterations() * 1000);
}
BENCHMARK(BM_Generate1k)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
