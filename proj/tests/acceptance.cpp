// Acceptance gate: one self-contained case per shipping criterion, each
// printing a single PASS/FAIL summary line. Tolerances and dataset sizes are
// pinned here on purpose; loosening them is a release decision, not a test
// edit.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "cspm/config.hpp"
#include "cspm/csrl.hpp"
#include "cspm/data.hpp"
#include "cspm/embedding.hpp"
#include "cspm/evaluation.hpp"
#include "cspm/model.hpp"
#include "cspm/stif.hpp"
#include "cspm/stpe.hpp"
#include "cspm/tensor.hpp"
#include "cspm/trainer.hpp"
#include "oracles.hpp"

using namespace cspm;
namespace fs = std::filesystem;

namespace {

// ---- tunables --------------------------------------------------------------

constexpr int kGradSeeds = 20;

constexpr int64_t kNullTrain = 50000, kNullTest = 20000;
constexpr double kNullLr = 0.01;

constexpr int64_t kSignalTrain = 100000, kSignalTest = 20000;
constexpr int64_t kSignalEpochs = 2;
constexpr double kSignalLr = 0.05;

constexpr int64_t kAblTrain = 40000, kAblTest = 10000;
constexpr int64_t kAblEpochs = 1;
constexpr double kAblLr = 0.05;
constexpr uint64_t kAblSeeds[] = {1, 2, 3};

constexpr int64_t kSepTrain = 20000, kSepHeld = 5000;
constexpr double kSepLr = 0.05;

// ---- plumbing --------------------------------------------------------------

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double secs() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

void report(int criterion, bool pass, const std::string& detail, double secs) {
    std::printf("[criterion %d] %s  %s  (%.1f s)\n", criterion, pass ? "PASS" : "FAIL",
                detail.c_str(), secs);
    std::fflush(stdout);
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

fs::path tmp_dir(const std::string& sub) {
    fs::path p = fs::path(CSPM_TEST_TMPDIR) / "acceptance" / sub;
    fs::create_directories(p);
    return p;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

int run_cli(const std::string& args, const fs::path& log) {
    std::string cmd = std::string(CSPM_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

Tensor leaf(Rng& rng, Shape shape, real_t lo = -1, real_t hi = 1) {
    Tensor t = Tensor::uniform(std::move(shape), lo, hi, rng);
    t.set_requires_grad(true);
    return t;
}

// Uniform in +/-[0.2, 1.0]: keeps relu inputs away from the kink, where the
// two-sided difference quotient is not the derivative.
Tensor leaf_nonkink(Rng& rng, Shape shape) {
    Tensor t = Tensor::uniform(std::move(shape), 0.2, 1.0, rng);
    std::bernoulli_distribution flip(0.5);
    for (auto& v : t.mutable_data())
        if (flip(rng)) v = -v;
    t.set_requires_grad(true);
    return t;
}

ModelConfig desk_model(const GeneratorConfig& gen) {
    ModelConfig m;  // d = 16, T = 20, heads = 2: the shipping defaults
    m.vocabs = VocabSpec::from_generator(gen);
    m.grid_size = gen.grid_size;
    m.validate();
    return m;
}

// Mean cosine(anchor, positive) minus mean cosine(anchor, negative) over
// held-out batches with a pinned mining stream; evaluated without taping.
double sar_separation(ModelParams& p, std::span<const Sample> data, const ModelConfig& cfg) {
    double pos_sum = 0, neg_sum = 0;
    int64_t pos_n = 0, neg_n = 0;
    const int64_t B = 256;
    for (int64_t lo = 0; lo + B <= static_cast<int64_t>(data.size()); lo += B) {
        std::span<const Sample> batch = data.subspan(static_cast<size_t>(lo),
                                                     static_cast<size_t>(B));
        Rng rng = make_rng(1234, "separation:" + std::to_string(lo));
        MiningResult mined = mine_pairs(batch, cfg.triplet, cfg.grid_size, rng);
        std::map<int64_t, Tensor> cache;
        auto sar_of = [&](int64_t i) -> Tensor& {
            auto it = cache.find(i);
            if (it == cache.end()) {
                FieldEmbeddings fe =
                    embed_sample(batch[static_cast<size_t>(i)], p.emb, cfg.truncate_len);
                std::vector<Tensor> parts = {fe.query, fe.loc, fe.time};
                Tensor x0 = concat(parts, 0);
                it = cache.emplace(i, encode_sar(x0, p.cross)).first;
            }
            return it->second;
        };
        for (const MinedTriple& t : mined.triples) {
            pos_sum += cosine_similarity(sar_of(t.anchor), sar_of(t.positive)).value();
            ++pos_n;
            for (int64_t n : t.negatives) {
                neg_sum += cosine_similarity(sar_of(t.anchor), sar_of(n)).value();
                ++neg_n;
            }
        }
    }
    REQUIRE(pos_n > 0);
    REQUIRE(neg_n > 0);
    return pos_sum / static_cast<double>(pos_n) - neg_sum / static_cast<double>(neg_n);
}

}  // namespace

// ---- criterion 1 -----------------------------------------------------------

namespace {

struct FdCase {
    const char* name;
    double tol;
    std::function<oracle::FdReport(Rng&)> run;
};

std::vector<FdCase> op_cases() {
    using W = std::vector<std::pair<std::string, Tensor>>;
    std::vector<FdCase> cases;
    auto op = [&](const char* name, std::function<oracle::FdReport(Rng&)> fn) {
        cases.push_back({name, 1e-4, std::move(fn)});
    };

    op("add_broadcast", [](Rng& rng) {
        Tensor a = leaf(rng, {2, 3}), b = leaf(rng, {3});
        return oracle::check_gradients([&] { return sum(add(a, b)); }, W{{"a", a}, {"b", b}});
    });
    op("sub", [](Rng& rng) {
        Tensor a = leaf(rng, {4}), b = leaf(rng, {4});
        return oracle::check_gradients([&] { return sum(mul(sub(a, b), sub(a, b))); },
                                       W{{"a", a}, {"b", b}});
    });
    op("mul_broadcast", [](Rng& rng) {
        Tensor a = leaf(rng, {2, 3}), b = leaf(rng, {1});
        return oracle::check_gradients([&] { return sum(mul(a, b)); }, W{{"a", a}, {"b", b}});
    });
    op("relu", [](Rng& rng) {
        Tensor a = leaf_nonkink(rng, {3, 3});
        return oracle::check_gradients([&] { return mean(relu(a)); }, W{{"a", a}});
    });
    op("sigmoid", [](Rng& rng) {
        Tensor a = leaf(rng, {5});
        return oracle::check_gradients([&] { return sum(sigmoid(a)); }, W{{"a", a}});
    });
    op("tanh", [](Rng& rng) {
        Tensor a = leaf(rng, {5});
        return oracle::check_gradients([&] { return sum(tanh_op(a)); }, W{{"a", a}});
    });
    op("scale_add_scalar", [](Rng& rng) {
        Tensor a = leaf(rng, {6});
        return oracle::check_gradients(
            [&] { return sum(mul(scale(add_scalar(a, 0.7), 1.3), a)); }, W{{"a", a}});
    });
    op("matmul", [](Rng& rng) {
        Tensor a = leaf(rng, {3, 4}), b = leaf(rng, {4, 2});
        return oracle::check_gradients([&] { return sum(matmul(a, b)); },
                                       W{{"a", a}, {"b", b}});
    });
    op("matmul_rank1", [](Rng& rng) {
        Tensor u = leaf(rng, {4}), B = leaf(rng, {4, 2});
        Tensor A = leaf(rng, {3, 4}), v = leaf(rng, {4});
        Tensor x = leaf(rng, {5}), y = leaf(rng, {5});
        return oracle::check_gradients(
            [&] {
                return add(add(sum(matmul(u, B)), sum(matmul(A, v))), matmul(x, y));
            },
            W{{"u", u}, {"B", B}, {"A", A}, {"v", v}, {"x", x}, {"y", y}});
    });
    op("transpose", [](Rng& rng) {
        Tensor a = leaf(rng, {2, 5});
        return oracle::check_gradients([&] { return sum(mul(transpose(a), transpose(a))); },
                                       W{{"a", a}});
    });
    op("softmax", [](Rng& rng) {
        Tensor a = leaf(rng, {3, 4}), w = leaf(rng, {3, 4});
        return oracle::check_gradients([&] { return sum(mul(softmax(a, -1), w)); },
                                       W{{"a", a}, {"w", w}});
    });
    op("masked_softmax", [](Rng& rng) {
        Tensor a = leaf(rng, {6}), w = leaf(rng, {6});
        std::vector<bool> mask = {true, false, true, true, false, true};
        return oracle::check_gradients([&] { return sum(mul(masked_softmax(a, mask), w)); },
                                       W{{"a", a}, {"w", w}});
    });
    op("concat", [](Rng& rng) {
        Tensor a = leaf(rng, {2, 2}), b = leaf(rng, {2, 3}), c = leaf(rng, {2, 1});
        Tensor w = leaf(rng, {2, 6});
        return oracle::check_gradients(
            [&] {
                std::vector<Tensor> parts = {a, b, c};
                return sum(mul(concat(parts, 1), w));
            },
            W{{"a", a}, {"b", b}, {"c", c}, {"w", w}});
    });
    op("reshape", [](Rng& rng) {
        Tensor a = leaf(rng, {12});
        return oracle::check_gradients(
            [&] { return sum(mul(reshape(a, {3, 4}), reshape(a, {3, 4}))); }, W{{"a", a}});
    });
    op("gather_rows", [](Rng& rng) {
        Tensor table = leaf(rng, {6, 3}), w = leaf(rng, {4, 3});
        std::vector<int64_t> ids = {1, 4, 1, 5};
        return oracle::check_gradients([&] { return sum(mul(gather_rows(table, ids), w)); },
                                       W{{"table", table}, {"w", w}});
    });
    op("cosine_similarity", [](Rng& rng) {
        Tensor u = leaf(rng, {5}), v = leaf(rng, {5});
        return oracle::check_gradients([&] { return cosine_similarity(u, v); },
                                       W{{"u", u}, {"v", v}});
    });
    op("bce_with_logits", [](Rng& rng) {
        Tensor z = leaf(rng, {6}, -2, 2);
        std::vector<real_t> labels(6);
        std::bernoulli_distribution coin(0.5);
        for (auto& y : labels) y = coin(rng) ? 1.0 : 0.0;
        return oracle::check_gradients([&] { return bce_with_logits(z, labels); },
                                       W{{"z", z}});
    });
    op("mean", [](Rng& rng) {
        Tensor a = leaf(rng, {7});
        return oracle::check_gradients([&] { return mean(mul(a, a)); }, W{{"a", a}});
    });
    return cases;
}

std::vector<FdCase> module_cases() {
    using W = std::vector<std::pair<std::string, Tensor>>;
    std::vector<FdCase> cases;

    cases.push_back({"cross_network", 1e-3, [](Rng& rng) {
        CrossNetworkParams p = CrossNetworkParams::init(2, 6, rng);
        Tensor x0 = leaf(rng, {6}), w = leaf(rng, {6});
        W watched = {{"x0", x0}, {"w", w}};
        for (size_t l = 0; l < p.W.size(); ++l) {
            watched.emplace_back("W" + std::to_string(l), p.W[l]);
            watched.emplace_back("b" + std::to_string(l), p.b[l]);
        }
        return oracle::check_gradients([&] { return sum(mul(encode_sar(x0, p), w)); },
                                       watched);
    }});

    cases.push_back({"attention", 1e-3, [](Rng& rng) {
        const int64_t d_item = 3, d_s = 2, d_seq = 4, d_k = 3, H = 2, T = 4;
        AttentionParams p = AttentionParams::init(H, d_k, d_item, d_s, d_seq, rng);
        Tensor item = leaf(rng, {d_item}), sar = leaf(rng, {d_s});
        Tensor seq = leaf(rng, {T, d_seq});
        std::vector<bool> mask = {true, true, false, true};
        W watched = {{"item", item}, {"sar", sar}, {"seq", seq}};
        for (size_t h = 0; h < p.heads.size(); ++h) {
            watched.emplace_back("W_q" + std::to_string(h), p.heads[h].W_q);
            watched.emplace_back("W_k" + std::to_string(h), p.heads[h].W_k);
            watched.emplace_back("W_v" + std::to_string(h), p.heads[h].W_v);
        }
        return oracle::check_gradients(
            [&] {
                StpeOutput out = stpe_forward(item, sar, seq, mask, p);
                return sum(mul(out.u, out.u));
            },
            watched);
    }});

    cases.push_back({"gate", 1e-3, [](Rng& rng) {
        const int64_t n = 3, d_s = 4, d = 3;
        GateParams p = GateParams::init(n, d_s, d, 5, rng);
        for (auto& v : p.W2.mutable_data())
            v = std::uniform_real_distribution<real_t>(-0.5, 0.5)(rng);
        for (auto& v : p.b1.mutable_data()) v = 0.2;
        Tensor sar = leaf(rng, {d_s});
        std::vector<Tensor> z;
        for (int64_t j = 0; j < n; ++j) z.push_back(leaf(rng, {d}));
        W watched = {{"sar", sar}, {"z0", z[0]}, {"ids", p.feature_ids},
                     {"W1", p.W1},  {"b1", p.b1}, {"W2", p.W2},
                     {"b2", p.b2}};
        return oracle::check_gradients(
            [&] {
                GatedFeatures out = stif_forward(sar, z, p);
                return sum(mul(out.o, out.o));
            },
            watched);
    }});

    return cases;
}

oracle::FdReport model_e2e_case(uint64_t seed) {
    ModelConfig cfg;
    cfg.dim = 4;
    cfg.cross_layers = 2;
    cfg.heads = 1;
    cfg.d_k = 4;
    cfg.stif_hidden = 4;
    cfg.head_widths = {8, 4};
    cfg.truncate_len = 3;
    cfg.grid_size = 8;
    cfg.triplet.geo_mode = GeoMode::cell;
    VocabSpec v;
    v.user_id = 10;
    v.item_id = 20;
    v.category = 5;
    v.shop_id = 7;
    v.price_band = 6;
    v.subsidy = 3;
    v.geo_cell = 65;
    v.time_bucket = 49;
    v.query_token = 30;
    v.user_feats = {5, 4, 4};
    v.context_feats = {8, 3, 5, 2};
    cfg.vocabs = v;
    cfg.validate();

    auto mk = [](int64_t user, int64_t cell, int64_t ts, std::vector<int64_t> tokens,
                 int label) {
        Sample s;
        s.user_id = user;
        s.query_tokens = std::move(tokens);
        s.geohash_cell = cell;
        s.timestamp = ts;
        s.time_bucket = (ts % 86400) / kSecondsPerBucket;
        s.label = label;
        s.user_feats = {2, 1, 3};
        s.context_feats = {4, 1, 2, 1};
        s.candidate_item = {4, 2, 3, 2, 1};
        for (int e = 0; e < 2; ++e) {
            BehaviorEvent ev;
            ev.item_id = 3 + e;
            ev.category = 2;
            ev.geohash_cell = cell;
            ev.timestamp = 100 + 200 * e;
            ev.time_bucket = (ev.timestamp % 86400) / kSecondsPerBucket;
            s.behavior_seq.push_back(ev);
        }
        return s;
    };
    std::vector<Sample> batch = {mk(1, 5, 1000, {3}, 1), mk(2, 5, 1200, {3}, 0),
                                 mk(3, 40, 50000, {9}, 0), mk(4, 41, 70000, {12}, 1)};
    std::vector<real_t> labels;
    for (const Sample& s : batch) labels.push_back(static_cast<real_t>(s.label));

    ModelParams p = ModelParams::init(cfg, seed);
    AblationSwitches sw;
    auto build = [&] {
        std::vector<Tensor> logits, sars;
        for (const Sample& s : batch) {
            ForwardOutput out = forward(s, p, cfg, sw);
            logits.push_back(out.logit);
            sars.push_back(out.sar);
        }
        Tensor l_ctr = ctr_loss(concat(logits, 0), labels);
        Rng mining_rng = make_rng(99, "acc-mine");
        MiningResult mined = mine_pairs(batch, cfg.triplet, cfg.grid_size, mining_rng);
        std::vector<Tensor> anchors, positives;
        std::vector<std::vector<Tensor>> negatives;
        for (const MinedTriple& t : mined.triples) {
            anchors.push_back(sars[static_cast<size_t>(t.anchor)]);
            positives.push_back(sars[static_cast<size_t>(t.positive)]);
            std::vector<Tensor> negs;
            for (int64_t n : t.negatives) negs.push_back(sars[static_cast<size_t>(n)]);
            negatives.push_back(std::move(negs));
        }
        Tensor l_cl = triplet_loss(anchors, positives, negatives, cfg.triplet);
        return total_loss(l_ctr, l_cl, 0.6);
    };
    std::vector<std::pair<std::string, Tensor>> watched;
    p.for_each([&](const std::string& n, Tensor& t) { watched.emplace_back(n, t); });
    return oracle::check_gradients(build, watched);
}

}  // namespace

TEST_CASE("criterion 1: gradient suite") {
    Timer timer;
    double worst_op = 0, worst_module = 0, worst_e2e = 0;
    std::string worst_where;
    bool pass = true;

    for (const FdCase& c : op_cases()) {
        for (uint64_t seed = 0; seed < kGradSeeds; ++seed) {
            Rng rng = make_rng(seed, std::string("acc1:") + c.name);
            oracle::FdReport rep = c.run(rng);
            if (rep.max_rel_err > worst_op) {
                worst_op = rep.max_rel_err;
                worst_where = std::string(c.name) + "/" + rep.worst;
            }
            if (rep.max_rel_err >= c.tol) pass = false;
            CHECK_MESSAGE(rep.max_rel_err < c.tol, c.name, " seed ", seed, " worst ",
                          rep.worst);
        }
    }
    for (const FdCase& c : module_cases()) {
        for (uint64_t seed = 0; seed < kGradSeeds; ++seed) {
            Rng rng = make_rng(seed, std::string("acc1:") + c.name);
            oracle::FdReport rep = c.run(rng);
            worst_module = std::max(worst_module, rep.max_rel_err);
            if (rep.max_rel_err >= c.tol) pass = false;
            CHECK_MESSAGE(rep.max_rel_err < c.tol, c.name, " seed ", seed, " worst ",
                          rep.worst);
        }
    }
    for (uint64_t seed = 0; seed < kGradSeeds; ++seed) {
        oracle::FdReport rep = model_e2e_case(seed);
        worst_e2e = std::max(worst_e2e, rep.max_rel_err);
        if (rep.max_rel_err >= 1e-3) pass = false;
        CHECK_MESSAGE(rep.max_rel_err < 1e-3, "model seed ", seed, " worst ", rep.worst);
    }

    const double secs = timer.secs();
    if (secs >= 120.0) pass = false;
    report(1, pass,
           "worst_op=" + fmt(worst_op) + " worst_module=" + fmt(worst_module) +
               " worst_e2e=" + fmt(worst_e2e),
           secs);
    CHECK(secs < 120.0);
}

TEST_CASE("criterion 2: auc oracle equivalence") {
    Timer timer;
    Rng rng = make_rng(2026, "acc2");
    double worst = 0;
    for (int rep = 0; rep < 100; ++rep) {
        const int n = std::uniform_int_distribution<int>(2, 500)(rng);
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        const int levels = std::uniform_int_distribution<int>(1, 20)(rng);
        for (int i = 0; i < n; ++i) {
            scores[i] = std::uniform_int_distribution<int>(0, levels)(rng) /
                        static_cast<double>(levels);
            labels[i] = std::bernoulli_distribution(0.35)(rng) ? 1 : 0;
        }
        labels[0] = 1;
        labels[n - 1] = 0;
        worst = std::max(worst, std::fabs(auc(scores, labels) -
                                          oracle::pairwise_auc(scores, labels)));
    }
    const double secs = timer.secs();
    const bool pass = worst <= 1e-12 && secs < 30.0;
    report(2, pass, "instances=100 max_abs_diff=" + fmt(worst), secs);
    CHECK(worst <= 1e-12);
    CHECK(secs < 30.0);
}

TEST_CASE("criterion 3: pair-mining oracle equivalence") {
    Timer timer;
    Rng rng = make_rng(2026, "acc3");
    int64_t mismatches = 0, total_triples = 0, total_skipped = 0;

    for (int rep = 0; rep < 200; ++rep) {
        const int B = std::uniform_int_distribution<int>(2, 32)(rng);
        std::vector<Sample> batch(static_cast<size_t>(B));
        for (Sample& s : batch) {
            s.user_id = std::uniform_int_distribution<int64_t>(1, 5)(rng);
            s.geohash_cell = std::uniform_int_distribution<int64_t>(1, 64)(rng);
            s.timestamp = std::uniform_int_distribution<int64_t>(0, 7200)(rng);
            s.time_bucket = (s.timestamp % 86400) / kSecondsPerBucket;
            const int n_tokens = std::uniform_int_distribution<int>(1, 3)(rng);
            for (int t = 0; t < n_tokens; ++t)
                s.query_tokens.push_back(std::uniform_int_distribution<int64_t>(1, 6)(rng));
        }
        TripletConfig cfg;
        cfg.n_v = std::uniform_int_distribution<int64_t>(1, 6)(rng);
        cfg.geo_mode = (rep % 2 == 0) ? GeoMode::cell : GeoMode::region;

        Rng mine_rng = make_rng(static_cast<uint64_t>(rep), "acc3-mine");
        MiningResult result = mine_pairs(batch, cfg, 8, mine_rng);
        total_triples += static_cast<int64_t>(result.triples.size());
        total_skipped += result.skipped;

        // oracle replay: anchors in index order, canonical positive, negative
        // lists drawn from the failing pool with the exact size
        int64_t expected_skipped = 0;
        size_t t = 0;
        bool ok = true;
        for (size_t i = 0; i < batch.size() && ok; ++i) {
            auto expect = oracle::enumerate_pairs(batch, i, cfg, 8);
            const bool usable = expect.canonical >= 0 && !expect.negatives.empty();
            if (!usable) {
                ++expected_skipped;
                continue;
            }
            if (t >= result.triples.size()) {
                ok = false;
                break;
            }
            const MinedTriple& got = result.triples[t++];
            const size_t want_n =
                std::min<size_t>(static_cast<size_t>(cfg.n_v), expect.negatives.size());
            ok = got.anchor == static_cast<int64_t>(i) && got.positive == expect.canonical &&
                 got.negatives.size() == want_n;
            std::set<int64_t> uniq(got.negatives.begin(), got.negatives.end());
            ok = ok && uniq.size() == got.negatives.size();
            for (int64_t n : got.negatives)
                ok = ok && std::find(expect.negatives.begin(), expect.negatives.end(), n) !=
                               expect.negatives.end();
        }
        ok = ok && t == result.triples.size() && result.skipped == expected_skipped;
        if (!ok) ++mismatches;
        CHECK_MESSAGE(ok, "batch ", rep, " diverged from the enumeration oracle");
    }
    const double secs = timer.secs();
    const bool pass = mismatches == 0 && secs < 30.0;
    report(3, pass,
           "batches=200 mismatches=" + std::to_string(mismatches) +
               " triples=" + std::to_string(total_triples) +
               " skipped=" + std::to_string(total_skipped),
           secs);
    CHECK(mismatches == 0);
    CHECK(secs < 30.0);
    CHECK(total_triples > 0);
}

TEST_CASE("criterion 4: null-signal sanity") {
    Timer timer;
    GeneratorConfig gen;
    gen.spatiotemporal_signal = 0.0;
    gen.samples = kNullTrain + kNullTest;
    gen.seed = 42;
    std::vector<Sample> data = generate(gen);
    std::span<const Sample> train_set(data.data(), kNullTrain);
    std::span<const Sample> test_set(data.data() + kNullTrain, kNullTest);

    ModelConfig mcfg = desk_model(gen);
    TrainConfig tcfg;
    tcfg.lr0 = kNullLr;
    tcfg.eval_every = 0;
    ModelParams params = ModelParams::init(mcfg, 42);
    AdagradState state;
    train(params, state, train_set, {}, mcfg, tcfg, AblationSwitches{}, 42);

    const double test_auc = evaluate(params, test_set, mcfg, AblationSwitches{}).auc;
    const double secs = timer.secs();
    const bool pass = test_auc >= 0.48 && test_auc <= 0.52 && secs < 300.0;
    report(4, pass, "test_auc=" + fmt(test_auc) + " bounds=[0.48,0.52]", secs);
    CHECK(test_auc >= 0.48);
    CHECK(test_auc <= 0.52);
    CHECK(secs < 300.0);
}

TEST_CASE("criterion 5: signal recovery") {
    Timer timer;
    GeneratorConfig gen;  // signal = 1, sharpness = 4 are the defaults
    gen.samples = kSignalTrain + kSignalTest;
    gen.seed = 42;
    GeneratedData data = generate_with_truth(gen);
    std::span<const Sample> train_set(data.samples.data(), kSignalTrain);
    std::span<const Sample> test_set(data.samples.data() + kSignalTrain, kSignalTest);

    std::vector<double> bayes_scores(kSignalTest);
    std::vector<int> labels(kSignalTest);
    for (int64_t i = 0; i < kSignalTest; ++i) {
        bayes_scores[i] = data.truth.true_logits[static_cast<size_t>(kSignalTrain + i)];
        labels[i] = test_set[static_cast<size_t>(i)].label;
    }
    const double bayes_auc = auc(bayes_scores, labels);

    ModelConfig mcfg = desk_model(gen);
    TrainConfig tcfg;
    tcfg.lr0 = kSignalLr;
    tcfg.epochs = kSignalEpochs;
    tcfg.eval_every = 0;
    ModelParams params = ModelParams::init(mcfg, 42);
    AdagradState state;
    train(params, state, train_set, {}, mcfg, tcfg, AblationSwitches{}, 42);

    const double test_auc = evaluate(params, test_set, mcfg, AblationSwitches{}).auc;
    const double secs = timer.secs();
    const bool pass = test_auc >= bayes_auc - 0.15 && secs < 600.0;
    report(5, pass, "test_auc=" + fmt(test_auc) + " bayes_auc=" + fmt(bayes_auc) +
                        " floor=" + fmt(bayes_auc - 0.15),
           secs);
    CHECK(test_auc >= bayes_auc - 0.15);
    CHECK(secs < 600.0);
}

TEST_CASE("criterion 6: ablation ordering") {
    Timer timer;
    GeneratorConfig gen;
    gen.samples = kAblTrain + kAblTest;
    gen.seed = 42;
    std::vector<Sample> data = generate(gen);
    std::span<const Sample> train_set(data.data(), kAblTrain);
    std::span<const Sample> test_set(data.data() + kAblTrain, kAblTest);

    ModelConfig mcfg = desk_model(gen);
    TrainConfig tcfg;
    tcfg.lr0 = kAblLr;
    tcfg.epochs = kAblEpochs;
    tcfg.eval_every = 0;

    std::vector<AblationRow> grid = ablation_grid();
    std::vector<uint64_t> seeds(std::begin(kAblSeeds), std::end(kAblSeeds));
    std::vector<AblationResult> rows =
        run_ablation_grid(train_set, test_set, grid, seeds, mcfg, tcfg);

    std::map<std::string, double> mean_auc;
    for (const AblationResult& r : rows) mean_auc[r.config] += r.auc / 3.0;
    std::printf("%s", format_ablation_summary(rows).c_str());

    const double full = mean_auc.at("full");
    const double all_off = mean_auc.at("wo_CSRL_StPE_StIF");
    const double wo_csrl = mean_auc.at("wo_CSRL");
    const double wo_stpe = mean_auc.at("wo_StPE");
    const double wo_stif = mean_auc.at("wo_StIF");

    // required inequalities; an inversion is a violated one
    struct Ineq {
        const char* name;
        double lhs, rhs;  // want lhs >= rhs
    };
    std::vector<Ineq> ineqs = {
        {"full>=wo_CSRL", full, wo_csrl},
        {"full>=wo_StPE", full, wo_stpe},
        {"full>=wo_StIF", full, wo_stif},
        {"wo_CSRL>=all_off", wo_csrl, all_off},
        {"wo_StPE>=all_off", wo_stpe, all_off},
        {"wo_StIF>=all_off", wo_stif, all_off},
        {"wo_StIF>=wo_CSRL", wo_stif, wo_csrl},  // CSRL removal hurts at least as much
    };
    int inversions = 0;
    double worst_inversion = 0;
    std::string inverted;
    for (const Ineq& q : ineqs) {
        if (q.lhs < q.rhs) {
            ++inversions;
            worst_inversion = std::max(worst_inversion, q.rhs - q.lhs);
            inverted += std::string(inverted.empty() ? "" : ",") + q.name;
        }
    }
    const double gap = full - all_off;
    const double secs = timer.secs();
    const bool order_ok =
        inversions == 0 || (inversions == 1 && worst_inversion < 0.002);
    const bool pass = order_ok && gap > 0.005 && secs < 5400.0;
    report(6, pass,
           "full=" + fmt(full) + " wo_CSRL=" + fmt(wo_csrl) + " wo_StPE=" + fmt(wo_stpe) +
               " wo_StIF=" + fmt(wo_stif) + " all_off=" + fmt(all_off) + " gap=" + fmt(gap) +
               " inversions=" + std::to_string(inversions) +
               (inverted.empty() ? "" : " (" + inverted + " by " + fmt(worst_inversion) + ")"),
           secs);
    CHECK(order_ok);
    CHECK(gap > 0.005);
    CHECK(secs < 5400.0);
}

TEST_CASE("criterion 7: contrastive separation") {
    Timer timer;
    GeneratorConfig gen;
    gen.samples = kSepTrain + kSepHeld;
    gen.seed = 42;
    std::vector<Sample> data = generate(gen);
    std::span<const Sample> train_set(data.data(), kSepTrain);
    std::span<const Sample> held(data.data() + kSepTrain, kSepHeld);

    ModelConfig mcfg = desk_model(gen);
    mcfg.alpha = 0.0;  // contrastive objective only
    ModelParams params = ModelParams::init(mcfg, 42);

    const double before = sar_separation(params, held, mcfg);

    TrainConfig tcfg;
    tcfg.lr0 = kSepLr;
    tcfg.epochs = 1;
    tcfg.eval_every = 0;
    AdagradState state;
    train(params, state, train_set, {}, mcfg, tcfg, AblationSwitches{}, 42);

    const double after = sar_separation(params, held, mcfg);
    const double gain = after - before;
    const double secs = timer.secs();
    const bool pass = gain >= 0.1 && secs < 300.0;
    report(7, pass,
           "before=" + fmt(before) + " after=" + fmt(after) + " gain=" + fmt(gain) +
               " floor=0.1",
           secs);
    CHECK(gain >= 0.1);
    CHECK(secs < 300.0);
}

TEST_CASE("criterion 8: determinism") {
    Timer timer;
    fs::path dir = tmp_dir("criterion8");
    fs::path cfg_path = dir / "config.toml";
    {
        std::ofstream out(cfg_path, std::ios::binary);
        out << "seed = 42\n"
               "[generator]\n"
               "n_users = 200\n"
               "n_items = 300\n"
               "samples = 2000\n"
               "test_samples = 500\n"
               "[embedding]\n"
               "dim = 8\n"
               "[stpe]\n"
               "d_k = 8\n"
               "[model]\n"
               "head_widths = [16, 8]\n"
               "truncate_len = 10\n"
               "[train]\n"
               "batch_size = 128\n"
               "eval_every = 5\n";
    }
    fs::path gen_dir = dir / "data";
    REQUIRE(run_cli("generate --config " + cfg_path.string() + " --out " + gen_dir.string(),
                    dir / "gen.log") == 0);
    fs::path run_a = dir / "run_a", run_b = dir / "run_b";
    std::string train_args = "train --config " + cfg_path.string() + " --data " +
                             (gen_dir / "train.jsonl").string() + " --eval-data " +
                             (gen_dir / "test.jsonl").string();
    REQUIRE(run_cli(train_args + " --out " + run_a.string(), dir / "a.log") == 0);
    REQUIRE(run_cli(train_args + " --out " + run_b.string(), dir / "b.log") == 0);

    std::string csv_a = read_file(run_a / "metrics.csv");
    std::string csv_b = read_file(run_b / "metrics.csv");
    const double secs = timer.secs();
    const bool pass = !csv_a.empty() && csv_a == csv_b;
    report(8, pass,
           "bytes=" + std::to_string(csv_a.size()) +
               (pass ? " identical" : " NOT identical"),
           secs);
    REQUIRE_FALSE(csv_a.empty());
    CHECK(csv_a == csv_b);
}

TEST_CASE("criterion 9: loss spot checks") {
    Timer timer;
    bool pass = true;

    // chance-level prediction costs exactly ln 2
    std::vector<real_t> labels = {0, 1, 1, 0};
    const double ln2_err =
        std::fabs(ctr_loss(Tensor::zeros({4}), labels).value() - std::log(2.0));
    pass = pass && ln2_err <= 1e-9;
    CHECK(ln2_err <= 1e-9);

    // the same through an untrained zero-head model
    ModelConfig mcfg;
    mcfg.dim = 4;
    mcfg.heads = 1;
    mcfg.d_k = 4;
    mcfg.stif_hidden = 4;
    mcfg.head_widths = {8, 4};
    mcfg.truncate_len = 3;
    GeneratorConfig tiny_gen;
    tiny_gen.n_users = 10;
    tiny_gen.n_items = 20;
    tiny_gen.samples = 4;
    mcfg.vocabs = VocabSpec::from_generator(tiny_gen);
    mcfg.grid_size = tiny_gen.grid_size;
    mcfg.validate();
    ModelParams params = ModelParams::init(mcfg, 1);
    AblationSwitches off;
    off.use_csrl_loss = false;
    off.use_cross_network = false;
    off.use_stpe = false;
    off.use_stif = false;
    for (auto& W : params.head.W)
        for (auto& v : W.mutable_data()) v = 0.0;
    for (auto& b : params.head.b)
        for (auto& v : b.mutable_data()) v = 0.0;
    Sample s = generate(tiny_gen)[0];
    ForwardOutput out = forward(s, params, mcfg, off);
    pass = pass && out.yhat == 0.5;
    CHECK(out.yhat == 0.5);
    std::vector<real_t> one = {1.0};
    const double model_ln2_err =
        std::fabs(ctr_loss(out.logit, one).value() - std::log(2.0));
    pass = pass && model_ln2_err <= 1e-9;
    CHECK(model_ln2_err <= 1e-9);

    // alpha boundaries are exact, not approximate
    Tensor ctr = Tensor::scalar(0.7), cl = Tensor::scalar(0.3);
    pass = pass && total_loss(ctr, cl, 1.0).value() == 0.7;
    pass = pass && total_loss(ctr, cl, 0.0).value() == 0.3;
    CHECK(total_loss(ctr, cl, 1.0).value() == 0.7);
    CHECK(total_loss(ctr, cl, 0.0).value() == 0.3);

    // perfectly separated triplet: hinge exactly zero
    Tensor anchor = Tensor::from({2}, {1.0, 0.0});
    Tensor positive = Tensor::from({2}, {2.0, 0.0});    // cos = +1
    Tensor negative = Tensor::from({2}, {-1.0, 0.0});   // cos = -1
    std::vector<Tensor> anchors = {anchor}, positives = {positive};
    std::vector<std::vector<Tensor>> negatives = {{negative}};
    TripletConfig tc;
    tc.margin = 0.2;
    const double hinge = triplet_loss(anchors, positives, negatives, tc).value();
    pass = pass && hinge == 0.0;
    CHECK(hinge == 0.0);

    report(9, pass,
           "ln2_err=" + fmt(ln2_err) + " model_ln2_err=" + fmt(model_ln2_err) +
               " hinge=" + fmt(hinge),
           timer.secs());
}
