#include "cspm/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cspm/rng.hpp"

namespace cspm {

namespace {

// Concentration of the softmax distributions that drive where users show up
// (context), what they look for there (intent), and what their history shows.
constexpr double kContextSharpness = 2.0;
constexpr double kSeqContextSharpness = 3.0;
constexpr double kIntentSharpness = 2.5;
constexpr double kSeqIntentSharpness = 3.5;
constexpr double kRecallQuality = 0.8;   // P(candidate drawn from the intended category)
constexpr double kGenericTokenProb = 0.5;
constexpr int64_t kTasteDim = 8;
constexpr double kGlobalMix = 0.5;       // weight of the shared pattern in each affinity
constexpr int64_t kHistoryDays = 30;     // behavior events span this window before day 0
constexpr int64_t kSecondsPerDay = kSecondsPerBucket * kBucketsPerDay;

double u01(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

int64_t uint_below(Rng& rng, int64_t n) {
    return std::uniform_int_distribution<int64_t>(0, n - 1)(rng);
}

// Cumulative softmax table; sampling is a linear scan, sizes are small.
struct CumDist {
    std::vector<double> cum;

    static CumDist from_scores(std::span<const double> scores, double sharpness) {
        CumDist d;
        d.cum.resize(scores.size());
        double max_s = *std::max_element(scores.begin(), scores.end());
        double acc = 0.0;
        for (size_t i = 0; i < scores.size(); ++i) {
            acc += std::exp(sharpness * (scores[i] - max_s));
            d.cum[i] = acc;
        }
        return d;
    }

    int64_t sample(Rng& rng) const {
        double x = u01(rng) * cum.back();
        auto it = std::upper_bound(cum.begin(), cum.end(), x);
        if (it == cum.end()) --it;
        return static_cast<int64_t>(it - cum.begin());
    }
};

struct RegionGeometry {
    int64_t grid, half;

    explicit RegionGeometry(int64_t grid_size) : grid(grid_size), half(grid_size / 2) {}

    int64_t sample_cell(int64_t region, Rng& rng) const {
        int64_t row0 = (region & 2) ? half : 0;
        int64_t col0 = (region & 1) ? half : 0;
        int64_t rows = (region & 2) ? grid - half : half;
        int64_t cols = (region & 1) ? grid - half : half;
        int64_t row = row0 + uint_below(rng, rows);
        int64_t col = col0 + uint_below(rng, cols);
        return row * grid + col + 1;
    }
};

}  // namespace

GeneratedData generate_with_truth(const GeneratorConfig& cfg) {
    cfg.validate();
    const int64_t U = cfg.n_users, C = cfg.n_categories, R = kRegions, P = kPeriods;
    const int64_t cells = R * P * C;

    Rng affinity_rng = make_rng(cfg.seed, "affinity");
    Rng taste_rng = make_rng(cfg.seed, "taste");
    Rng item_rng = make_rng(cfg.seed, "items");
    Rng profile_rng = make_rng(cfg.seed, "profile");
    Rng sample_rng = make_rng(cfg.seed, "sampling");
    Rng label_rng = make_rng(cfg.seed, "labels");
    std::normal_distribution<double> gauss(0.0, 1.0);

    // Shared spatiotemporal pattern plus a per-user component, equally mixed and
    // standardized so preference_sharpness means the same thing at any mix.
    std::vector<double> global_pat(static_cast<size_t>(cells));
    for (double& v : global_pat) v = gauss(affinity_rng);
    std::vector<double> affinity(static_cast<size_t>(U * cells));
    const double norm = 1.0 / std::sqrt(kGlobalMix * kGlobalMix +
                                        (1.0 - kGlobalMix) * (1.0 - kGlobalMix));
    for (int64_t u = 0; u < U; ++u) {
        double* a = affinity.data() + u * cells;
        for (int64_t k = 0; k < cells; ++k)
            a[k] = norm * (kGlobalMix * global_pat[static_cast<size_t>(k)] +
                           (1.0 - kGlobalMix) * gauss(affinity_rng));
    }

    // Idiosyncratic user-by-item taste, low rank so it stays learnable.
    std::vector<double> user_taste(static_cast<size_t>(U * kTasteDim));
    for (double& v : user_taste) v = gauss(taste_rng);
    std::vector<double> item_taste(static_cast<size_t>(cfg.n_items * kTasteDim));
    for (double& v : item_taste) v = gauss(taste_rng);
    auto taste = [&](int64_t u, int64_t item) {
        const double* a = user_taste.data() + (u - 1) * kTasteDim;
        const double* b = item_taste.data() + (item - 1) * kTasteDim;
        double dot = 0.0;
        for (int64_t k = 0; k < kTasteDim; ++k) dot += a[k] * b[k];
        return cfg.taste_scale * dot / std::sqrt(static_cast<double>(kTasteDim));
    };

    // Item catalogue. Round-robin categories guarantee every category is populated.
    std::vector<ItemFeatures> items(static_cast<size_t>(cfg.n_items));
    std::vector<std::vector<int64_t>> items_by_cat(static_cast<size_t>(C + 1));
    for (int64_t i = 1; i <= cfg.n_items; ++i) {
        ItemFeatures& it = items[static_cast<size_t>(i - 1)];
        it.item_id = i;
        it.category = 1 + (i - 1) % C;
        it.shop_id = 1 + uint_below(item_rng, cfg.n_shops);
        it.price_band = 1 + uint_below(item_rng, 5);
        it.subsidy_flag = u01(item_rng) < 0.3 ? 2 : 1;
        items_by_cat[static_cast<size_t>(it.category)].push_back(i);
    }

    // User profiles. Segment reflects taste, activity scales history length.
    std::vector<int64_t> activity(static_cast<size_t>(U)), price_pref(static_cast<size_t>(U));
    for (int64_t u = 0; u < U; ++u) {
        activity[static_cast<size_t>(u)] = 1 + uint_below(profile_rng, 3);
        price_pref[static_cast<size_t>(u)] = 1 + uint_below(profile_rng, 3);
    }
    auto segment = [&](int64_t u) {
        const double* a = user_taste.data() + (u - 1) * kTasteDim;
        return 1 + (a[0] > 0 ? 1 : 0) + (a[1] > 0 ? 2 : 0);
    };

    // Where each user tends to be (over region x period) and what they want
    // there (over categories), at impression and history concentrations.
    std::vector<CumDist> ctx_dist(static_cast<size_t>(U)), seq_ctx_dist(static_cast<size_t>(U));
    std::vector<CumDist> intent_dist(static_cast<size_t>(U * R * P));
    std::vector<CumDist> seq_intent_dist(static_cast<size_t>(U * R * P));
    {
        std::vector<double> rp_scores(static_cast<size_t>(R * P));
        for (int64_t u = 0; u < U; ++u) {
            const double* a = affinity.data() + u * cells;
            for (int64_t rp = 0; rp < R * P; ++rp) {
                const double* cat = a + rp * C;
                rp_scores[static_cast<size_t>(rp)] = *std::max_element(cat, cat + C);
                std::span<const double> cat_span(cat, static_cast<size_t>(C));
                intent_dist[static_cast<size_t>(u * R * P + rp)] =
                    CumDist::from_scores(cat_span, kIntentSharpness);
                seq_intent_dist[static_cast<size_t>(u * R * P + rp)] =
                    CumDist::from_scores(cat_span, kSeqIntentSharpness);
            }
            ctx_dist[static_cast<size_t>(u)] = CumDist::from_scores(rp_scores, kContextSharpness);
            seq_ctx_dist[static_cast<size_t>(u)] =
                CumDist::from_scores(rp_scores, kSeqContextSharpness);
        }
    }

    // Region load bands: rank the shared pattern's region-period popularity.
    std::vector<int64_t> region_load(static_cast<size_t>(R * P));
    {
        std::vector<double> pop(static_cast<size_t>(R * P), 0.0);
        for (int64_t rp = 0; rp < R * P; ++rp) {
            const double* cat = global_pat.data() + rp * C;
            pop[static_cast<size_t>(rp)] =
                std::accumulate(cat, cat + C, 0.0) / static_cast<double>(C);
        }
        std::vector<int64_t> order(pop.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int64_t x, int64_t y) { return pop[static_cast<size_t>(x)] <
                                                            pop[static_cast<size_t>(y)]; });
        for (size_t rank = 0; rank < order.size(); ++rank)
            region_load[static_cast<size_t>(order[rank])] =
                1 + static_cast<int64_t>(rank * 4 / order.size());
    }

    RegionGeometry geo(cfg.grid_size);
    const double signal = cfg.spatiotemporal_signal;

    GeneratedData out;
    out.samples.resize(static_cast<size_t>(cfg.samples));
    std::vector<double> raw_logits(static_cast<size_t>(cfg.samples));

    for (int64_t i = 0; i < cfg.samples; ++i) {
        Sample& s = out.samples[static_cast<size_t>(i)];
        const int64_t u = 1 + uint_below(sample_rng, U);
        s.user_id = u;

        // Impression context: affinity-driven with probability `signal`.
        int64_t rp = u01(sample_rng) < signal
                         ? ctx_dist[static_cast<size_t>(u - 1)].sample(sample_rng)
                         : uint_below(sample_rng, R * P);
        const int64_t region = rp / P, period = rp % P;
        s.geohash_cell = geo.sample_cell(region, sample_rng);
        const int64_t day = kHistoryDays + uint_below(sample_rng, cfg.horizon_days);
        s.time_bucket = period * kBucketsPerPeriod + uint_below(sample_rng, kBucketsPerPeriod);
        s.timestamp = day * kSecondsPerDay + s.time_bucket * kSecondsPerBucket +
                      uint_below(sample_rng, kSecondsPerBucket);

        // Intent, query, candidate.
        const int64_t intent =
            u01(sample_rng) < signal
                ? 1 + intent_dist[static_cast<size_t>((u - 1) * R * P + rp)].sample(sample_rng)
                : 1 + uint_below(sample_rng, C);
        s.query_tokens.push_back(intent);  // tokens 1..C name a category
        if (u01(sample_rng) < kGenericTokenProb)
            s.query_tokens.push_back(1 + C + uint_below(sample_rng, cfg.n_query_tokens - C));
        int64_t cand;
        if (u01(sample_rng) < kRecallQuality) {
            const auto& pool = items_by_cat[static_cast<size_t>(intent)];
            cand = pool[static_cast<size_t>(uint_below(sample_rng, static_cast<int64_t>(pool.size())))];
        } else {
            cand = 1 + uint_below(sample_rng, cfg.n_items);
        }
        s.candidate_item = items[static_cast<size_t>(cand - 1)];

        // Behavior history, most of it concentrated where the user's affinity is.
        const int64_t span = cfg.seq_len_max - cfg.seq_len_min;
        const int64_t act = activity[static_cast<size_t>(u - 1)];
        const int64_t lo = cfg.seq_len_min + (act - 1) * span / 3;
        const int64_t hi = cfg.seq_len_min + act * span / 3;
        const int64_t len = lo + (hi > lo ? uint_below(sample_rng, hi - lo + 1) : 0);
        s.behavior_seq.resize(static_cast<size_t>(len));
        for (auto& e : s.behavior_seq) {
            const int64_t erp = seq_ctx_dist[static_cast<size_t>(u - 1)].sample(sample_rng);
            const int64_t ereg = erp / P, eper = erp % P;
            const int64_t ecat =
                1 + seq_intent_dist[static_cast<size_t>((u - 1) * R * P + erp)].sample(sample_rng);
            const auto& pool = items_by_cat[static_cast<size_t>(ecat)];
            e.item_id =
                pool[static_cast<size_t>(uint_below(sample_rng, static_cast<int64_t>(pool.size())))];
            e.category = ecat;
            e.geohash_cell = geo.sample_cell(ereg, sample_rng);
            e.time_bucket = eper * kBucketsPerPeriod + uint_below(sample_rng, kBucketsPerPeriod);
            const int64_t eday = day - 1 - uint_below(sample_rng, kHistoryDays - 1);
            e.timestamp = eday * kSecondsPerDay + e.time_bucket * kSecondsPerBucket +
                          uint_below(sample_rng, kSecondsPerBucket);
        }
        std::stable_sort(s.behavior_seq.begin(), s.behavior_seq.end(),
                         [](const BehaviorEvent& a, const BehaviorEvent& b) {
                             return a.timestamp < b.timestamp;
                         });

        s.user_feats = {segment(u), act, price_pref[static_cast<size_t>(u - 1)]};
        s.context_feats = {1 + day % 7, (period >= 3 && period <= 6) ? 2 : 1,
                           region_load[static_cast<size_t>(rp)], 1};

        // Click propensity. The whole spatiotemporal and taste structure is
        // scaled by `signal` so signal = 0 means labels carry no information.
        const double a_u = affinity[static_cast<size_t>(
            (u - 1) * cells + rp * C + (s.candidate_item.category - 1))];
        raw_logits[static_cast<size_t>(i)] =
            signal * (cfg.preference_sharpness * a_u + taste(u, cand));
    }

    // Solve for the base logit that hits the target positive rate in expectation.
    auto mean_rate = [&](double base) {
        double acc = 0.0;
        for (double z : raw_logits) acc += 1.0 / (1.0 + std::exp(-(base + z)));
        return acc / static_cast<double>(raw_logits.size());
    };
    double lo_b = -30.0, hi_b = 10.0;
    for (int iter = 0; iter < 100; ++iter) {
        double mid = 0.5 * (lo_b + hi_b);
        (mean_rate(mid) < cfg.target_positive_rate ? lo_b : hi_b) = mid;
    }
    const double base_logit = 0.5 * (lo_b + hi_b);

    out.truth.base_logit = base_logit;
    out.truth.n_users = U;
    out.truth.n_regions = R;
    out.truth.n_periods = P;
    out.truth.n_categories = C;
    out.truth.affinity = std::move(affinity);
    out.truth.true_logits.resize(raw_logits.size());
    for (int64_t i = 0; i < cfg.samples; ++i) {
        const double z = base_logit + raw_logits[static_cast<size_t>(i)];
        out.truth.true_logits[static_cast<size_t>(i)] = z;
        const double p = 1.0 / (1.0 + std::exp(-z));
        out.samples[static_cast<size_t>(i)].label = u01(label_rng) < p ? 1 : 0;
    }
    return out;
}

std::vector<Sample> generate(const GeneratorConfig& cfg) {
    return std::move(generate_with_truth(cfg).samples);
}

}  // namespace cspm
