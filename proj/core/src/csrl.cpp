#include "cspm/csrl.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "cspm/errors.hpp"

namespace cspm {

CrossNetworkParams CrossNetworkParams::init(int64_t layers, int64_t d_s, Rng& rng) {
    if (layers < 1) throw ConfigError("cross network: layers must be >= 1");
    if (d_s < 1) throw ConfigError("cross network: d_s must be >= 1");
    CrossNetworkParams p;
    const real_t bound = static_cast<real_t>(1.0 / std::sqrt(static_cast<double>(d_s)));
    for (int64_t l = 0; l < layers; ++l) {
        p.W.push_back(Tensor::uniform({d_s, d_s}, -bound, bound, rng));
        p.W.back().set_requires_grad(true);
        p.b.push_back(Tensor::zeros({d_s}));
        p.b.back().set_requires_grad(true);
    }
    return p;
}

Tensor encode_sar(const Tensor& x0, const CrossNetworkParams& params) {
    if (x0.rank() != 1 || x0.dim(0) != params.W.front().dim(0))
        throw ShapeError("encode_sar: input " + shape_str(x0.shape()) +
                         " does not match cross weights " +
                         shape_str(params.W.front().shape()));
    Tensor x = x0;
    for (size_t l = 0; l < params.W.size(); ++l) {
        Tensor inner = add(matmul(x, params.W[l]), params.b[l]);
        x = add(mul(x0, inner), x);
    }
    return x;
}

namespace {

bool shares_query_token(const Sample& a, const Sample& b) {
    for (int64_t t : a.query_tokens)
        for (int64_t u : b.query_tokens)
            if (t == u) return true;
    return false;
}

bool is_positive_pair(const Sample& a, const Sample& b, const TripletConfig& cfg,
                      int64_t grid_size) {
    bool geo = a.geohash_cell == b.geohash_cell;
    if (!geo && cfg.geo_mode == GeoMode::region)
        geo = region_of_cell(a.geohash_cell, grid_size) == region_of_cell(b.geohash_cell, grid_size);
    if (!geo) return false;
    if (std::llabs(a.timestamp - b.timestamp) > cfg.time_window) return false;
    return shares_query_token(a, b);
}

}  // namespace

MiningResult mine_pairs(std::span<const Sample> batch, const TripletConfig& cfg,
                        int64_t grid_size, Rng& rng) {
    if (cfg.n_v < 1) throw ConfigError("mine_pairs: n_v must be >= 1");
    const int64_t n = static_cast<int64_t>(batch.size());
    MiningResult out;
    std::vector<int64_t> neg_pool;
    for (int64_t i = 0; i < n; ++i) {
        // Canonical positive: nearest in time among eligible partners, ties
        // broken toward the smaller index.
        int64_t best = -1;
        int64_t best_dt = 0;
        neg_pool.clear();
        for (int64_t j = 0; j < n; ++j) {
            if (j == i) continue;
            if (is_positive_pair(batch[static_cast<size_t>(i)], batch[static_cast<size_t>(j)],
                                 cfg, grid_size)) {
                int64_t dt = std::llabs(batch[static_cast<size_t>(i)].timestamp -
                                        batch[static_cast<size_t>(j)].timestamp);
                if (best < 0 || dt < best_dt) {
                    best = j;
                    best_dt = dt;
                }
            } else {
                neg_pool.push_back(j);
            }
        }
        if (best < 0 || neg_pool.empty()) {
            ++out.skipped;
            continue;
        }
        MinedTriple t;
        t.anchor = i;
        t.positive = best;
        const int64_t take = std::min<int64_t>(cfg.n_v, static_cast<int64_t>(neg_pool.size()));
        // Partial Fisher-Yates: distinct draws, deterministic under the rng.
        for (int64_t k = 0; k < take; ++k) {
            int64_t pick = k + std::uniform_int_distribution<int64_t>(
                                   0, static_cast<int64_t>(neg_pool.size()) - 1 - k)(rng);
            std::swap(neg_pool[static_cast<size_t>(k)], neg_pool[static_cast<size_t>(pick)]);
            t.negatives.push_back(neg_pool[static_cast<size_t>(k)]);
        }
        out.triples.push_back(std::move(t));
    }
    return out;
}

Tensor triplet_loss(std::span<const Tensor> anchors, std::span<const Tensor> positives,
                    std::span<const std::vector<Tensor>> negatives, const TripletConfig& cfg) {
    if (anchors.size() != positives.size() || anchors.size() != negatives.size())
        throw ShapeError("triplet_loss: anchors/positives/negatives sizes differ");
    if (cfg.margin < 0) throw ConfigError("triplet_loss: margin must be >= 0");
    std::vector<Tensor> terms;
    for (size_t i = 0; i < anchors.size(); ++i) {
        Tensor cos_pos = cosine_similarity(positives[i], anchors[i]);
        for (const Tensor& neg : negatives[i]) {
            Tensor cos_neg = cosine_similarity(neg, anchors[i]);
            Tensor hinge = cfg.paper_literal_loss
                               // Literal mode minimizes -max(cos_pos - cos_neg + m, 0) instead.
                               ? scale(relu(add_scalar(sub(cos_pos, cos_neg),
                                                       static_cast<real_t>(cfg.margin))),
                                       static_cast<real_t>(-1))
                               : relu(add_scalar(sub(cos_neg, cos_pos),
                                                 static_cast<real_t>(cfg.margin)));
            terms.push_back(reshape(hinge, {1}));
        }
    }
    if (terms.empty()) return Tensor::scalar(0);
    return mean(concat(terms, 0));
}

}  // namespace cspm
