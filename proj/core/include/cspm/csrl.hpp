#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cspm/data.hpp"
#include "cspm/rng.hpp"
#include "cspm/tensor.hpp"

namespace cspm {

enum class GeoMode { cell, region };

struct TripletConfig {
    double margin = 0.2;
    int64_t n_v = 4;                  // negatives per anchor
    int64_t time_window = 1800;       // seconds
    GeoMode geo_mode = GeoMode::region;
    bool paper_literal_loss = false;
};

// Cross network x_{l+1} = x_0 o (W_l x_l + b_l) + x_l over the concatenated
// search-state embedding; the output is the SAR vector s.
struct CrossNetworkParams {
    std::vector<Tensor> W;  // per layer [d_s, d_s]
    std::vector<Tensor> b;  // per layer [d_s]

    static CrossNetworkParams init(int64_t layers, int64_t d_s, Rng& rng);
    int64_t layers() const { return static_cast<int64_t>(W.size()); }

    template <class Fn>
    void for_each(Fn&& fn) {
        for (size_t l = 0; l < W.size(); ++l) {
            fn("cross.W" + std::to_string(l), W[l]);
            fn("cross.b" + std::to_string(l), b[l]);
        }
    }
};

// x0 = concat(E_Q, E_L, E_T). Raises ShapeError if x0 does not match d_s.
Tensor encode_sar(const Tensor& x0, const CrossNetworkParams& params);

struct MinedTriple {
    int64_t anchor = 0;
    int64_t positive = 0;
    std::vector<int64_t> negatives;  // distinct, at most n_v
};

struct MiningResult {
    std::vector<MinedTriple> triples;
    int64_t skipped = 0;  // anchors with no eligible positive or no negatives
};

// In-batch positive: another sample with geo proximity (same cell, or same
// region when geo_mode=region), |dt| <= time_window, and a shared query
// token. Among eligible positives the nearest in time wins, ties to the
// smaller index. Negatives are drawn uniformly without replacement from the
// batch members failing at least one condition.
MiningResult mine_pairs(std::span<const Sample> batch, const TripletConfig& cfg,
                        int64_t grid_size, Rng& rng);

// Mean over anchors and their negatives of max(cos(s_n, s) - cos(s_p, s) + m, 0).
// Empty input yields a constant zero. The sizes of the three lists must agree.
Tensor triplet_loss(std::span<const Tensor> anchors, std::span<const Tensor> positives,
                    std::span<const std::vector<Tensor>> negatives, const TripletConfig& cfg);

}  // namespace cspm
