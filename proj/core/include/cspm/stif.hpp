#pragma once

#include <cstdint>
#include <vector>

#include "cspm/rng.hpp"
#include "cspm/tensor.hpp"

namespace cspm {

// SAR-conditioned scalar gate per feature: w_j = sigmoid(MLP(concat(s, z_j,
// feature-id embedding))), o_j = w_j * z_j. The gate MLP is shared across
// features; the id embedding lets it specialize per feature.
struct GateParams {
    static constexpr int64_t kFeatureIdDim = 8;

    Tensor feature_ids;  // [n_features, kFeatureIdDim]
    Tensor W1, b1;       // [d_s + d + kFeatureIdDim, hidden], [hidden]
    Tensor W2, b2;       // [hidden, 1], [1]  (zero-initialized: untrained gates are 0.5)

    static GateParams init(int64_t n_features, int64_t d_s, int64_t d, int64_t hidden,
                           Rng& rng);

    template <class Fn>
    void for_each(Fn&& fn) {
        fn("stif.feature_ids", feature_ids);
        fn("stif.W1", W1);
        fn("stif.b1", b1);
        fn("stif.W2", W2);
        fn("stif.b2", b2);
    }
};

struct GatedFeatures {
    Tensor o;                   // concat of gated features; [n*d] (or [d_s] in literal mode)
    std::vector<Tensor> gates;  // per feature [1], each strictly in (0,1)
};

// paper_literal replaces the output with sar * sum_j(w_j), keeping the gates.
GatedFeatures stif_forward(const Tensor& sar, const std::vector<Tensor>& features,
                           const GateParams& params, bool paper_literal = false);

}  // namespace cspm
