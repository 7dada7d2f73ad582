#include "cspm/stif.hpp"

#include <cmath>

#include "cspm/errors.hpp"

namespace cspm {

GateParams GateParams::init(int64_t n_features, int64_t d_s, int64_t d, int64_t hidden,
                            Rng& rng) {
    if (n_features < 1) throw ConfigError("gate: n_features must be >= 1");
    if (hidden < 1) throw ConfigError("gate: hidden must be >= 1");
    GateParams p;
    const int64_t in = d_s + d + kFeatureIdDim;
    auto uniform = [&](Shape shape, int64_t fan_in) {
        const real_t bound = static_cast<real_t>(1.0 / std::sqrt(static_cast<double>(fan_in)));
        Tensor t = Tensor::uniform(std::move(shape), -bound, bound, rng);
        t.set_requires_grad(true);
        return t;
    };
    p.feature_ids = uniform({n_features, kFeatureIdDim}, kFeatureIdDim);
    p.W1 = uniform({in, hidden}, in);
    p.b1 = Tensor::zeros({hidden});
    p.b1.set_requires_grad(true);
    // Zero final layer: every gate starts at sigmoid(0) = 0.5.
    p.W2 = Tensor::zeros({hidden, 1});
    p.W2.set_requires_grad(true);
    p.b2 = Tensor::zeros({1});
    p.b2.set_requires_grad(true);
    return p;
}

GatedFeatures stif_forward(const Tensor& sar, const std::vector<Tensor>& features,
                           const GateParams& params, bool paper_literal) {
    if (features.empty()) throw ShapeError("stif_forward: at least one feature required");
    const int64_t n = static_cast<int64_t>(features.size());
    if (n != params.feature_ids.dim(0))
        throw ShapeError("stif_forward: " + std::to_string(n) + " features but " +
                         std::to_string(params.feature_ids.dim(0)) + " feature-id rows");
    const int64_t d = features.front().dim(0);
    const int64_t want_in = sar.dim(0) + d + GateParams::kFeatureIdDim;
    if (params.W1.dim(0) != want_in)
        throw ShapeError("stif_forward: gate input width " + std::to_string(want_in) +
                         " does not match W1 " + shape_str(params.W1.shape()));

    GatedFeatures out;
    std::vector<Tensor> gated;
    for (int64_t j = 0; j < n; ++j) {
        const Tensor& z = features[static_cast<size_t>(j)];
        if (z.rank() != 1 || z.dim(0) != d)
            throw ShapeError("stif_forward: feature " + std::to_string(j) + " has shape " +
                             shape_str(z.shape()) + ", expected [" + std::to_string(d) + "]");
        Tensor fid = reshape(gather_rows(params.feature_ids, std::span<const int64_t>(&j, 1)),
                             {GateParams::kFeatureIdDim});
        Tensor g_in = concat({sar, z, fid}, 0);
        Tensor h = relu(add(matmul(g_in, params.W1), params.b1));
        Tensor w = sigmoid(add(matmul(h, params.W2), params.b2));  // [1]
        out.gates.push_back(w);
        if (!paper_literal) gated.push_back(mul(w, z));  // [1] broadcasts over [d]
    }
    if (paper_literal) {
        // Literal mode: o = s * sum_j w_j (the features only steer the gates).
        Tensor wsum = out.gates.front();
        for (size_t j = 1; j < out.gates.size(); ++j) wsum = add(wsum, out.gates[j]);
        out.o = mul(sar, wsum);
    } else {
        out.o = concat(gated, 0);
    }
    return out;
}

}  // namespace cspm
