#include "cspm/stpe.hpp"

#include <cmath>

#include "cspm/errors.hpp"

namespace cspm {

AttentionParams AttentionParams::init(int64_t n_heads, int64_t d_k, int64_t d_item,
                                      int64_t d_s, int64_t d_seq, Rng& rng) {
    if (n_heads < 1) throw ConfigError("attention: heads must be >= 1");
    if (d_k < 1) throw ConfigError("attention: d_k must be >= 1");
    AttentionParams p;
    p.d_k = d_k;
    const int64_t d_q = d_item + d_s;
    auto make = [&](int64_t rows) {
        const real_t bound = static_cast<real_t>(1.0 / std::sqrt(static_cast<double>(rows)));
        Tensor t = Tensor::uniform({rows, d_k}, -bound, bound, rng);
        t.set_requires_grad(true);
        return t;
    };
    for (int64_t h = 0; h < n_heads; ++h)
        p.heads.push_back({make(d_q), make(d_seq), make(d_seq)});
    return p;
}

StpeOutput stpe_forward(const Tensor& item, const Tensor& sar, const Tensor& seq,
                        const std::vector<bool>& mask, const AttentionParams& params) {
    if (seq.rank() != 2)
        throw ShapeError("stpe_forward: seq must be [T, d_seq], got " + shape_str(seq.shape()));
    const int64_t T = seq.dim(0);
    if (static_cast<int64_t>(mask.size()) != T)
        throw ShapeError("stpe_forward: mask length " + std::to_string(mask.size()) +
                         " does not match T=" + std::to_string(T));
    const Tensor& W_q0 = params.heads.front().W_q;
    if (item.dim(0) + sar.dim(0) != W_q0.dim(0))
        throw ShapeError("stpe_forward: query width " +
                         std::to_string(item.dim(0) + sar.dim(0)) + " does not match W_q " +
                         shape_str(W_q0.shape()));
    if (seq.dim(1) != params.heads.front().W_k.dim(0))
        throw ShapeError("stpe_forward: seq width " + std::to_string(seq.dim(1)) +
                         " does not match W_k " + shape_str(params.heads.front().W_k.shape()));

    Tensor query_in = concat({item, sar}, 0);
    const real_t inv_sqrt_dk =
        static_cast<real_t>(1.0 / std::sqrt(static_cast<double>(params.d_k)));
    StpeOutput out;
    std::vector<Tensor> head_outs;
    for (const auto& head : params.heads) {
        Tensor q = matmul(query_in, head.W_q);            // [d_k]
        Tensor K = matmul(seq, head.W_k);                 // [T, d_k]
        Tensor V = matmul(seq, head.W_v);                 // [T, d_k]
        Tensor scores = scale(matmul(K, q), inv_sqrt_dk); // [T]
        Tensor w = masked_softmax(scores, mask);          // [T]; all-masked -> zeros
        head_outs.push_back(matmul(w, V));                // [d_k]
        out.head_weights.push_back(w);
    }
    out.u = concat(head_outs, 0);
    return out;
}

}  // namespace cspm
