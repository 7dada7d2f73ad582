#pragma once

#include <cstdint>
#include <vector>

#include "cspm/rng.hpp"
#include "cspm/tensor.hpp"

namespace cspm {

// Multi-head attention over the behavior sequence; the query is the candidate
// item embedding concatenated with the SAR vector.
struct AttentionParams {
    struct Head {
        Tensor W_q;  // [d_item + d_s, d_k]
        Tensor W_k;  // [d_seq, d_k]
        Tensor W_v;  // [d_seq, d_k]
    };
    std::vector<Head> heads;
    int64_t d_k = 0;

    static AttentionParams init(int64_t n_heads, int64_t d_k, int64_t d_item, int64_t d_s,
                                int64_t d_seq, Rng& rng);

    template <class Fn>
    void for_each(Fn&& fn) {
        for (size_t h = 0; h < heads.size(); ++h) {
            fn("stpe.h" + std::to_string(h) + ".W_q", heads[h].W_q);
            fn("stpe.h" + std::to_string(h) + ".W_k", heads[h].W_k);
            fn("stpe.h" + std::to_string(h) + ".W_v", heads[h].W_v);
        }
    }
};

struct StpeOutput {
    Tensor u;                            // [H * d_k], heads concatenated
    std::vector<Tensor> head_weights;    // per head [T] attention weights (diagnostics)
};

// Scaled dot-product attention per head; masked positions get exactly zero
// weight. An all-masked sequence yields a zero output vector.
StpeOutput stpe_forward(const Tensor& item, const Tensor& sar, const Tensor& seq,
                        const std::vector<bool>& mask, const AttentionParams& params);

}  // namespace cspm
