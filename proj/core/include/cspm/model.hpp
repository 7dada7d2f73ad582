#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cspm/csrl.hpp"
#include "cspm/data.hpp"
#include "cspm/embedding.hpp"
#include "cspm/stif.hpp"
#include "cspm/stpe.hpp"

namespace cspm {

struct ModelConfig {
    int64_t dim = 16;             // embedding dimension d
    int64_t cross_layers = 2;
    int64_t heads = 2;
    int64_t d_k = 16;
    int64_t stif_hidden = 32;
    bool stif_paper_literal = false;
    double alpha = 0.7;           // weight of the CTR loss in the total loss
    std::vector<int64_t> head_widths = {128, 64};
    int64_t truncate_len = 20;    // behavior-sequence truncation length T
    int64_t grid_size = 8;        // geo grid backing the mining predicate
    TripletConfig triplet;
    VocabSpec vocabs;

    int64_t d_s() const { return 3 * dim; }      // concat(E_Q, E_L, E_T)
    int64_t d_item() const { return 5 * dim; }   // candidate item attributes
    int64_t d_seq() const { return 4 * dim; }    // per-event attributes
    int64_t n_gated() const { return 8; }        // user + context features
    int64_t stpe_out() const { return heads * d_k; }
    int64_t stif_out() const { return stif_paper_literal ? d_s() : n_gated() * dim; }
    int64_t head_input() const { return stpe_out() + stif_out() + d_item() + d_s(); }

    void validate() const;  // ConfigError on any out-of-range field
};

// Table 2 row switches. All-off reduces the model to embeddings + head MLP.
struct AblationSwitches {
    bool use_csrl_loss = true;
    bool use_cross_network = true;
    bool use_stpe = true;
    bool use_stif = true;

    bool operator==(const AblationSwitches&) const = default;
};

struct HeadMlpParams {
    std::vector<Tensor> W, b;

    static HeadMlpParams init(int64_t input_dim, std::span<const int64_t> widths, Rng& rng);

    template <class Fn>
    void for_each(Fn&& fn) {
        for (size_t l = 0; l < W.size(); ++l) {
            fn("head.W" + std::to_string(l), W[l]);
            fn("head.b" + std::to_string(l), b[l]);
        }
    }
};

struct ModelParams {
    EmbeddingSet emb;
    CrossNetworkParams cross;
    AttentionParams attn;
    GateParams gate;
    HeadMlpParams head;

    static ModelParams init(const ModelConfig& cfg, uint64_t seed);

    template <class Fn>
    void for_each(Fn&& fn) {
        emb.for_each(fn);
        cross.for_each(fn);
        attn.for_each(fn);
        gate.for_each(fn);
        head.for_each(fn);
    }
};

struct ForwardOutput {
    Tensor logit;               // [1] pre-sigmoid score
    Tensor sar;                 // [d_s]; the raw concat when the cross network is off
    double yhat = 0.0;          // sigmoid(logit), strictly in (0,1)
    std::vector<Tensor> gates;  // StIF diagnostics; empty when use_stif is off
};

ForwardOutput forward(const Sample& sample, ModelParams& params, const ModelConfig& cfg,
                      const AblationSwitches& switches);

// Mean binary cross-entropy from pre-sigmoid logits (numerically stable form).
Tensor ctr_loss(const Tensor& logits, std::span<const real_t> labels);

// alpha * l_ctr + (1 - alpha) * l_cl; alpha outside [0,1] raises ConfigError.
Tensor total_loss(const Tensor& l_ctr, const Tensor& l_cl, double alpha);

}  // namespace cspm
