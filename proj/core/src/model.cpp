#include "cspm/model.hpp"

#include <cmath>

#include "cspm/errors.hpp"

namespace cspm {

void ModelConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("model: " + msg); };
    if (dim < 1) fail("dim must be >= 1");
    if (cross_layers < 1) fail("cross_layers must be >= 1");
    if (heads < 1) fail("heads must be >= 1");
    if (d_k < 1) fail("d_k must be >= 1");
    if (stif_hidden < 1) fail("stif_hidden must be >= 1");
    if (alpha < 0.0 || alpha > 1.0) fail("alpha must be in [0, 1]");
    for (int64_t w : head_widths)
        if (w < 1) fail("head_widths entries must be >= 1");
    if (truncate_len < 1) fail("truncate_len must be >= 1");
    if (grid_size < 2 || grid_size % 2 != 0) fail("grid_size must be even and >= 2");
    if (triplet.margin < 0.0) fail("csrl margin must be >= 0");
    if (triplet.n_v < 1) fail("csrl n_v must be >= 1");
    if (triplet.time_window < 0) fail("csrl time_window must be >= 0");
    auto need_vocab = [&](int64_t v, const char* name) {
        if (v < 2) fail(std::string(name) + " vocab must be >= 2 (padding plus one id)");
    };
    need_vocab(vocabs.user_id, "user_id");
    need_vocab(vocabs.item_id, "item_id");
    need_vocab(vocabs.category, "category");
    need_vocab(vocabs.shop_id, "shop_id");
    need_vocab(vocabs.price_band, "price_band");
    need_vocab(vocabs.subsidy, "subsidy");
    need_vocab(vocabs.geo_cell, "geo_cell");
    need_vocab(vocabs.time_bucket, "time_bucket");
    need_vocab(vocabs.query_token, "query_token");
    for (int64_t v : vocabs.user_feats) need_vocab(v, "user_feats");
    for (int64_t v : vocabs.context_feats) need_vocab(v, "context_feats");
    if (static_cast<int64_t>(vocabs.user_feats.size() + vocabs.context_feats.size()) + 1 !=
        n_gated())
        fail("user/context feature fields must total " + std::to_string(n_gated() - 1));
}

HeadMlpParams HeadMlpParams::init(int64_t input_dim, std::span<const int64_t> widths,
                                  Rng& rng) {
    HeadMlpParams p;
    int64_t in = input_dim;
    std::vector<int64_t> dims(widths.begin(), widths.end());
    dims.push_back(1);
    for (int64_t w : dims) {
        const real_t bound = static_cast<real_t>(1.0 / std::sqrt(static_cast<double>(in)));
        p.W.push_back(Tensor::uniform({in, w}, -bound, bound, rng));
        p.W.back().set_requires_grad(true);
        p.b.push_back(Tensor::zeros({w}));
        p.b.back().set_requires_grad(true);
        in = w;
    }
    return p;
}

ModelParams ModelParams::init(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng = make_rng(seed, "init");
    ModelParams p;
    p.emb = EmbeddingSet::init(cfg.vocabs, cfg.dim, rng);
    p.cross = CrossNetworkParams::init(cfg.cross_layers, cfg.d_s(), rng);
    p.attn = AttentionParams::init(cfg.heads, cfg.d_k, cfg.d_item(), cfg.d_s(), cfg.d_seq(),
                                   rng);
    p.gate = GateParams::init(cfg.n_gated(), cfg.d_s(), cfg.dim, cfg.stif_hidden, rng);
    p.head = HeadMlpParams::init(cfg.head_input(), cfg.head_widths, rng);
    return p;
}

ForwardOutput forward(const Sample& sample, ModelParams& params, const ModelConfig& cfg,
                      const AblationSwitches& switches) {
    FieldEmbeddings f = embed_sample(sample, params.emb, cfg.truncate_len);
    Tensor x0 = concat({f.query, f.loc, f.time}, 0);
    Tensor sar = switches.use_cross_network ? encode_sar(x0, params.cross) : x0;

    Tensor u = switches.use_stpe ? stpe_forward(f.item, sar, f.seq, f.seq_mask, params.attn).u
                                 : Tensor::zeros({cfg.stpe_out()});

    ForwardOutput out;
    Tensor o;
    if (switches.use_stif) {
        GatedFeatures gf = stif_forward(sar, f.features, params.gate, cfg.stif_paper_literal);
        o = gf.o;
        out.gates = std::move(gf.gates);
    } else if (cfg.stif_paper_literal) {
        o = Tensor::zeros({cfg.stif_out()});  // the literal form has no raw-feature analogue
    } else {
        o = concat(f.features, 0);
    }

    Tensor h = concat({u, o, f.item, sar}, 0);
    for (size_t l = 0; l < params.head.W.size(); ++l) {
        h = add(matmul(h, params.head.W[l]), params.head.b[l]);
        if (l + 1 < params.head.W.size()) h = relu(h);
    }
    out.logit = h;  // [1]
    out.sar = sar;
    const double z = static_cast<double>(h.impl()->data[0]);
    out.yhat = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    return out;
}

Tensor ctr_loss(const Tensor& logits, std::span<const real_t> labels) {
    return bce_with_logits(logits, labels);
}

Tensor total_loss(const Tensor& l_ctr, const Tensor& l_cl, double alpha) {
    if (alpha < 0.0 || alpha > 1.0)
        throw ConfigError("total_loss: alpha must be in [0, 1], got " + std::to_string(alpha));
    return add(scale(l_ctr, static_cast<real_t>(alpha)),
               scale(l_cl, static_cast<real_t>(1.0 - alpha)));
}

}  // namespace cspm
