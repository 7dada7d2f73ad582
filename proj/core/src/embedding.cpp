#include "cspm/embedding.hpp"

#include <cmath>

#include "cspm/errors.hpp"

namespace cspm {

EmbeddingTable EmbeddingTable::init(std::string field, int64_t vocab_size, int64_t dim,
                                    Rng& rng) {
    if (vocab_size < 1 || dim < 1)
        throw ConfigError("embedding table " + field + ": vocab_size and dim must be >= 1");
    const real_t bound = static_cast<real_t>(1.0 / std::sqrt(static_cast<double>(dim)));
    EmbeddingTable t{std::move(field), Tensor::uniform({vocab_size, dim}, -bound, bound, rng)};
    auto& w = t.weights.mutable_data();
    for (int64_t j = 0; j < dim; ++j) w[static_cast<size_t>(j)] = 0;  // padding row
    t.weights.set_requires_grad(true);
    return t;
}

Tensor EmbeddingTable::lookup(std::span<const int64_t> ids) const {
    for (int64_t id : ids)
        if (id < 0 || id >= vocab_size())
            throw DataError("embedding lookup: field " + field + ": id " + std::to_string(id) +
                            " out of range [0, " + std::to_string(vocab_size()) + ")");
    return gather_rows(weights, ids);
}

Tensor EmbeddingTable::lookup_one(int64_t id) const {
    Tensor rows = lookup(std::span<const int64_t>(&id, 1));  // [1, dim]
    return reshape(rows, {dim()});
}

EmbeddingSet EmbeddingSet::init(const VocabSpec& vocabs, int64_t dim, Rng& rng) {
    EmbeddingSet s;
    s.dim = dim;
    s.user_id = EmbeddingTable::init("user_id", vocabs.user_id, dim, rng);
    s.item_id = EmbeddingTable::init("item_id", vocabs.item_id, dim, rng);
    s.category = EmbeddingTable::init("category", vocabs.category, dim, rng);
    s.shop_id = EmbeddingTable::init("shop_id", vocabs.shop_id, dim, rng);
    s.price_band = EmbeddingTable::init("price_band", vocabs.price_band, dim, rng);
    s.subsidy = EmbeddingTable::init("subsidy", vocabs.subsidy, dim, rng);
    s.geo_cell = EmbeddingTable::init("geo_cell", vocabs.geo_cell, dim, rng);
    s.time_bucket = EmbeddingTable::init("time_bucket", vocabs.time_bucket, dim, rng);
    s.query_token = EmbeddingTable::init("query_token", vocabs.query_token, dim, rng);
    const char* user_names[] = {"user_segment", "user_activity", "user_price_pref"};
    for (size_t i = 0; i < vocabs.user_feats.size(); ++i)
        s.user_feat_tables.push_back(
            EmbeddingTable::init(user_names[i], vocabs.user_feats[i], dim, rng));
    const char* ctx_names[] = {"ctx_weekday", "ctx_peak", "ctx_region_load", "ctx_platform"};
    for (size_t i = 0; i < vocabs.context_feats.size(); ++i)
        s.ctx_feat_tables.push_back(
            EmbeddingTable::init(ctx_names[i], vocabs.context_feats[i], dim, rng));
    return s;
}

FieldEmbeddings embed_sample(const Sample& sample, const EmbeddingSet& tables,
                             int64_t max_seq_len) {
    FieldEmbeddings out;

    // E_Q: mean pooling over the query tokens (identity for a single token).
    if (sample.query_tokens.empty()) throw DataError("query_tokens: empty query");
    Tensor token_rows = tables.query_token.lookup(sample.query_tokens);  // [n, d]
    const int64_t n_tok = token_rows.shape()[0];
    Tensor pool = Tensor::full({n_tok}, static_cast<real_t>(1.0 / static_cast<double>(n_tok)));
    out.query = matmul(pool, token_rows);  // [d]

    out.loc = tables.geo_cell.lookup_one(sample.geohash_cell);
    out.time = tables.time_bucket.lookup_one(sample.time_bucket);

    const ItemFeatures& it = sample.candidate_item;
    out.item = concat({tables.item_id.lookup_one(it.item_id),
                       tables.category.lookup_one(it.category),
                       tables.shop_id.lookup_one(it.shop_id),
                       tables.price_band.lookup_one(it.price_band),
                       tables.subsidy.lookup_one(it.subsidy_flag)},
                      0);

    // E_S: [T, 4d]; each event concatenates item/category/geo/time rows.
    // Padding ids are 0, so padded rows come out exactly zero.
    PaddedSeq padded = truncate_and_pad(sample.behavior_seq, max_seq_len);
    std::vector<int64_t> item_ids(padded.events.size()), cat_ids(padded.events.size()),
        geo_ids(padded.events.size()), time_ids(padded.events.size());
    for (size_t i = 0; i < padded.events.size(); ++i) {
        const BehaviorEvent& e = padded.events[i];
        item_ids[i] = e.item_id;
        cat_ids[i] = e.category;
        geo_ids[i] = e.geohash_cell;
        time_ids[i] = e.time_bucket;
    }
    out.seq = concat({tables.item_id.lookup(item_ids), tables.category.lookup(cat_ids),
                      tables.geo_cell.lookup(geo_ids), tables.time_bucket.lookup(time_ids)},
                     1);
    out.seq_mask = std::move(padded.mask);

    if (sample.user_feats.size() != tables.user_feat_tables.size())
        throw DataError("user_feats: expected " +
                        std::to_string(tables.user_feat_tables.size()) + " ids, got " +
                        std::to_string(sample.user_feats.size()));
    if (sample.context_feats.size() != tables.ctx_feat_tables.size())
        throw DataError("context_feats: expected " +
                        std::to_string(tables.ctx_feat_tables.size()) + " ids, got " +
                        std::to_string(sample.context_feats.size()));
    out.features.reserve(1 + sample.user_feats.size() + sample.context_feats.size());
    out.features.push_back(tables.user_id.lookup_one(sample.user_id));
    for (size_t i = 0; i < sample.user_feats.size(); ++i)
        out.features.push_back(tables.user_feat_tables[i].lookup_one(sample.user_feats[i]));
    for (size_t i = 0; i < sample.context_feats.size(); ++i)
        out.features.push_back(tables.ctx_feat_tables[i].lookup_one(sample.context_feats[i]));
    return out;
}

}  // namespace cspm
