#pragma once

#include <span>
#include <string>
#include <vector>

#include "cspm/data.hpp"
#include "cspm/rng.hpp"
#include "cspm/tensor.hpp"

namespace cspm {

// One categorical field. Row 0 is the padding row: it stays all-zero and is
// excluded from optimizer updates.
struct EmbeddingTable {
    std::string field;
    Tensor weights;  // [vocab_size, dim]

    static EmbeddingTable init(std::string field, int64_t vocab_size, int64_t dim, Rng& rng);

    int64_t vocab_size() const { return weights.shape()[0]; }
    int64_t dim() const { return weights.shape()[1]; }

    // Gathers rows; backward scatters into the visited rows only.
    // Out-of-range ids raise DataError naming the field.
    Tensor lookup(std::span<const int64_t> ids) const;
    Tensor lookup_one(int64_t id) const;  // -> [dim]
};

// Every table the model owns. Event fields share tables with the candidate
// item and the impression context, so history and candidates live in one
// embedding space.
struct EmbeddingSet {
    int64_t dim = 0;
    EmbeddingTable user_id, item_id, category, shop_id, price_band, subsidy;
    EmbeddingTable geo_cell, time_bucket, query_token;
    std::vector<EmbeddingTable> user_feat_tables;  // segment, activity, price_pref
    std::vector<EmbeddingTable> ctx_feat_tables;   // weekday, peak, region_load, platform

    static EmbeddingSet init(const VocabSpec& vocabs, int64_t dim, Rng& rng);

    template <class Fn>
    void for_each(Fn&& fn) {
        fn("emb.user_id", user_id.weights);
        fn("emb.item_id", item_id.weights);
        fn("emb.category", category.weights);
        fn("emb.shop_id", shop_id.weights);
        fn("emb.price_band", price_band.weights);
        fn("emb.subsidy", subsidy.weights);
        fn("emb.geo_cell", geo_cell.weights);
        fn("emb.time_bucket", time_bucket.weights);
        fn("emb.query_token", query_token.weights);
        for (auto& t : user_feat_tables) fn("emb." + t.field, t.weights);
        for (auto& t : ctx_feat_tables) fn("emb." + t.field, t.weights);
    }
};

// Per-sample dense views of every field group.
struct FieldEmbeddings {
    Tensor query;  // [d], mean-pooled over tokens
    Tensor loc;    // [d]
    Tensor time;   // [d]
    Tensor item;   // [5d] candidate item attributes concatenated
    Tensor seq;    // [T, 4d]; padding rows are zero
    std::vector<bool> seq_mask;       // [T]
    std::vector<Tensor> features;     // 8 x [d]: user then context fields
};

// max_seq_len is the truncation length T (most recent events are kept).
FieldEmbeddings embed_sample(const Sample& sample, const EmbeddingSet& tables,
                             int64_t max_seq_len);

}  // namespace cspm
