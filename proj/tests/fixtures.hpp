// Shared test fixtures: a hand-sized model configuration, crafted samples
// with known mining structure, and a small generated dataset helper.
#pragma once

#include <utility>
#include <vector>

#include "cspm/data.hpp"
#include "cspm/model.hpp"

namespace fixtures {

inline cspm::ModelConfig tiny_config() {
    cspm::ModelConfig cfg;
    cfg.dim = 4;
    cfg.cross_layers = 2;
    cfg.heads = 1;
    cfg.d_k = 4;
    cfg.stif_hidden = 4;
    cfg.head_widths = {8, 4};
    cfg.truncate_len = 3;
    cfg.grid_size = 8;
    cfg.vocabs.user_id = 10;
    cfg.vocabs.item_id = 20;
    cfg.vocabs.category = 5;
    cfg.vocabs.shop_id = 7;
    cfg.vocabs.price_band = 6;
    cfg.vocabs.subsidy = 3;
    cfg.vocabs.geo_cell = 65;
    cfg.vocabs.time_bucket = 49;
    cfg.vocabs.query_token = 30;
    cfg.vocabs.user_feats = {5, 4, 4};
    cfg.vocabs.context_feats = {8, 3, 5, 2};
    return cfg;
}

inline cspm::Sample make_sample(int64_t user, int64_t cell, int64_t ts,
                                std::vector<int64_t> tokens, int label) {
    cspm::Sample s;
    s.user_id = user;
    s.query_tokens = std::move(tokens);
    s.geohash_cell = cell;
    s.timestamp = ts;
    s.time_bucket = cspm::bucket_of_timestamp(ts);
    s.behavior_seq = {
        {3, 1, 2, cspm::bucket_of_timestamp(100), 100},
        {5, 2, 7, cspm::bucket_of_timestamp(300), 300},
    };
    s.candidate_item = {4, 2, 3, 2, 1};
    s.user_feats = {2, 1, 3};
    s.context_feats = {4, 1, 2, 1};
    s.label = label;
    return s;
}

// Two mineable positives (indices 0, 1) plus two isolated samples that can
// only serve as negatives.
inline std::vector<cspm::Sample> crafted_batch() {
    return {make_sample(1, 5, 1000, {3}, 1), make_sample(2, 5, 1200, {3}, 0),
            make_sample(3, 40, 50000, {9}, 0), make_sample(4, 41, 70000, {12}, 1)};
}

inline cspm::GeneratorConfig gen_small(int64_t samples = 1200, uint64_t seed = 5) {
    cspm::GeneratorConfig g;
    g.n_users = 80;
    g.n_items = 100;
    g.samples = samples;
    g.seed = seed;
    return g;
}

// A desk-toy model dimensioned against a generator's vocabularies.
inline cspm::ModelConfig model_for(const cspm::GeneratorConfig& g) {
    cspm::ModelConfig cfg;
    cfg.dim = 4;
    cfg.cross_layers = 2;
    cfg.heads = 1;
    cfg.d_k = 4;
    cfg.stif_hidden = 4;
    cfg.head_widths = {8, 4};
    cfg.truncate_len = 5;
    cfg.grid_size = g.grid_size;
    cfg.vocabs = cspm::VocabSpec::from_generator(g);
    return cfg;
}

}  // namespace fixtures
