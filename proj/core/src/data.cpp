#include "cspm/data.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

namespace cspm {

using nlohmann::json;

int64_t region_of_cell(int64_t cell, int64_t grid_size) {
    int64_t idx = cell - 1;
    if (idx < 0 || idx >= grid_size * grid_size)
        throw DataError("geohash_cell: id " + std::to_string(cell) + " outside grid of size " +
                        std::to_string(grid_size));
    int64_t half = grid_size / 2;
    int64_t row = idx / grid_size, col = idx % grid_size;
    return (row >= half ? 2 : 0) + (col >= half ? 1 : 0);
}

void validate_sample(const Sample& s) {
    if (s.label != 0 && s.label != 1)
        throw DataError("label: must be 0 or 1, got " + std::to_string(s.label));
    if (s.user_id < 0) throw DataError("user_id: negative id");
    if (s.geohash_cell < 0) throw DataError("geohash_cell: negative id");
    if (s.time_bucket != bucket_of_timestamp(s.timestamp))
        throw DataError("time_bucket: " + std::to_string(s.time_bucket) +
                        " does not match timestamp " + std::to_string(s.timestamp));
    int64_t prev = INT64_MIN;
    for (const auto& e : s.behavior_seq) {
        if (e.timestamp < prev) throw DataError("behavior_seq: events not timestamp-ascending");
        if (e.timestamp >= s.timestamp)
            throw DataError("behavior_seq: event at or after the impression timestamp");
        if (e.item_id < 0 || e.category < 0 || e.geohash_cell < 0 || e.time_bucket < 0)
            throw DataError("behavior_seq: negative id");
        prev = e.timestamp;
    }
    for (int64_t t : s.query_tokens)
        if (t < 0) throw DataError("query_tokens: negative id");
    for (int64_t v : s.user_feats)
        if (v < 0) throw DataError("user_feats: negative id");
    for (int64_t v : s.context_feats)
        if (v < 0) throw DataError("context_feats: negative id");
}

void GeneratorConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("generator: " + msg); };
    if (n_users < 1) fail("n_users must be >= 1");
    if (n_items < 1) fail("n_items must be >= 1");
    if (n_categories < 2) fail("n_categories must be >= 2");
    if (n_items < n_categories)
        fail("n_items must be >= n_categories so every category has items");
    if (grid_size < 2 || grid_size % 2 != 0) fail("grid_size must be even and >= 2");
    if (n_time_buckets != kBucketsPerDay)
        fail("n_time_buckets is fixed at " + std::to_string(kBucketsPerDay) +
             " by the half-hour bucketing");
    if (samples < 1) fail("samples must be >= 1");
    if (seq_len_min < 0 || seq_len_max < seq_len_min) fail("invalid seq_len_range");
    if (preference_sharpness <= 0) fail("preference_sharpness must be > 0");
    if (spatiotemporal_signal < 0 || spatiotemporal_signal > 1)
        fail("spatiotemporal_signal must be in [0, 1]");
    if (n_shops < 1) fail("n_shops must be >= 1");
    if (n_query_tokens < n_categories + 4)
        fail("n_query_tokens must be >= n_categories + 4");
    if (horizon_days < 1) fail("horizon_days must be >= 1");
    if (target_positive_rate <= 0.01 || target_positive_rate >= 0.5)
        fail("target_positive_rate must be in (0.01, 0.5)");
    if (taste_scale < 0) fail("taste_scale must be >= 0");
}

VocabSpec VocabSpec::from_generator(const GeneratorConfig& cfg) {
    VocabSpec v;
    v.user_id = cfg.n_users + 1;
    v.item_id = cfg.n_items + 1;
    v.category = cfg.n_categories + 1;
    v.shop_id = cfg.n_shops + 1;
    v.price_band = 5 + 1;
    v.subsidy = 2 + 1;
    v.geo_cell = cfg.grid_size * cfg.grid_size + 1;
    v.time_bucket = kBucketsPerDay + 1;
    v.query_token = cfg.n_query_tokens + 1;
    v.user_feats = {4 + 1, 3 + 1, 3 + 1};          // segment, activity, price_pref
    v.context_feats = {7 + 1, 2 + 1, 4 + 1, 1 + 1};  // weekday, peak, region_load, platform
    return v;
}

std::vector<std::string> gated_feature_names() {
    return {"user_id",     "user_segment", "user_activity",   "user_price_pref",
            "ctx_weekday", "ctx_peak",     "ctx_region_load", "ctx_platform"};
}

double GroundTruth::affinity_at(int64_t user, int64_t region, int64_t period,
                                int64_t category) const {
    int64_t idx = (((user - 1) * n_regions + region) * n_periods + period) * n_categories +
                  (category - 1);
    return affinity.at(static_cast<size_t>(idx));
}

// ---- JSONL -----------------------------------------------------------------

namespace {

int64_t get_int(const json& j, const char* field) {
    auto it = j.find(field);
    if (it == j.end()) throw DataError(std::string(field) + ": missing field");
    if (!it->is_number_integer())
        throw DataError(std::string(field) + ": expected an integer");
    return it->get<int64_t>();
}

std::vector<int64_t> get_int_array(const json& j, const char* field) {
    auto it = j.find(field);
    if (it == j.end()) throw DataError(std::string(field) + ": missing field");
    if (!it->is_array()) throw DataError(std::string(field) + ": expected an array");
    std::vector<int64_t> out;
    out.reserve(it->size());
    for (const auto& v : *it) {
        if (!v.is_number_integer())
            throw DataError(std::string(field) + ": expected integer entries");
        out.push_back(v.get<int64_t>());
    }
    return out;
}

void reject_unknown(const json& j, const std::set<std::string>& known, const char* where) {
    for (const auto& [key, _] : j.items())
        if (!known.contains(key))
            throw DataError(std::string(where) + ": unexpected field '" + key + "'");
}

json event_to_json(const BehaviorEvent& e) {
    return json{{"item_id", e.item_id},
                {"category", e.category},
                {"geohash_cell", e.geohash_cell},
                {"time_bucket", e.time_bucket},
                {"timestamp", e.timestamp}};
}

BehaviorEvent event_from_json(const json& j) {
    reject_unknown(j, {"item_id", "category", "geohash_cell", "time_bucket", "timestamp"},
                   "behavior_seq");
    BehaviorEvent e;
    e.item_id = get_int(j, "item_id");
    e.category = get_int(j, "category");
    e.geohash_cell = get_int(j, "geohash_cell");
    e.time_bucket = get_int(j, "time_bucket");
    e.timestamp = get_int(j, "timestamp");
    return e;
}

json item_to_json(const ItemFeatures& it) {
    return json{{"item_id", it.item_id},
                {"category", it.category},
                {"shop_id", it.shop_id},
                {"price_band", it.price_band},
                {"subsidy_flag", it.subsidy_flag}};
}

ItemFeatures item_from_json(const json& j) {
    reject_unknown(j, {"item_id", "category", "shop_id", "price_band", "subsidy_flag"},
                   "candidate_item");
    ItemFeatures it;
    it.item_id = get_int(j, "item_id");
    it.category = get_int(j, "category");
    it.shop_id = get_int(j, "shop_id");
    it.price_band = get_int(j, "price_band");
    it.subsidy_flag = get_int(j, "subsidy_flag");
    return it;
}

json sample_to_json(const Sample& s) {
    json seq = json::array();
    for (const auto& e : s.behavior_seq) seq.push_back(event_to_json(e));
    return json{{"user_id", s.user_id},
                {"query_tokens", s.query_tokens},
                {"geohash_cell", s.geohash_cell},
                {"time_bucket", s.time_bucket},
                {"timestamp", s.timestamp},
                {"behavior_seq", std::move(seq)},
                {"candidate_item", item_to_json(s.candidate_item)},
                {"user_feats", s.user_feats},
                {"context_feats", s.context_feats},
                {"label", s.label}};
}

Sample sample_from_json(const json& j) {
    reject_unknown(j,
                   {"user_id", "query_tokens", "geohash_cell", "time_bucket", "timestamp",
                    "behavior_seq", "candidate_item", "user_feats", "context_feats", "label"},
                   "sample");
    Sample s;
    s.user_id = get_int(j, "user_id");
    s.query_tokens = get_int_array(j, "query_tokens");
    s.geohash_cell = get_int(j, "geohash_cell");
    s.time_bucket = get_int(j, "time_bucket");
    s.timestamp = get_int(j, "timestamp");
    auto seq_it = j.find("behavior_seq");
    if (seq_it == j.end() || !seq_it->is_array())
        throw DataError("behavior_seq: missing or not an array");
    for (const auto& e : *seq_it) s.behavior_seq.push_back(event_from_json(e));
    auto item_it = j.find("candidate_item");
    if (item_it == j.end() || !item_it->is_object())
        throw DataError("candidate_item: missing or not an object");
    s.candidate_item = item_from_json(*item_it);
    s.user_feats = get_int_array(j, "user_feats");
    s.context_feats = get_int_array(j, "context_feats");
    int64_t label = get_int(j, "label");
    s.label = static_cast<int>(label);
    validate_sample(s);
    return s;
}

}  // namespace

void save_jsonl(std::span<const Sample> samples, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("save_jsonl: cannot open " + path.string() + " for writing");
    for (const auto& s : samples) out << sample_to_json(s).dump() << '\n';
    if (!out) throw DataError("save_jsonl: write failed for " + path.string());
}

std::vector<Sample> load_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_jsonl: cannot open " + path.string());
    std::vector<Sample> samples;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError(path.string() + ":" + std::to_string(lineno) +
                            ": parse error: " + e.what());
        }
        try {
            samples.push_back(sample_from_json(j));
        } catch (const DataError& e) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return samples;
}

void save_ground_truth(const GroundTruth& truth, const std::filesystem::path& path) {
    json j{{"base_logit", truth.base_logit},
           {"n_users", truth.n_users},
           {"n_regions", truth.n_regions},
           {"n_periods", truth.n_periods},
           {"n_categories", truth.n_categories},
           {"affinity", truth.affinity},
           {"true_logits", truth.true_logits}};
    std::ofstream out(path);
    if (!out) throw DataError("save_ground_truth: cannot open " + path.string());
    out << j.dump() << '\n';
    if (!out) throw DataError("save_ground_truth: write failed for " + path.string());
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_ground_truth: cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw DataError(path.string() + ": parse error: " + e.what());
    }
    GroundTruth t;
    try {
        t.base_logit = j.at("base_logit").get<double>();
        t.n_users = j.at("n_users").get<int64_t>();
        t.n_regions = j.at("n_regions").get<int64_t>();
        t.n_periods = j.at("n_periods").get<int64_t>();
        t.n_categories = j.at("n_categories").get<int64_t>();
        t.affinity = j.at("affinity").get<std::vector<double>>();
        t.true_logits = j.at("true_logits").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": bad ground-truth schema: " + e.what());
    }
    return t;
}

PaddedSeq truncate_and_pad(std::span<const BehaviorEvent> seq, int64_t max_len) {
    if (max_len < 1) throw ConfigError("truncate_and_pad: max_len must be >= 1");
    PaddedSeq out;
    out.events.resize(static_cast<size_t>(max_len));
    out.mask.assign(static_cast<size_t>(max_len), false);
    int64_t keep = std::min<int64_t>(max_len, static_cast<int64_t>(seq.size()));
    int64_t start = static_cast<int64_t>(seq.size()) - keep;  // most recent `keep` events
    for (int64_t i = 0; i < keep; ++i) {
        out.events[static_cast<size_t>(i)] = seq[static_cast<size_t>(start + i)];
        out.mask[static_cast<size_t>(i)] = true;
    }
    return out;
}

}  // namespace cspm
