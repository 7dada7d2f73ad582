#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cspm/errors.hpp"

namespace cspm {

// Time is bucketed into 48 half-hour slots per day; slots group into eight
// 3-hour periods. The spatial grid groups into four quadrant regions.
constexpr int64_t kSecondsPerBucket = 1800;
constexpr int64_t kBucketsPerDay = 48;
constexpr int64_t kBucketsPerPeriod = 6;
constexpr int64_t kPeriods = kBucketsPerDay / kBucketsPerPeriod;
constexpr int64_t kRegions = 4;

inline int64_t bucket_of_timestamp(int64_t ts) { return (ts % 86400) / kSecondsPerBucket; }
inline int64_t period_of_bucket(int64_t bucket) { return bucket / kBucketsPerPeriod; }

/// Quadrant (0..3) of a 1-based cell id on a grid_size x grid_size grid.
int64_t region_of_cell(int64_t cell, int64_t grid_size);

struct BehaviorEvent {
    int64_t item_id = 0;
    int64_t category = 0;
    int64_t geohash_cell = 0;
    int64_t time_bucket = 0;
    int64_t timestamp = 0;
    bool operator==(const BehaviorEvent&) const = default;
};

struct ItemFeatures {
    int64_t item_id = 0;
    int64_t category = 0;
    int64_t shop_id = 0;
    int64_t price_band = 0;
    int64_t subsidy_flag = 0;
    bool operator==(const ItemFeatures&) const = default;
};

/// One impression. Id 0 is reserved for padding/unknown in every vocabulary;
/// real ids start at 1.
struct Sample {
    int64_t user_id = 0;
    std::vector<int64_t> query_tokens;
    int64_t geohash_cell = 0;
    int64_t time_bucket = 0;
    int64_t timestamp = 0;
    std::vector<BehaviorEvent> behavior_seq;  // timestamp-ascending, all before timestamp
    ItemFeatures candidate_item;
    std::vector<int64_t> user_feats;
    std::vector<int64_t> context_feats;
    int label = 0;
    bool operator==(const Sample&) const = default;
};

/// Checks the sample invariants; throws DataError naming the offending field.
void validate_sample(const Sample& s);

struct GeneratorConfig {
    int64_t n_users = 2000;
    int64_t n_items = 1500;
    int64_t n_categories = 16;
    int64_t grid_size = 8;  // geohash cells = grid_size^2
    int64_t n_time_buckets = kBucketsPerDay;
    int64_t samples = 100000;
    int64_t seq_len_min = 4;
    int64_t seq_len_max = 40;
    double preference_sharpness = 4.0;
    double spatiotemporal_signal = 1.0;  // in [0, 1]; 0 means labels carry no signal
    uint64_t seed = 42;
    // secondary knobs
    int64_t n_shops = 300;
    int64_t n_query_tokens = 64;
    int64_t horizon_days = 2;          // impression timestamps span this window
    double target_positive_rate = 0.12;  // base logit is tuned to hit this
    double taste_scale = 1.0;

    void validate() const;  // throws ConfigError
};

/// Vocabulary sizes per field, including the reserved id-0 row.
struct VocabSpec {
    int64_t user_id = 0;
    int64_t item_id = 0;
    int64_t category = 0;
    int64_t shop_id = 0;
    int64_t price_band = 0;
    int64_t subsidy = 0;
    int64_t geo_cell = 0;
    int64_t time_bucket = 0;
    int64_t query_token = 0;
    std::vector<int64_t> user_feats;     // per-position sizes
    std::vector<int64_t> context_feats;  // per-position sizes

    static VocabSpec from_generator(const GeneratorConfig& cfg);
};

/// Names for the gated user/context features, aligned with
/// Sample.user_feats / Sample.context_feats positions (user_id first).
std::vector<std::string> gated_feature_names();

/// Generator-side ground truth, written as a JSON sidecar next to the
/// dataset so evaluation can compute the Bayes-oracle score.
struct GroundTruth {
    double base_logit = 0;
    int64_t n_users = 0;
    int64_t n_regions = kRegions;
    int64_t n_periods = kPeriods;
    int64_t n_categories = 0;
    // Per-user affinity over (region, period, category), row-major
    // [n_users][n_regions][n_periods][n_categories]; user u at index u-1,
    // category c at index c-1.
    std::vector<double> affinity;
    // True click logit per generated sample, in sample order.
    std::vector<double> true_logits;

    double affinity_at(int64_t user, int64_t region, int64_t period, int64_t category) const;
};

struct GeneratedData {
    std::vector<Sample> samples;
    GroundTruth truth;
};

/// Deterministic synthetic dataset with plantable spatiotemporal structure.
GeneratedData generate_with_truth(const GeneratorConfig& cfg);
std::vector<Sample> generate(const GeneratorConfig& cfg);

void save_jsonl(std::span<const Sample> samples, const std::filesystem::path& path);
std::vector<Sample> load_jsonl(const std::filesystem::path& path);

void save_ground_truth(const GroundTruth& truth, const std::filesystem::path& path);
GroundTruth load_ground_truth(const std::filesystem::path& path);

struct PaddedSeq {
    std::vector<BehaviorEvent> events;  // length max_len; padded events are all-zero
    std::vector<bool> mask;             // true at real positions
};

/// Keeps the max_len most recent events (ascending order preserved) and pads
/// the tail with id-0 events.
PaddedSeq truncate_and_pad(std::span<const BehaviorEvent> seq, int64_t max_len);

}  // namespace cspm
