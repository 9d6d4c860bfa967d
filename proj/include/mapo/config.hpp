#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mapo {

enum class RatioMode { Token, Sequence };
enum class Estimator { Mapo, Grpo, PpoLite, Reinforce };
enum class Schedule { Cosine, Constant };
enum class SemAggregation { DiscountedMean, RawSum };
enum class SemNorm { Zscore, MeanOnly };

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// All run hyperparameters. Defaults follow the reference configuration
// (G=8, epsilon=0.2, beta=0.4, lambda=0.95, 6 turns, temperature 0.9,
// cosine schedule with 2% warmup); the learning rate is scaled up for the
// small linear policy trained here.
struct RunConfig {
    int group_size = 8;
    double epsilon = 0.2;
    double beta = 0.4;
    double lambda = 0.95;
    int max_turns = 6;
    double temperature = 0.9;
    RatioMode ratio_mode = RatioMode::Token;
    Estimator estimator = Estimator::Mapo;
    double learning_rate = 0.05;
    double warmup = 0.02;
    Schedule schedule = Schedule::Cosine;
    int iterations = 300;
    int batch_queries = 24;
    std::uint64_t seed = 12345;
    int grid_size = 8;
    int embed_dim = 64;
    std::uint64_t embed_seed = 2024;
    int target_class = 7;
    int epochs_per_iter = 1;
    int checkpoint_interval = 50;
    int eval_scenes = 200;
    int threads = 1;
    SemAggregation sem_aggregation = SemAggregation::DiscountedMean;
    SemNorm sem_norm = SemNorm::Zscore;

    // Throws ConfigError on any invariant violation.
    void validate() const;
};

// Flat key=value text. Unknown keys, unparsable values, and invariant
// violations are reported with the offending line number; missing keys keep
// their defaults. The MAPO_SEED environment variable, when set, overrides
// the master seed.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

// Canonical serialization (fixed key order, one key=value per line).
// parse_config(serialize_config(c)) reproduces c.
std::string serialize_config(const RunConfig& config);

// FNV-1a hash of the canonical serialization, used to detect tampered runs.
std::uint64_t config_hash(const RunConfig& config);

const char* estimator_name(Estimator e);

}  // namespace mapo
