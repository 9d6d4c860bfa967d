#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "mapo/config.hpp"
#include "mapo/env.hpp"
#include "mapo/matrix.hpp"
#include "mapo/protocol.hpp"
#include "mapo/rng.hpp"

namespace mapo {

// Factorized action heads. A non-terminal step emits (Mode=Zoom, Cell,
// Label); the terminal step emits (Mode=Answer, Answer).
enum Head : int { kHeadMode = 0, kHeadCell = 1, kHeadLabel = 2, kHeadAnswer = 3 };
inline constexpr int kNumHeads = 4;
inline constexpr int kModeZoom = 0;
inline constexpr int kModeAnswer = 1;

// State-feature layout: [query class one-hot | asked-attribute one-hot |
// coarse features | most recent patch features (zeros if none) | turn
// one-hot up to max_turns].
struct PolicyShape {
    std::size_t d_s = 0;
    std::array<std::size_t, kNumHeads> arity{};
    std::size_t query_offset = 0;
    std::size_t attr_offset = 0;
    std::size_t coarse_offset = 0;
    std::size_t patch_offset = 0;
    std::size_t turn_offset = 0;
    std::size_t d_obs = 0;
    int grid_size = 0;
    int max_turns = 0;

    static PolicyShape make(const Vocabulary& vocab, int grid_size, std::size_t d_obs,
                            int max_turns);
    bool operator==(const PolicyShape&) const = default;
};

// Linear-softmax policy: one weight matrix per head mapping state features
// to head logits. Immutable snapshots are shared across rollout workers.
struct PolicyParams {
    PolicyShape shape;
    ParamSet weights;  // weights[h] is arity[h] x d_s

    static PolicyParams zeros(const PolicyShape& shape);
};

struct DecisionToken {
    int head = 0;
    int choice = 0;
    double behavior_logprob = 0.0;  // log-prob under the sampling policy

    bool operator==(const DecisionToken&) const = default;
};

struct Step {
    std::vector<double> state_features;
    std::vector<DecisionToken> tokens;
    std::optional<ToolCall> tool_call;
    std::optional<Observation> observation;
    std::optional<double> z;  // semantic score; absent on the terminal step
};

struct Trajectory {
    Query query;
    std::vector<Step> steps;
    int token_count = 0;  // |tau| = 3T + 2
    int tool_calls = 0;   // T
    double r_out = 0.0;
    double r_sem = 0.0;  // filled in by score_group
    int answer = -1;

    std::vector<double> step_scores() const;  // the z_t sequence, length T
};

std::vector<double> featurize_state(const PolicyShape& shape, const Query& query,
                                    const std::vector<Observation>& history, int turn);

// Log-softmax of (logits / temperature). Throws std::domain_error on
// non-finite logits. This is the single code path behind sampling, ratio
// computation, and gradients, so recomputed log-probs are bit-identical to
// the behavior log-probs stored at rollout time.
std::vector<double> action_logprobs(const PolicyParams& params,
                                    const std::vector<double>& features, int head,
                                    double temperature);

// exp of action_logprobs.
std::vector<double> action_distribution(const PolicyParams& params,
                                        const std::vector<double>& features, int head,
                                        double temperature);

double logprob_of_choice(const PolicyParams& params, const std::vector<double>& features,
                         int head, int choice, double temperature);

// Rolls the MDP under the current policy: per turn sample the mode, on Zoom
// sample (cell, label), execute the zoom and score it, on Answer (forced at
// max_turns) sample the answer and judge it. Deterministic given the rng
// seed.
Trajectory sample_trajectory(const PolicyParams& params, const Scene& scene, const Query& query,
                             const EmbeddingSpace& space, const RunConfig& config, Rng& rng);

// Argmax decoding (evaluation).
Trajectory greedy_trajectory(const PolicyParams& params, const Scene& scene, const Query& query,
                             const EmbeddingSpace& space, const RunConfig& config);

// Analytic gradient of sum_tokens log pi(choice | state) with respect to the
// weights: for a token with head h and choice a, the row-k contribution is
// ((1[k==a] - p_k) / temperature) * x at the stored state features.
ParamSet grad_logprob(const PolicyParams& params, const Trajectory& trajectory,
                      double temperature);

// Log-probabilities of every decision token in order, recomputed from the
// given parameters (length token_count).
std::vector<double> token_logprobs(const PolicyParams& params, const Trajectory& trajectory,
                                   double temperature);

// Checkpoint format: ASCII header line `mapo-policy-v1 <heads> <arities...>
// <d_s>`, then row-major 64-bit little-endian reals per head.
void save_policy(const std::string& path, const PolicyParams& params);
PolicyParams load_policy(const std::string& path, const PolicyShape& shape);

}  // namespace mapo
