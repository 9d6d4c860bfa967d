#pragma once

#include <functional>
#include <vector>

#include "mapo/config.hpp"
#include "mapo/policy.hpp"
#include "mapo/rewards.hpp"

namespace mapo {

// Per-token (or single length-normalized sequence) new-to-old probability
// ratios. Behavior log-probs stored in the trajectory are the old side.
std::vector<double> importance_ratios(const PolicyParams& params, const Trajectory& trajectory,
                                      RatioMode mode, double temperature);

// min(w * a, clip(w, 1-eps, 1+eps) * a) -- the pessimistic clipped surrogate.
inline double clipped_term(double w, double a_tilde, double epsilon) {
    double wc = w < 1.0 - epsilon ? 1.0 - epsilon : (w > 1.0 + epsilon ? 1.0 + epsilon : w);
    double unclipped = w * a_tilde;
    double clipped = wc * a_tilde;
    return unclipped < clipped ? unclipped : clipped;
}

struct ObjectiveResult {
    double objective = 0.0;
    ParamSet gradient;
};

// Surrogate objective over scored groups: mean over trajectories of
// (1/|tau|) sum_I min(w_I A, clip(w_I) A), with the gradient flowing only
// through active unclipped branches. Trajectories must carry behavior
// log-probs from old_params (stale batches are rejected).
ObjectiveResult mapo_objective_and_gradient(const std::vector<GroupBatch>& groups,
                                            const PolicyParams& params,
                                            const PolicyParams& old_params,
                                            const RunConfig& config);

// Same surrogate core over a flat batch with externally supplied
// per-trajectory advantages (PPO-lite EMA baseline, raw-reward REINFORCE).
ObjectiveResult surrogate_objective_and_gradient(const std::vector<const Trajectory*>& batch,
                                                 const std::vector<double>& advantages,
                                                 const PolicyParams& params,
                                                 const PolicyParams& old_params,
                                                 const RunConfig& config, bool clip);

struct OptimizerState {
    PolicyParams params;
    ParamSet m;  // first moment
    ParamSet v;  // second moment
    long step = 0;

    static OptimizerState init(const PolicyShape& shape);
};

// Linear warmup to the peak rate, then cosine (or constant) decay.
double learning_rate_at(const RunConfig& config, int iteration);

// AdamW-style ascent step (beta1 0.9, beta2 0.999, weight decay 0) with
// global-norm gradient clipping at 1.0. A non-finite gradient aborts the
// step and leaves the parameters untouched; returns false in that case.
bool optimizer_step(OptimizerState& state, const ParamSet& gradient, const RunConfig& config,
                    int iteration);

struct IterationMetrics {
    int iter = 0;
    double mean_r_out = 0.0;
    double mean_r_sem = 0.0;
    double accuracy = 0.0;
    double mean_turns = 0.0;
    double grad_norm = 0.0;
    double rho_hat = 0.0;
    double lr = 0.0;
};

struct EvalResult {
    double accuracy = 0.0;
    double mean_sem = 0.0;
    double mean_turns = 0.0;
};

// Greedy decoding over freshly generated scenes.
EvalResult evaluate_greedy(const PolicyParams& params, const EmbeddingSpace& space,
                           const RunConfig& config, int n_scenes, std::uint64_t seed);

// Everything needed to continue a run mid-stream and reproduce the
// uninterrupted metrics: optimizer moments, the PPO-lite baseline, and the
// reward history feeding rho_hat.
struct TrainState {
    OptimizerState opt;
    int next_iter = 0;
    double ema_baseline = 0.0;
    bool ema_ready = false;
    std::vector<std::vector<double>> rout_history;
};

using MetricsSink = std::function<void(const IterationMetrics&)>;
using CheckpointSink = std::function<void(int iteration, const PolicyParams&)>;
using StateSink = std::function<void(int iteration, const TrainState&)>;

struct TrainResult {
    PolicyParams params;
    std::vector<IterationMetrics> metrics;
};

// Algorithm phases per iteration: (1) group rollouts and semantic scoring
// (parallel over queries and members, seeds derived per slot so the result
// is independent of worker count), (2) reward pairing and group-normalized
// composite advantages, (3) one surrogate ascent step per epoch. Passing a
// `resume` state continues an earlier run at resume->next_iter with
// bit-identical metrics from that point on.
TrainResult train(const RunConfig& config, const MetricsSink& metrics_sink = {},
                  const CheckpointSink& checkpoint_sink = {}, const StateSink& state_sink = {},
                  const TrainState* resume = nullptr);

// Deterministic scene/query/rollout seed derivation shared by train, eval
// and replay.
std::uint64_t scene_seed(const RunConfig& config, int iteration, int query_index);
std::uint64_t query_seed(const RunConfig& config, int iteration, int query_index);
std::uint64_t rollout_seed(const RunConfig& config, int iteration, int query_index,
                           int member_index);

}  // namespace mapo
