#include "mapo/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "mapo/parallel.hpp"
#include "mapo/theory.hpp"

namespace mapo {

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
constexpr double kGradClipNorm = 1.0;
constexpr double kPpoBaselineAlpha = 0.1;

void check_not_stale(const Trajectory& traj, const PolicyParams& old_params,
                     double temperature) {
    auto lp = token_logprobs(old_params, traj, temperature);
    std::size_t i = 0;
    for (const auto& step : traj.steps)
        for (const auto& tok : step.tokens)
            if (std::abs(lp[i++] - tok.behavior_logprob) > 1e-9)
                throw std::invalid_argument(
                    "surrogate: trajectory behavior log-probs do not match old_params");
}

}  // namespace

std::vector<double> importance_ratios(const PolicyParams& params, const Trajectory& trajectory,
                                      RatioMode mode, double temperature) {
    auto new_lp = token_logprobs(params, trajectory, temperature);
    std::vector<double> delta;
    delta.reserve(new_lp.size());
    std::size_t i = 0;
    for (const auto& step : trajectory.steps)
        for (const auto& tok : step.tokens) delta.push_back(new_lp[i++] - tok.behavior_logprob);
    if (mode == RatioMode::Token) {
        for (auto& d : delta) d = std::exp(d);
        return delta;
    }
    double mean = 0.0;
    for (double d : delta) mean += d;
    mean /= static_cast<double>(delta.size());
    return {std::exp(mean)};
}

ObjectiveResult surrogate_objective_and_gradient(const std::vector<const Trajectory*>& batch,
                                                 const std::vector<double>& advantages,
                                                 const PolicyParams& params,
                                                 const PolicyParams& old_params,
                                                 const RunConfig& config, bool clip) {
    if (batch.size() != advantages.size())
        throw std::invalid_argument("surrogate: batch/advantage size mismatch");
    if (batch.empty()) throw std::invalid_argument("surrogate: empty batch");
    if (!(params.shape == old_params.shape))
        throw std::invalid_argument("surrogate: params/old_params shape mismatch");
    if (!batch.empty()) check_not_stale(*batch.front(), old_params, config.temperature);

    ObjectiveResult res;
    res.gradient = zeros_like(params.weights);
    double inv_batch = 1.0 / static_cast<double>(batch.size());
    double inv_temp = 1.0 / config.temperature;

    for (std::size_t b = 0; b < batch.size(); ++b) {
        const Trajectory& traj = *batch[b];
        double a = advantages[b];
        double inv_len = 1.0 / static_cast<double>(traj.token_count);

        // Per-token probabilities under the new params, reused for both the
        // ratio and the analytic score-function gradient.
        struct TokenEval {
            const Step* step;
            const DecisionToken* tok;
            std::vector<double> probs;
            double delta;  // new log-prob minus behavior log-prob
        };
        std::vector<TokenEval> evals;
        evals.reserve(traj.token_count);
        for (const auto& step : traj.steps) {
            for (const auto& tok : step.tokens) {
                // Same log-softmax path as the sampler, so delta is exactly
                // zero at theta = theta_old.
                auto lp = action_logprobs(params, step.state_features, tok.head,
                                          config.temperature);
                double delta = lp[tok.choice] - tok.behavior_logprob;
                for (auto& l : lp) l = std::exp(l);
                evals.push_back({&step, &tok, std::move(lp), delta});
            }
        }

        // coefficient c such that this token contributes c * grad(log pi).
        auto accumulate = [&](const TokenEval& e, double c) {
            if (c == 0.0) return;
            Matrix& g = res.gradient[e.tok->head];
            const double* x = e.step->state_features.data();
            for (std::size_t k = 0; k < g.rows; ++k) {
                double coef =
                    c * ((k == static_cast<std::size_t>(e.tok->choice) ? 1.0 : 0.0) - e.probs[k]) *
                    inv_temp;
                if (coef == 0.0) continue;
                double* row = g.row(k);
                for (std::size_t i = 0; i < g.cols; ++i) row[i] += coef * x[i];
            }
        };

        if (config.ratio_mode == RatioMode::Token) {
            for (const auto& e : evals) {
                double w = std::exp(e.delta);
                double term = clip ? clipped_term(w, a, config.epsilon) : w * a;
                res.objective += inv_batch * inv_len * term;
                // The min/clip picks the active branch; a clipped-and-
                // pessimal token contributes zero gradient.
                bool active = !clip || (w * a <= term);
                if (active) accumulate(e, inv_batch * inv_len * a * w);
            }
        } else {
            double mean_delta = 0.0;
            for (const auto& e : evals) mean_delta += e.delta;
            mean_delta *= inv_len;
            double w = std::exp(mean_delta);
            double term = clip ? clipped_term(w, a, config.epsilon) : w * a;
            res.objective += inv_batch * term;
            bool active = !clip || (w * a <= term);
            if (active)
                for (const auto& e : evals) accumulate(e, inv_batch * inv_len * a * w);
        }
    }
    return res;
}

ObjectiveResult mapo_objective_and_gradient(const std::vector<GroupBatch>& groups,
                                            const PolicyParams& params,
                                            const PolicyParams& old_params,
                                            const RunConfig& config) {
    std::vector<const Trajectory*> batch;
    std::vector<double> advantages;
    for (const auto& g : groups) {
        if (g.trajectories.size() != static_cast<std::size_t>(config.group_size))
            throw std::invalid_argument("mapo_objective_and_gradient: group size mismatch");
        for (std::size_t i = 0; i < g.trajectories.size(); ++i) {
            batch.push_back(&g.trajectories[i]);
            advantages.push_back(g.a_tilde[i]);
        }
    }
    return surrogate_objective_and_gradient(batch, advantages, params, old_params, config, true);
}

OptimizerState OptimizerState::init(const PolicyShape& shape) {
    OptimizerState s;
    s.params = PolicyParams::zeros(shape);
    s.m = zeros_like(s.params.weights);
    s.v = zeros_like(s.params.weights);
    return s;
}

double learning_rate_at(const RunConfig& config, int iteration) {
    int warmup_iters = static_cast<int>(std::lround(config.warmup * config.iterations));
    if (warmup_iters > 0 && iteration < warmup_iters)
        return config.learning_rate * static_cast<double>(iteration) / warmup_iters;
    if (config.schedule == Schedule::Constant) return config.learning_rate;
    int span = config.iterations - warmup_iters;
    if (span <= 1) return config.learning_rate;
    double progress = static_cast<double>(iteration - warmup_iters) / span;
    return config.learning_rate * 0.5 * (1.0 + std::cos(M_PI * progress));
}

bool optimizer_step(OptimizerState& state, const ParamSet& gradient, const RunConfig& config,
                    int iteration) {
    if (!all_finite(gradient)) return false;
    ParamSet g = gradient;
    double gnorm = norm(g);
    // Direction-preserving global-norm clip.
    if (gnorm > kGradClipNorm) scale(g, kGradClipNorm / gnorm);

    state.step += 1;
    double lr = learning_rate_at(config, iteration);
    double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
    for (std::size_t h = 0; h < g.size(); ++h) {
        for (std::size_t i = 0; i < g[h].data.size(); ++i) {
            double gi = g[h].data[i];
            double& m = state.m[h].data[i];
            double& v = state.v[h].data[i];
            m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * gi;
            v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * gi * gi;
            double mhat = m / bc1;
            double vhat = v / bc2;
            state.params.weights[h].data[i] += lr * mhat / (std::sqrt(vhat) + kAdamEps);
        }
    }
    return true;
}

std::uint64_t scene_seed(const RunConfig& config, int iteration, int query_index) {
    return mix_seed(config.seed, 0xa11ce5ULL, static_cast<std::uint64_t>(iteration),
                    static_cast<std::uint64_t>(query_index));
}

std::uint64_t query_seed(const RunConfig& config, int iteration, int query_index) {
    return mix_seed(config.seed, 0xbee71ULL, static_cast<std::uint64_t>(iteration),
                    static_cast<std::uint64_t>(query_index));
}

std::uint64_t rollout_seed(const RunConfig& config, int iteration, int query_index,
                           int member_index) {
    return mix_seed(config.seed, 0xc0ffeULL, static_cast<std::uint64_t>(iteration),
                    static_cast<std::uint64_t>(query_index),
                    static_cast<std::uint64_t>(member_index));
}

EvalResult evaluate_greedy(const PolicyParams& params, const EmbeddingSpace& space,
                           const RunConfig& config, int n_scenes, std::uint64_t seed) {
    std::vector<Trajectory> trajs(n_scenes);
    parallel_for(static_cast<std::size_t>(n_scenes), config.threads, [&](std::size_t i) {
        std::uint64_t s = mix_seed(seed, 0xe7a1ULL, static_cast<std::uint64_t>(i));
        Scene scene = generate_scene(s, config.grid_size, config.target_class, space.vocab());
        Query query = make_query(scene, mix_seed(s, 1), space.vocab());
        trajs[i] = greedy_trajectory(params, scene, query, space, config);
    });
    EvalResult r;
    for (const auto& t : trajs) {
        r.accuracy += t.r_out;
        r.mean_sem += trajectory_semantic_score(t.step_scores(), config.lambda);
        r.mean_turns += t.tool_calls;
    }
    double inv = 1.0 / static_cast<double>(n_scenes);
    r.accuracy *= inv;
    r.mean_sem *= inv;
    r.mean_turns *= inv;
    return r;
}

TrainResult train(const RunConfig& config, const MetricsSink& metrics_sink,
                  const CheckpointSink& checkpoint_sink, const StateSink& state_sink,
                  const TrainState* resume) {
    config.validate();
    Vocabulary vocab = default_vocabulary();
    EmbeddingSpace space(vocab, config.embed_seed, static_cast<std::size_t>(config.embed_dim));
    PolicyShape shape =
        PolicyShape::make(vocab, config.grid_size, static_cast<std::size_t>(config.embed_dim),
                          config.max_turns);

    TrainState st;
    if (resume) {
        if (!(resume->opt.params.shape == shape))
            throw std::invalid_argument("train: resume state does not match the configuration");
        st = *resume;
    } else {
        st.opt = OptimizerState::init(shape);
    }

    // GRPO is MAPO with the semantic weight off; sharing the exact code path
    // keeps the two bit-identical under the same seed.
    RunConfig ecfg = config;
    if (config.estimator == Estimator::Grpo) ecfg.beta = 0.0;

    TrainResult result;
    if (!resume) {
        if (checkpoint_sink) checkpoint_sink(0, st.opt.params);
        if (state_sink) state_sink(0, st);
    }

    const int Q = config.batch_queries;
    const int G = config.group_size;

    for (int iter = st.next_iter; iter < config.iterations; ++iter) {
        OptimizerState& state = st.opt;
        PolicyParams old_params = state.params;

        // Phase 1: group sampling and semantic scoring.
        std::vector<Scene> scenes(Q);
        std::vector<Query> queries(Q);
        for (int q = 0; q < Q; ++q) {
            scenes[q] = generate_scene(scene_seed(ecfg, iter, q), ecfg.grid_size,
                                       ecfg.target_class, vocab);
            queries[q] = make_query(scenes[q], query_seed(ecfg, iter, q), vocab);
        }
        std::vector<Trajectory> trajs(static_cast<std::size_t>(Q) * G);
        parallel_for(trajs.size(), ecfg.threads, [&](std::size_t i) {
            int q = static_cast<int>(i) / G;
            int g = static_cast<int>(i) % G;
            Rng rng(rollout_seed(ecfg, iter, q, g));
            trajs[i] = sample_trajectory(old_params, scenes[q], queries[q], space, ecfg, rng);
        });

        // Phase 2: trajectory supervision signals.
        std::vector<GroupBatch> groups;
        groups.reserve(Q);
        for (int q = 0; q < Q; ++q) {
            std::vector<Trajectory> members(trajs.begin() + static_cast<std::size_t>(q) * G,
                                            trajs.begin() + static_cast<std::size_t>(q + 1) * G);
            groups.push_back(score_group(std::move(members), ecfg));
        }

        IterationMetrics m;
        m.iter = iter;
        for (const auto& g : groups) {
            st.rout_history.push_back(g.r_out);
            for (std::size_t i = 0; i < g.trajectories.size(); ++i) {
                m.mean_r_out += g.r_out[i];
                m.mean_r_sem += g.r_sem[i];
                m.mean_turns += g.trajectories[i].tool_calls;
            }
        }
        double inv_n = 1.0 / static_cast<double>(Q * G);
        m.mean_r_out *= inv_n;
        m.mean_r_sem *= inv_n;
        m.mean_turns *= inv_n;

        // Phase 3: policy update.
        for (int epoch = 0; epoch < ecfg.epochs_per_iter; ++epoch) {
            ObjectiveResult obj;
            switch (ecfg.estimator) {
                case Estimator::Mapo:
                case Estimator::Grpo:
                    obj = mapo_objective_and_gradient(groups, state.params, old_params, ecfg);
                    break;
                case Estimator::PpoLite:
                case Estimator::Reinforce: {
                    std::vector<const Trajectory*> batch;
                    std::vector<double> adv;
                    for (const auto& g : groups)
                        for (std::size_t i = 0; i < g.trajectories.size(); ++i) {
                            batch.push_back(&g.trajectories[i]);
                            double baseline = (ecfg.estimator == Estimator::PpoLite && st.ema_ready)
                                                  ? st.ema_baseline
                                                  : 0.0;
                            adv.push_back(g.r_out[i] - baseline);
                        }
                    obj = surrogate_objective_and_gradient(batch, adv, state.params, old_params,
                                                           ecfg,
                                                           ecfg.estimator == Estimator::PpoLite);
                    break;
                }
            }
            if (epoch == 0) m.grad_norm = norm(obj.gradient);
            optimizer_step(state, obj.gradient, ecfg, iter);
        }

        if (ecfg.estimator == Estimator::PpoLite) {
            if (!st.ema_ready) {
                st.ema_baseline = m.mean_r_out;
                st.ema_ready = true;
            } else {
                st.ema_baseline = (1.0 - kPpoBaselineAlpha) * st.ema_baseline +
                                  kPpoBaselineAlpha * m.mean_r_out;
            }
        }

        // Greedy accuracy on this iteration's queries under the updated policy.
        {
            double acc = 0.0;
            std::vector<double> accs(Q, 0.0);
            parallel_for(static_cast<std::size_t>(Q), ecfg.threads, [&](std::size_t q) {
                Trajectory t =
                    greedy_trajectory(state.params, scenes[q], queries[q], space, ecfg);
                accs[q] = t.r_out;
            });
            for (double a : accs) acc += a;
            m.accuracy = acc / Q;
        }

        auto rho = estimate_rho(st.rout_history);
        m.rho_hat = rho.valid ? rho.rho_hat : 0.0;
        m.lr = learning_rate_at(ecfg, iter);

        if (metrics_sink) metrics_sink(m);
        result.metrics.push_back(m);

        st.next_iter = iter + 1;
        if (st.next_iter % ecfg.checkpoint_interval == 0 || st.next_iter == ecfg.iterations) {
            if (checkpoint_sink) checkpoint_sink(st.next_iter, state.params);
            if (state_sink) state_sink(st.next_iter, st);
        }
    }
    result.params = std::move(st.opt.params);
    return result;
}

}  // namespace mapo
