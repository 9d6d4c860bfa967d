#include "mapo/policy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace mapo {

PolicyShape PolicyShape::make(const Vocabulary& vocab, int grid_size, std::size_t d_obs,
                              int max_turns) {
    if (vocab.empty()) throw std::invalid_argument("PolicyShape: empty vocabulary");
    if (static_cast<std::size_t>(grid_size) * grid_size > d_obs)
        throw std::invalid_argument("PolicyShape: grid does not fit the observation dimension");
    PolicyShape s;
    s.grid_size = grid_size;
    s.max_turns = max_turns;
    s.d_obs = d_obs;
    s.query_offset = 0;
    s.attr_offset = vocab.num_objects();
    s.coarse_offset = s.attr_offset + 2;
    s.patch_offset = s.coarse_offset + d_obs;
    s.turn_offset = s.patch_offset + d_obs;
    s.d_s = s.turn_offset + static_cast<std::size_t>(max_turns) + 1;
    s.arity = {2, static_cast<std::size_t>(grid_size) * grid_size, vocab.num_labels(),
               vocab.num_answers()};
    return s;
}

PolicyParams PolicyParams::zeros(const PolicyShape& shape) {
    PolicyParams p;
    p.shape = shape;
    for (int h = 0; h < kNumHeads; ++h) p.weights.emplace_back(shape.arity[h], shape.d_s);
    return p;
}

std::vector<double> Trajectory::step_scores() const {
    std::vector<double> z;
    z.reserve(steps.size());
    for (const auto& s : steps)
        if (s.z) z.push_back(*s.z);
    return z;
}

std::vector<double> featurize_state(const PolicyShape& shape, const Query& query,
                                    const std::vector<Observation>& history, int turn) {
    if (history.empty())
        throw std::invalid_argument("featurize_state: history must contain the coarse view");
    if (turn < 0 || turn > shape.max_turns)
        throw std::invalid_argument("featurize_state: turn out of range");
    std::vector<double> x(shape.d_s, 0.0);
    x[shape.query_offset + query.target_class] = 1.0;
    x[shape.attr_offset + (query.asked_attribute == Query::Attribute::Color ? 0 : 1)] = 1.0;
    const Observation& coarse = history.front();
    for (std::size_t i = 0; i < shape.d_obs; ++i) x[shape.coarse_offset + i] = coarse.features[i];
    // Only the most recent tool observation is encoded.
    for (auto it = history.rbegin(); it != history.rend(); ++it) {
        if (it->kind == ObsKind::Coarse) continue;
        for (std::size_t i = 0; i < shape.d_obs; ++i) x[shape.patch_offset + i] = it->features[i];
        break;
    }
    x[shape.turn_offset + turn] = 1.0;
    return x;
}

namespace {

// Returns log-probabilities for one head (softmax of logits/temperature).
std::vector<double> head_logprobs(const PolicyParams& params, const std::vector<double>& features,
                                  int head, double temperature) {
    if (temperature <= 0.0) throw std::invalid_argument("temperature must be > 0");
    if (features.size() != params.shape.d_s)
        throw std::invalid_argument("feature dimension mismatch");
    const Matrix& w = params.weights.at(head);
    std::vector<double> logits(w.rows);
    for (std::size_t k = 0; k < w.rows; ++k) {
        logits[k] = dot(w.row(k), features.data(), w.cols) / temperature;
        if (!std::isfinite(logits[k])) throw std::domain_error("non-finite logits");
    }
    double mx = *std::max_element(logits.begin(), logits.end());
    double lse = 0.0;
    for (double l : logits) lse += std::exp(l - mx);
    lse = mx + std::log(lse);
    for (auto& l : logits) l -= lse;
    return logits;
}

int sample_from_logprobs(const std::vector<double>& lp, Rng& rng) {
    double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t k = 0; k < lp.size(); ++k) {
        acc += std::exp(lp[k]);
        if (u < acc) return static_cast<int>(k);
    }
    return static_cast<int>(lp.size()) - 1;
}

int argmax(const std::vector<double>& v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

Trajectory roll(const PolicyParams& params, const Scene& scene, const Query& query,
                const EmbeddingSpace& space, const RunConfig& config, Rng* rng) {
    const Vocabulary& vocab = space.vocab();
    Trajectory traj;
    traj.query = query;
    std::vector<Observation> history{initial_observation(scene, space)};

    auto pick = [&](const std::vector<double>& features, int head) {
        auto lp = head_logprobs(params, features, head, config.temperature);
        int choice = rng ? sample_from_logprobs(lp, *rng) : argmax(lp);
        return DecisionToken{head, choice, lp[choice]};
    };

    for (int turn = 0;; ++turn) {
        Step step;
        step.state_features = featurize_state(params.shape, query, history, turn);

        DecisionToken mode;
        if (turn == config.max_turns) {
            // The turn cap binds by forcing the terminal answer; the mode
            // token is still recorded with its policy log-prob.
            auto lp = head_logprobs(params, step.state_features, kHeadMode, config.temperature);
            mode = DecisionToken{kHeadMode, kModeAnswer, lp[kModeAnswer]};
        } else {
            mode = pick(step.state_features, kHeadMode);
        }
        step.tokens.push_back(mode);

        if (mode.choice == kModeZoom) {
            DecisionToken cell = pick(step.state_features, kHeadCell);
            DecisionToken label = pick(step.state_features, kHeadLabel);
            step.tokens.push_back(cell);
            step.tokens.push_back(label);

            ToolCall tc;
            tc.name = kZoomToolName;
            tc.image_idx = 1;  // zooms are expressed on the original image
            tc.bbox = cell_bbox(scene, cell.choice);
            tc.label = vocab.label_string(label.choice);
            step.tool_call = tc;

            Observation obs = execute_zoom(scene, tc.bbox, space);
            step.z = semantic_score(space, tc.label, obs);
            history.push_back(obs);
            step.observation = std::move(obs);

            traj.tool_calls += 1;
            traj.token_count += 3;
            traj.steps.push_back(std::move(step));
        } else {
            DecisionToken answer = pick(step.state_features, kHeadAnswer);
            step.tokens.push_back(answer);
            traj.answer = answer.choice;
            traj.token_count += 2;
            traj.steps.push_back(std::move(step));
            break;
        }
    }
    traj.r_out = judge_answer(query, traj.answer, vocab);
    return traj;
}

}  // namespace

std::vector<double> action_logprobs(const PolicyParams& params,
                                    const std::vector<double>& features, int head,
                                    double temperature) {
    return head_logprobs(params, features, head, temperature);
}

std::vector<double> action_distribution(const PolicyParams& params,
                                        const std::vector<double>& features, int head,
                                        double temperature) {
    auto lp = head_logprobs(params, features, head, temperature);
    for (auto& l : lp) l = std::exp(l);
    return lp;
}

double logprob_of_choice(const PolicyParams& params, const std::vector<double>& features,
                         int head, int choice, double temperature) {
    auto lp = head_logprobs(params, features, head, temperature);
    return lp.at(choice);
}

Trajectory sample_trajectory(const PolicyParams& params, const Scene& scene, const Query& query,
                             const EmbeddingSpace& space, const RunConfig& config, Rng& rng) {
    return roll(params, scene, query, space, config, &rng);
}

Trajectory greedy_trajectory(const PolicyParams& params, const Scene& scene, const Query& query,
                             const EmbeddingSpace& space, const RunConfig& config) {
    return roll(params, scene, query, space, config, nullptr);
}

ParamSet grad_logprob(const PolicyParams& params, const Trajectory& trajectory,
                      double temperature) {
    ParamSet grad = zeros_like(params.weights);
    for (const auto& step : trajectory.steps) {
        if (step.state_features.size() != params.shape.d_s)
            throw std::invalid_argument("grad_logprob: trajectory/params shape mismatch");
        for (const auto& tok : step.tokens) {
            auto probs = action_distribution(params, step.state_features, tok.head, temperature);
            Matrix& g = grad[tok.head];
            double inv_temp = 1.0 / temperature;
            for (std::size_t k = 0; k < g.rows; ++k) {
                double coef = ((k == static_cast<std::size_t>(tok.choice) ? 1.0 : 0.0) - probs[k]) *
                              inv_temp;
                if (coef == 0.0) continue;
                double* row = g.row(k);
                const double* x = step.state_features.data();
                for (std::size_t i = 0; i < g.cols; ++i) row[i] += coef * x[i];
            }
        }
    }
    return grad;
}

std::vector<double> token_logprobs(const PolicyParams& params, const Trajectory& trajectory,
                                   double temperature) {
    std::vector<double> out;
    out.reserve(trajectory.token_count);
    for (const auto& step : trajectory.steps)
        for (const auto& tok : step.tokens)
            out.push_back(logprob_of_choice(params, step.state_features, tok.head, tok.choice,
                                            temperature));
    return out;
}

void save_policy(const std::string& path, const PolicyParams& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_policy: cannot open " + path);
    out << "mapo-policy-v1 " << kNumHeads;
    for (int h = 0; h < kNumHeads; ++h) out << " " << params.shape.arity[h];
    out << " " << params.shape.d_s << "\n";
    for (const auto& m : params.weights)
        out.write(reinterpret_cast<const char*>(m.data.data()),
                  static_cast<std::streamsize>(m.data.size() * sizeof(double)));
    if (!out) throw std::runtime_error("save_policy: write failed for " + path);
}

PolicyParams load_policy(const std::string& path, const PolicyShape& shape) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_policy: cannot open " + path);
    std::string header;
    if (!std::getline(in, header)) throw std::runtime_error("load_policy: missing header");
    std::istringstream hs(header);
    std::string magic;
    int heads = 0;
    hs >> magic >> heads;
    if (magic != "mapo-policy-v1" || heads != kNumHeads)
        throw std::runtime_error("load_policy: bad header: " + header);
    std::array<std::size_t, kNumHeads> arity{};
    std::size_t d_s = 0;
    for (auto& a : arity) hs >> a;
    hs >> d_s;
    if (!hs || arity != shape.arity || d_s != shape.d_s)
        throw std::runtime_error("load_policy: checkpoint shape does not match configuration");

    PolicyParams p = PolicyParams::zeros(shape);
    for (auto& m : p.weights) {
        in.read(reinterpret_cast<char*>(m.data.data()),
                static_cast<std::streamsize>(m.data.size() * sizeof(double)));
        if (!in) throw std::runtime_error("load_policy: truncated checkpoint");
    }
    return p;
}

}  // namespace mapo
