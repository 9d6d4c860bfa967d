#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <unistd.h>
#include <string>
#include <vector>

#include "mapo/policy.hpp"
#include "mapo/rewards.hpp"
#include "mapo/verifier.hpp"

using namespace mapo;

namespace {

const Vocabulary kVocab = default_vocabulary();

EmbeddingSpace make_space() { return EmbeddingSpace(kVocab, 2024, 64); }

RunConfig small_config() {
    RunConfig c;
    c.grid_size = 4;
    c.target_class = 3;
    c.max_turns = 3;
    return c;
}

PolicyShape shape_for(const RunConfig& c) {
    return PolicyShape::make(kVocab, c.grid_size, (std::size_t)c.embed_dim, c.max_turns);
}

PolicyParams random_params(const PolicyShape& shape, std::uint64_t seed, double scale) {
    PolicyParams p = PolicyParams::zeros(shape);
    Rng rng(seed);
    for (auto& m : p.weights)
        for (auto& x : m.data) x = scale * rng.normal();
    return p;
}

double sum_logprobs(const PolicyParams& p, const Trajectory& t, double temp) {
    auto lp = token_logprobs(p, t, temp);
    return std::accumulate(lp.begin(), lp.end(), 0.0);
}

// Parameters that, for this specific scene, zoom straight onto the target
// cell with its exact description and then answer correctly. The query-class
// one-hot is always active, so keying big logits off it fixes the action.
PolicyParams oracle_params(const PolicyShape& shape, const Scene& scene, const Query& query) {
    PolicyParams p = PolicyParams::zeros(shape);
    const double big = 500.0;
    p.weights[kHeadMode](kModeZoom, shape.turn_offset + 0) = big;
    for (int t = 1; t <= shape.max_turns; ++t)
        p.weights[kHeadMode](kModeAnswer, shape.turn_offset + t) = big;
    p.weights[kHeadCell](scene.target_cell, shape.query_offset + query.target_class) = big;
    const CellContent& target = scene.cells[scene.target_cell];
    int label = kVocab.label_id(target.object_class, target.color, target.size);
    p.weights[kHeadLabel](label, shape.query_offset + query.target_class) = big;
    p.weights[kHeadAnswer](query.ground_truth, shape.query_offset + query.target_class) = big;
    return p;
}

}  // namespace

TEST_CASE("PolicyShape lays the state vector out contiguously") {
    RunConfig c = small_config();
    PolicyShape s = shape_for(c);
    CHECK(s.attr_offset == kVocab.num_objects());
    CHECK(s.coarse_offset == s.attr_offset + 2);
    CHECK(s.patch_offset == s.coarse_offset + 64);
    CHECK(s.turn_offset == s.patch_offset + 64);
    CHECK(s.d_s == s.turn_offset + 4);
    CHECK(s.arity == std::array<std::size_t, 4>{2, 16, 144, 9});
    CHECK_THROWS_AS(PolicyShape::make(kVocab, 16, 64, 6), std::invalid_argument);
    CHECK_THROWS_AS(PolicyShape::make(Vocabulary{}, 4, 64, 6), std::invalid_argument);
}

TEST_CASE("featurize_state encodes query, views and turn") {
    RunConfig c = small_config();
    PolicyShape shape = shape_for(c);
    auto space = make_space();
    Scene scene = generate_scene(3, c.grid_size, c.target_class, kVocab);
    Query q = make_query(scene, 4, kVocab);
    Observation coarse = initial_observation(scene, space);

    auto x = featurize_state(shape, q, {coarse}, 0);
    REQUIRE(x.size() == shape.d_s);
    CHECK(x[shape.query_offset + q.target_class] == 1.0);
    int attr = q.asked_attribute == Query::Attribute::Color ? 0 : 1;
    CHECK(x[shape.attr_offset + attr] == 1.0);
    CHECK(x[shape.attr_offset + (1 - attr)] == 0.0);
    for (std::size_t i = 0; i < shape.d_obs; ++i) {
        CHECK(x[shape.coarse_offset + i] == coarse.features[i]);
        CHECK(x[shape.patch_offset + i] == 0.0);  // no patch yet
    }
    CHECK(x[shape.turn_offset + 0] == 1.0);
    CHECK(x[shape.turn_offset + 1] == 0.0);

    // Only the most recent tool observation is encoded.
    Observation p1 = execute_zoom(scene, cell_bbox(scene, 0), space);
    Observation p2 = execute_zoom(scene, cell_bbox(scene, 5), space);
    auto y = featurize_state(shape, q, {coarse, p1, p2}, 2);
    for (std::size_t i = 0; i < shape.d_obs; ++i)
        CHECK(y[shape.patch_offset + i] == p2.features[i]);
    CHECK(y[shape.turn_offset + 2] == 1.0);

    CHECK_THROWS_AS(featurize_state(shape, q, {}, 0), std::invalid_argument);
    CHECK_THROWS_AS(featurize_state(shape, q, {coarse}, shape.max_turns + 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(featurize_state(shape, q, {coarse}, -1), std::invalid_argument);
}

TEST_CASE("zero parameters give the uniform distribution") {
    RunConfig c = small_config();
    PolicyShape shape = shape_for(c);
    PolicyParams p = PolicyParams::zeros(shape);
    std::vector<double> x(shape.d_s, 0.0);
    x[0] = 1.0;
    for (int h = 0; h < kNumHeads; ++h) {
        auto d = action_distribution(p, x, h, c.temperature);
        REQUIRE(d.size() == shape.arity[h]);
        double sum = 0.0;
        for (double pk : d) {
            CHECK(pk == doctest::Approx(1.0 / shape.arity[h]).epsilon(1e-12));
            sum += pk;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("high temperature flattens any distribution") {
    RunConfig c = small_config();
    PolicyShape shape = shape_for(c);
    PolicyParams p = random_params(shape, 8, 1.0);
    std::vector<double> x(shape.d_s, 0.5);
    auto d = action_distribution(p, x, kHeadCell, 1e6);
    for (double pk : d) CHECK(pk == doctest::Approx(1.0 / shape.arity[kHeadCell]).epsilon(1e-3));
}

TEST_CASE("probabilities sum to one and exponentiate the logprobs") {
    RunConfig c = small_config();
    PolicyShape shape = shape_for(c);
    PolicyParams p = random_params(shape, 9, 0.3);
    std::vector<double> x(shape.d_s, 0.0);
    x[2] = 1.0;
    x[shape.turn_offset] = 1.0;
    for (int h = 0; h < kNumHeads; ++h) {
        auto lp = action_logprobs(p, x, h, c.temperature);
        auto d = action_distribution(p, x, h, c.temperature);
        double sum = 0.0;
        for (std::size_t k = 0; k < d.size(); ++k) {
            CHECK(d[k] == std::exp(lp[k]));  // same code path, bit for bit
            sum += d[k];
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(logprob_of_choice(p, x, h, 0, c.temperature) == lp[0]);
    }
}

TEST_CASE("non-finite logits and bad temperatures are rejected") {
    RunConfig c = small_config();
    PolicyShape shape = shape_for(c);
    PolicyParams p = PolicyParams::zeros(shape);
    std::vector<double> x(shape.d_s, 0.0);
    x[0] = 1.0;
    CHECK_THROWS_AS(action_distribution(p, x, kHeadMode, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(action_distribution(p, x, kHeadMode, -1.0), std::invalid_argument);
    p.weights[kHeadMode](0, 0) = 1e308;
    CHECK_THROWS_AS(action_distribution(p, x, kHeadMode, 0.5), std::domain_error);
    std::vector<double> wrong(shape.d_s + 1, 0.0);
    CHECK_THROWS_AS(action_distribution(p, wrong, kHeadMode, 1.0), std::invalid_argument);
}

TEST_CASE("rollouts are deterministic and respect the turn cap") {
    RunConfig c = small_config();
    PolicyShape shape = shape_for(c);
    auto space = make_space();
    PolicyParams p = random_params(shape, 10, 0.2);
    Scene scene = generate_scene(11, c.grid_size, c.target_class, kVocab);
    Query q = make_query(scene, 12, kVocab);

    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        Rng r1(seed), r2(seed);
        Trajectory a = sample_trajectory(p, scene, q, space, c, r1);
        Trajectory b = sample_trajectory(p, scene, q, space, c, r2);
        CHECK(a.answer == b.answer);
        CHECK(a.token_count == b.token_count);
        REQUIRE(a.steps.size() == b.steps.size());
        for (std::size_t s = 0; s < a.steps.size(); ++s)
            CHECK(a.steps[s].tokens == b.steps[s].tokens);

        CHECK(a.tool_calls <= c.max_turns);
        CHECK(a.token_count == 3 * a.tool_calls + 2);
        CHECK((a.r_out == 0.0 || a.r_out == 1.0));
        CHECK(a.answer >= 0);
        CHECK(a.step_scores().size() == (std::size_t)a.tool_calls);
    }
}

TEST_CASE("the turn cap forces a terminal answer") {
    RunConfig c = small_config();
    PolicyShape shape = shape_for(c);
    auto space = make_space();
    // Mode head pinned to Zoom at every turn: only the cap can stop it.
    PolicyParams p = PolicyParams::zeros(shape);
    for (int t = 0; t <= shape.max_turns; ++t)
        p.weights[kHeadMode](kModeZoom, shape.turn_offset + t) = 500.0;
    Scene scene = generate_scene(13, c.grid_size, c.target_class, kVocab);
    Query q = make_query(scene, 14, kVocab);
    Rng rng(1);
    Trajectory t = sample_trajectory(p, scene, q, space, c, rng);
    CHECK(t.tool_calls == c.max_turns);
    CHECK(t.steps.size() == (std::size_t)c.max_turns + 1);
    CHECK(t.steps.back().tokens.front().choice == kModeAnswer);
}

TEST_CASE("stored behavior logprobs match recomputation bit for bit") {
    RunConfig c = small_config();
    PolicyShape shape = shape_for(c);
    auto space = make_space();
    PolicyParams p = random_params(shape, 15, 0.3);
    Scene scene = generate_scene(16, c.grid_size, c.target_class, kVocab);
    Query q = make_query(scene, 17, kVocab);
    Rng rng(18);
    Trajectory t = sample_trajectory(p, scene, q, space, c, rng);
    auto lp = token_logprobs(p, t, c.temperature);
    std::size_t i = 0;
    for (const auto& step : t.steps)
        for (const auto& tok : step.tokens) CHECK(lp.at(i++) == tok.behavior_logprob);
    CHECK(i == (std::size_t)t.token_count);
}

TEST_CASE("a scripted expert solves the task through the policy interface") {
    RunConfig c;
    c.grid_size = 8;
    c.target_class = 7;
    PolicyShape shape = PolicyShape::make(kVocab, c.grid_size, 64, c.max_turns);
    auto space = make_space();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Scene scene = generate_scene(mix_seed(100, seed), c.grid_size, c.target_class, kVocab);
        Query q = make_query(scene, mix_seed(101, seed), kVocab);
        PolicyParams p = oracle_params(shape, scene, q);
        Trajectory t = greedy_trajectory(p, scene, q, space, c);
        CHECK(t.tool_calls == 1);
        CHECK(t.r_out == 1.0);
        REQUIRE(t.steps.front().z.has_value());
        CHECK(*t.steps.front().z >= 0.9);
    }
}

TEST_CASE("grad_logprob has the closed softmax form on one token") {
    RunConfig c = small_config();
    PolicyShape shape = shape_for(c);
    PolicyParams p = PolicyParams::zeros(shape);

    Trajectory t;
    Step s;
    s.state_features.assign(shape.d_s, 0.0);
    s.state_features[1] = 2.0;
    s.state_features[5] = -1.0;
    s.tokens.push_back(DecisionToken{kHeadMode, 0, std::log(0.5)});
    t.steps.push_back(s);
    t.token_count = 1;

    ParamSet g = grad_logprob(p, t, c.temperature);
    // Uniform p = 1/2: row 0 gets (1 - 1/2)/temp * x, row 1 gets -(1/2)/temp * x.
    double coef = 0.5 / c.temperature;
    CHECK(g[kHeadMode](0, 1) == doctest::Approx(2.0 * coef).epsilon(1e-12));
    CHECK(g[kHeadMode](0, 5) == doctest::Approx(-1.0 * coef).epsilon(1e-12));
    CHECK(g[kHeadMode](1, 1) == doctest::Approx(-2.0 * coef).epsilon(1e-12));
    CHECK(g[kHeadMode](1, 5) == doctest::Approx(1.0 * coef).epsilon(1e-12));
    CHECK(g[kHeadMode](0, 0) == 0.0);
    for (int h = 1; h < kNumHeads; ++h) CHECK(norm({g[h]}) == 0.0);
}

TEST_CASE("grad_logprob matches central finite differences") {
    RunConfig c = small_config();
    PolicyShape shape = shape_for(c);
    auto space = make_space();
    PolicyParams p = random_params(shape, 20, 0.2);
    Scene scene = generate_scene(21, c.grid_size, c.target_class, kVocab);
    Query q = make_query(scene, 22, kVocab);
    Rng rng(23);
    Trajectory t = sample_trajectory(p, scene, q, space, c, rng);

    ParamSet g = grad_logprob(p, t, c.temperature);
    Rng dir(24);
    for (int rep = 0; rep < 4; ++rep) {
        ParamSet v = zeros_like(g);
        double gv = 0.0;
        for (std::size_t h = 0; h < v.size(); ++h)
            for (std::size_t i = 0; i < v[h].data.size(); ++i) {
                v[h].data[i] = dir.normal();
                gv += g[h].data[i] * v[h].data[i];
            }
        const double h_step = 1e-6;
        PolicyParams plus = p, minus = p;
        axpy(plus.weights, h_step, v);
        axpy(minus.weights, -h_step, v);
        double fd =
            (sum_logprobs(plus, t, c.temperature) - sum_logprobs(minus, t, c.temperature)) /
            (2.0 * h_step);
        CHECK(fd == doctest::Approx(gv).epsilon(1e-5));
    }
}

TEST_CASE("a saturated policy has a vanishing gradient") {
    RunConfig c;
    c.grid_size = 8;
    c.target_class = 7;
    PolicyShape shape = PolicyShape::make(kVocab, c.grid_size, 64, c.max_turns);
    auto space = make_space();
    Scene scene = generate_scene(30, c.grid_size, c.target_class, kVocab);
    Query q = make_query(scene, 31, kVocab);
    PolicyParams p = oracle_params(shape, scene, q);
    Trajectory t = greedy_trajectory(p, scene, q, space, c);
    ParamSet g = grad_logprob(p, t, c.temperature);
    CHECK(norm(g) < 1e-8);
}

TEST_CASE("the score function averages to zero over many rollouts") {
    RunConfig c = small_config();
    PolicyShape shape = shape_for(c);
    auto space = make_space();
    PolicyParams p = random_params(shape, 40, 0.1);
    Scene scene = generate_scene(41, c.grid_size, c.target_class, kVocab);
    Query q = make_query(scene, 42, kVocab);

    auto mean_grad_norm = [&](int n) {
        ParamSet acc = zeros_like(p.weights);
        for (int i = 0; i < n; ++i) {
            Rng rng(mix_seed(43, (std::uint64_t)i));
            Trajectory t = sample_trajectory(p, scene, q, space, c, rng);
            axpy(acc, 1.0 / n, grad_logprob(p, t, c.temperature));
        }
        return norm(acc);
    };
    double n200 = mean_grad_norm(200);
    double n3200 = mean_grad_norm(3200);
    // Monte Carlo error shrinks like 1/sqrt(n); 16x the samples, ~4x smaller.
    CHECK(n3200 < 0.5 * n200);
}

TEST_CASE("checkpoints round-trip and reject mismatches") {
    RunConfig c = small_config();
    PolicyShape shape = shape_for(c);
    PolicyParams p = random_params(shape, 50, 0.7);
    std::string path = "/tmp/mapo_test_policy.bin";
    save_policy(path, p);
    PolicyParams q = load_policy(path, shape);
    for (int h = 0; h < kNumHeads; ++h) CHECK(q.weights[h].data == p.weights[h].data);

    PolicyShape other = PolicyShape::make(kVocab, 8, 64, c.max_turns);
    CHECK_THROWS_AS(load_policy(path, other), std::runtime_error);
    CHECK_THROWS_AS(load_policy("/tmp/mapo_no_such_file.bin", shape), std::runtime_error);

    // Truncated payload.
    {
        std::FILE* f = std::fopen(path.c_str(), "rb");
        std::fseek(f, 0, SEEK_END);
        long size = std::ftell(f);
        std::fclose(f);
        REQUIRE(truncate(path.c_str(), size / 2) == 0);
    }
    CHECK_THROWS_AS(load_policy(path, shape), std::runtime_error);

    std::ofstream(path) << "something-else 4 2 16 144 9 198\n";
    CHECK_THROWS_AS(load_policy(path, shape), std::runtime_error);
    std::remove(path.c_str());
}
