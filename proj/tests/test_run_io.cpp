#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "mapo/run_io.hpp"
#include "mapo/verifier.hpp"

using namespace mapo;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("mapo_runio_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
    static int counter;
};
int TempDir::counter = 0;

IterationMetrics metrics_at(int iter) {
    IterationMetrics m;
    m.iter = iter;
    m.mean_r_out = 0.125 + iter;
    m.mean_r_sem = -0.25;
    m.accuracy = 0.5;
    m.mean_turns = 3.75;
    m.grad_norm = 0.1234567890123456;
    m.rho_hat = -0.01;
    m.lr = 0.05;
    return m;
}

bool same_metrics(const IterationMetrics& a, const IterationMetrics& b) {
    return a.iter == b.iter && a.mean_r_out == b.mean_r_out && a.mean_r_sem == b.mean_r_sem &&
           a.accuracy == b.accuracy && a.mean_turns == b.mean_turns &&
           a.grad_norm == b.grad_norm && a.rho_hat == b.rho_hat && a.lr == b.lr;
}

PolicyShape small_shape() {
    return PolicyShape::make(default_vocabulary(), 4, 64, 3);
}

}  // namespace

TEST_CASE("run headers carry the config identity") {
    RunConfig c;
    RunHeader h = make_run_header(c);
    CHECK(h.config_hash == config_hash(c));
    CHECK(h.seed == c.seed);
    CHECK(h.code_version == std::string(kCodeVersion));
    REQUIRE(h.start_time.size() == 20);
    CHECK(h.start_time[10] == 'T');
    CHECK(h.start_time.back() == 'Z');
}

TEST_CASE("metrics write/read round trip is exact") {
    TempDir dir;
    RunConfig c;
    RunHeader h = make_run_header(c);
    std::string path = metrics_path(dir.str());
    {
        MetricsWriter w(path, h);
        for (int i = 0; i < 3; ++i) w.append(metrics_at(i));
    }
    MetricsFile f = read_metrics(path);
    CHECK(f.header.config_hash == h.config_hash);
    CHECK(f.header.seed == h.seed);
    CHECK(f.header.start_time == h.start_time);
    CHECK(f.header.code_version == h.code_version);
    REQUIRE(f.records.size() == 3);
    for (int i = 0; i < 3; ++i) CHECK(same_metrics(f.records[i], metrics_at(i)));

    // Append mode continues the same file without a second header.
    {
        MetricsWriter w(path, h, /*append=*/true);
        w.append(metrics_at(7));
    }
    MetricsFile g = read_metrics(path);
    REQUIRE(g.records.size() == 4);
    CHECK(g.records.back().iter == 7);
}

TEST_CASE("the metrics writer refuses corrupt records") {
    TempDir dir;
    RunConfig c;
    MetricsWriter w(metrics_path(dir.str()), make_run_header(c));
    w.append(metrics_at(0));
    CHECK_THROWS_AS(w.append(metrics_at(0)), std::runtime_error);  // not increasing
    IterationMetrics bad = metrics_at(1);
    bad.grad_norm = std::nan("");
    CHECK_THROWS_AS(w.append(bad), std::runtime_error);
    w.append(metrics_at(1));  // still usable after a rejected record
}

TEST_CASE("read_metrics classifies broken files") {
    TempDir dir;
    CHECK_THROWS_AS(read_metrics(dir.str() + "/missing.jsonl"), std::runtime_error);

    std::string p = dir.str() + "/m.jsonl";
    std::ofstream(p) << "";
    CHECK_THROWS_AS(read_metrics(p), CorruptRunError);
    std::ofstream(p) << "not json\n";
    CHECK_THROWS_AS(read_metrics(p), CorruptRunError);
    std::ofstream(p) << "{\"seed\":1}\n";  // header missing its hash
    CHECK_THROWS_AS(read_metrics(p), CorruptRunError);

    RunConfig c;
    {
        MetricsWriter w(p, make_run_header(c));
        w.append(metrics_at(0));
    }
    std::ofstream(p, std::ios::app) << "broken record\n";
    CHECK_THROWS_AS(read_metrics(p), CorruptRunError);
}

TEST_CASE("train state round-trips bit for bit") {
    PolicyShape shape = small_shape();
    TrainState st;
    st.opt = OptimizerState::init(shape);
    Rng rng(5);
    for (auto* set : {&st.opt.params.weights, &st.opt.m, &st.opt.v})
        for (auto& m : *set)
            for (auto& x : m.data) x = rng.normal();
    st.opt.step = 17;
    st.next_iter = 4;
    st.ema_baseline = 0.123456789012345678;
    st.ema_ready = true;
    for (int g = 0; g < 12; ++g)
        st.rout_history.push_back({rng.uniform(), rng.uniform(), rng.uniform()});

    TempDir dir;
    std::string path = state_path(dir.str(), 4);
    save_train_state(path, st);
    TrainState back = load_train_state(path, shape);
    CHECK(back.next_iter == st.next_iter);
    CHECK(back.opt.step == st.opt.step);
    CHECK(back.ema_ready == st.ema_ready);
    CHECK(back.ema_baseline == st.ema_baseline);
    for (std::size_t h = 0; h < st.opt.params.weights.size(); ++h) {
        CHECK(back.opt.params.weights[h].data == st.opt.params.weights[h].data);
        CHECK(back.opt.m[h].data == st.opt.m[h].data);
        CHECK(back.opt.v[h].data == st.opt.v[h].data);
    }
    CHECK(back.rout_history == st.rout_history);
}

TEST_CASE("train state loader rejects damaged files") {
    PolicyShape shape = small_shape();
    TempDir dir;
    CHECK_THROWS_AS(load_train_state(dir.str() + "/none.bin", shape), std::runtime_error);

    std::string p = dir.str() + "/bad.bin";
    std::ofstream(p) << "other-magic 0 0 0 0 0 0\n";
    CHECK_THROWS_AS(load_train_state(p, shape), CorruptRunError);

    TrainState st;
    st.opt = OptimizerState::init(shape);
    save_train_state(p, st);
    fs::resize_file(p, fs::file_size(p) / 2);
    CHECK_THROWS_AS(load_train_state(p, shape), CorruptRunError);

    TrainState ragged;
    ragged.opt = OptimizerState::init(shape);
    ragged.rout_history = {{1.0, 2.0}, {1.0}};
    CHECK_THROWS_AS(save_train_state(p, ragged), std::invalid_argument);
}

TEST_CASE("bundle path layout") {
    CHECK(config_path("run") == "run/config.cfg");
    CHECK(metrics_path("run") == "run/metrics.jsonl");
    CHECK(policy_path("run", 50) == "run/policy_50.bin");
    CHECK(state_path("run", 50) == "run/state_50.bin");
    CHECK(scenes_path("run") == "run/scenes.txt");
}

TEST_CASE("the run lock is exclusive and released on destruction") {
    TempDir dir;
    {
        RunLock lock(dir.str());
        CHECK(fs::exists(dir.path / "lock"));
        CHECK_THROWS_AS(RunLock{dir.str()}, std::runtime_error);
    }
    CHECK(!fs::exists(dir.path / "lock"));
    RunLock again(dir.str());  // reacquirable once released
}

TEST_CASE("load_run validates the bundle against its header") {
    TempDir dir;
    RunConfig c;
    c.iterations = 4;
    std::ofstream(config_path(dir.str())) << serialize_config(c);
    {
        MetricsWriter w(metrics_path(dir.str()), make_run_header(c));
        w.append(metrics_at(0));
        w.append(metrics_at(1));
    }
    PolicyShape shape = PolicyShape::make(default_vocabulary(), c.grid_size,
                                          (std::size_t)c.embed_dim, c.max_turns);
    save_policy(policy_path(dir.str(), 0), PolicyParams::zeros(shape));
    save_policy(policy_path(dir.str(), 2), PolicyParams::zeros(shape));

    RunBundle b = load_run(dir.str());
    CHECK(b.config.iterations == 4);
    CHECK(b.metrics.size() == 2);
    CHECK(b.checkpoint_iters == std::vector<int>{0, 2});

    // Tampering with the stored config breaks the header hash.
    RunConfig tampered = c;
    tampered.beta = 0.9;
    std::ofstream(config_path(dir.str())) << serialize_config(tampered);
    CHECK_THROWS_AS(load_run(dir.str()), CorruptRunError);

    fs::remove(config_path(dir.str()));
    CHECK_THROWS_AS(load_run(dir.str()), std::runtime_error);
}

TEST_CASE("transcripts replay the exact logged rollout") {
    RunConfig c;
    c.grid_size = 4;
    c.target_class = 3;
    c.max_turns = 3;
    c.group_size = 4;
    c.batch_queries = 2;
    EmbeddingSpace space(default_vocabulary(), c.embed_seed, 64);
    PolicyShape shape = PolicyShape::make(default_vocabulary(), c.grid_size, 64, c.max_turns);
    PolicyParams params = PolicyParams::zeros(shape);

    std::string a = render_transcript(c, params, space, 0, 3);
    std::string b = render_transcript(c, params, space, 0, 3);
    CHECK(a == b);
    CHECK(a.rfind("# trajectory iter=0 query=0 member=3", 0) == 0);
    CHECK(a.find("query: class=") != std::string::npos);
    CHECK(a.find("r_out = ") != std::string::npos);
    CHECK(a.find("a_tilde = ") != std::string::npos);

    // Every serialized tool call in the transcript re-parses.
    std::istringstream is(a);
    std::string line;
    int tool_lines = 0, answer_lines = 0;
    while (std::getline(is, line)) {
        auto pos = line.find("<tool_call>");
        if (pos != std::string::npos) {
            auto r = parse_tool_call(line.substr(pos));
            CHECK(r.ok());
            ++tool_lines;
        }
        if (line.find(": answer \"") != std::string::npos) ++answer_lines;
    }
    CHECK(answer_lines == 1);
    CHECK(tool_lines <= c.max_turns);

    // A different member of the same group renders differently.
    CHECK(render_transcript(c, params, space, 0, 2) != a);

    CHECK_THROWS_AS(render_transcript(c, params, space, 0, -1), std::out_of_range);
    CHECK_THROWS_AS(render_transcript(c, params, space, 0, c.batch_queries * c.group_size),
                    std::out_of_range);
}
