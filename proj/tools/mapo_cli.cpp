// Command-line front end: training runs, greedy evaluation, theory
// experiments, scene generation, and transcript replay.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "mapo/env.hpp"
#include "mapo/optim.hpp"
#include "mapo/run_io.hpp"
#include "mapo/theory.hpp"

namespace {

using namespace mapo;

int cmd_train(const std::string& config_file, const std::string& out_dir, bool resume,
              int threads_override) {
    std::filesystem::create_directories(out_dir);
    RunLock lock(out_dir);

    RunConfig config;
    TrainState resume_state;
    bool have_resume_state = false;

    if (resume) {
        RunBundle bundle = load_run(out_dir);
        config = bundle.config;
        if (!config_file.empty()) {
            RunConfig given = load_config(config_file);
            if (config_hash(given) != config_hash(config))
                throw std::runtime_error("--resume: --config disagrees with the stored run config");
        }
        if (bundle.checkpoint_iters.empty())
            throw std::runtime_error("--resume: no checkpoints in " + out_dir);
        int last = bundle.checkpoint_iters.back();
        Vocabulary vocab = default_vocabulary();
        PolicyShape shape = PolicyShape::make(vocab, config.grid_size,
                                              static_cast<std::size_t>(config.embed_dim),
                                              config.max_turns);
        resume_state = load_train_state(state_path(out_dir, last), shape);
        have_resume_state = true;
    } else {
        config = config_file.empty() ? RunConfig{} : load_config(config_file);
    }
    if (threads_override > 0) config.threads = threads_override;
    config.validate();

    if (!resume) {
        std::ofstream cfg(config_path(out_dir));
        cfg << serialize_config(config);
        if (!cfg) throw std::runtime_error("cannot write " + config_path(out_dir));

        // Scene records for the first training batch, for offline inspection.
        Vocabulary vocab = default_vocabulary();
        std::ofstream scenes(scenes_path(out_dir));
        for (int q = 0; q < config.batch_queries; ++q)
            write_scene(scenes, generate_scene(scene_seed(config, 0, q), config.grid_size,
                                               config.target_class, vocab));
    }

    MetricsWriter writer(metrics_path(out_dir), make_run_header(config), resume);
    auto metrics_sink = [&](const IterationMetrics& m) { writer.append(m); };
    auto checkpoint_sink = [&](int iter, const PolicyParams& p) {
        save_policy(policy_path(out_dir, iter), p);
    };
    auto state_sink = [&](int iter, const TrainState& st) {
        save_train_state(state_path(out_dir, iter), st);
    };

    TrainResult result = train(config, metrics_sink, checkpoint_sink, state_sink,
                               have_resume_state ? &resume_state : nullptr);
    if (result.metrics.empty()) {
        std::cout << "run already complete at " << config.iterations << " iterations\n";
        return 0;
    }
    const auto& last = result.metrics.back();
    std::cout << "trained " << config.iterations << " iterations: accuracy=" << last.accuracy
              << " mean_r_sem=" << last.mean_r_sem << " rho_hat=" << last.rho_hat << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& config_file, int scenes,
             std::uint64_t seed) {
    RunConfig config = config_file.empty() ? RunConfig{} : load_config(config_file);
    config.validate();
    Vocabulary vocab = default_vocabulary();
    EmbeddingSpace space(vocab, config.embed_seed, static_cast<std::size_t>(config.embed_dim));
    PolicyShape shape = PolicyShape::make(vocab, config.grid_size,
                                          static_cast<std::size_t>(config.embed_dim),
                                          config.max_turns);
    PolicyParams params = load_policy(checkpoint, shape);
    EvalResult r = evaluate_greedy(params, space, config, scenes, seed);
    std::cout << "accuracy=" << r.accuracy << " mean_sem=" << r.mean_sem
              << " mean_turns=" << r.mean_turns << " scenes=" << scenes << "\n";
    return 0;
}

void emit_report(const std::string& csv, const std::string& out_file) {
    std::cout << csv;
    if (!out_file.empty()) {
        std::ofstream out(out_file);
        out << csv;
        if (!out) throw std::runtime_error("cannot write " + out_file);
    }
}

int cmd_scene_gen(std::uint64_t seed, int n, const std::string& out_file, int grid_size,
                  int target_class) {
    Vocabulary vocab = default_vocabulary();
    std::ofstream out(out_file);
    if (!out) throw std::runtime_error("cannot write " + out_file);
    for (int i = 0; i < n; ++i)
        write_scene(out, generate_scene(mix_seed(seed, static_cast<std::uint64_t>(i)), grid_size,
                                        target_class, vocab));
    std::cout << "wrote " << n << " scenes to " << out_file << "\n";
    return 0;
}

int cmd_replay(const std::string& run_dir, int index, int iter) {
    RunBundle bundle = load_run(run_dir);
    bool have = false;
    for (int k : bundle.checkpoint_iters) have = have || k == iter;
    if (!have)
        throw std::runtime_error("replay: no checkpoint for iteration " + std::to_string(iter));
    Vocabulary vocab = default_vocabulary();
    EmbeddingSpace space(vocab, bundle.config.embed_seed,
                         static_cast<std::size_t>(bundle.config.embed_dim));
    PolicyShape shape = PolicyShape::make(vocab, bundle.config.grid_size,
                                          static_cast<std::size_t>(bundle.config.embed_dim),
                                          bundle.config.max_turns);
    PolicyParams params = load_policy(policy_path(run_dir, iter), shape);
    std::cout << render_transcript(bundle.config, params, space, iter, index);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"NeedleGrid policy-optimization laboratory"};
    app.require_subcommand(1);

    // train
    auto* train_cmd = app.add_subcommand("train", "run the optimizer loop");
    std::string config_file, out_dir;
    bool resume = false;
    int threads_override = 0;
    train_cmd->add_option("--config", config_file, "key=value config file");
    train_cmd->add_option("--out", out_dir, "run directory")->required();
    train_cmd->add_flag("--resume", resume, "continue from the last checkpoint in --out");
    train_cmd->add_option("--threads", threads_override, "worker threads (overrides config)");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "greedy evaluation of a checkpoint");
    std::string checkpoint, eval_config;
    int eval_scenes = 200;
    std::uint64_t eval_seed = 99;
    eval_cmd->add_option("--checkpoint", checkpoint, "policy checkpoint")->required();
    eval_cmd->add_option("--config", eval_config, "key=value config file");
    eval_cmd->add_option("--scenes", eval_scenes, "number of evaluation scenes");
    eval_cmd->add_option("--seed", eval_seed, "evaluation seed");

    // theory
    auto* theory_cmd = app.add_subcommand("theory", "run a theory experiment");
    theory_cmd->require_subcommand(1);
    theory_cmd->fallthrough();
    std::string theory_out;
    std::uint64_t theory_seed = 7;
    int theory_threads = 1;
    long trials1 = 200000, trials2 = 100000;
    std::vector<double> rho_grid = {0.0, 0.5, 0.9};
    double sigma2 = 1.0;
    int G = 8;
    std::vector<double> p_grid = {0.2, 0.5, 0.8};
    double sigma_sem = 0.05;
    double conv_L = 1.0, conv_delta = 1.0;
    std::vector<double> sigma2_grid = {0.0, 0.25, 1.0};
    std::vector<long> T_grid = {100, 1000, 10000};
    int reps = 100;
    theory_cmd->add_option("--out", theory_out, "also write the CSV here");
    theory_cmd->add_option("--seed", theory_seed, "experiment seed");
    theory_cmd->add_option("--threads", theory_threads, "worker threads");
    auto* prop1_cmd = theory_cmd->add_subcommand("prop1", "group-baseline variance reduction");
    prop1_cmd->add_option("--rho", rho_grid, "correlation grid");
    prop1_cmd->add_option("--sigma2", sigma2, "reward variance");
    prop1_cmd->add_option("--group-size", G, "group size");
    prop1_cmd->add_option("--trials", trials1, "Monte-Carlo trials");
    auto* prop2_cmd = theory_cmd->add_subcommand("prop2", "dense-signal variance reduction");
    prop2_cmd->add_option("--p", p_grid, "success-probability grid");
    prop2_cmd->add_option("--sigma-sem", sigma_sem, "semantic noise std");
    prop2_cmd->add_option("--trials", trials2, "Monte-Carlo trials");
    auto* conv_cmd = theory_cmd->add_subcommand("convergence", "SGD convergence bound");
    conv_cmd->add_option("--L", conv_L, "curvature");
    conv_cmd->add_option("--delta", conv_delta, "initial optimality gap");
    conv_cmd->add_option("--sigma2", sigma2_grid, "noise-variance grid");
    conv_cmd->add_option("--T", T_grid, "horizon grid");
    conv_cmd->add_option("--reps", reps, "repetitions per cell");

    // scene-gen
    auto* scene_cmd = app.add_subcommand("scene-gen", "write scene records");
    std::uint64_t scene_seed_opt = 1;
    int scene_n = 1, scene_grid = 8, scene_target = 7;
    std::string scene_out;
    scene_cmd->add_option("--seed", scene_seed_opt, "base seed");
    scene_cmd->add_option("--n", scene_n, "number of scenes");
    scene_cmd->add_option("--out", scene_out, "output file")->required();
    scene_cmd->add_option("--grid", scene_grid, "grid size N");
    scene_cmd->add_option("--target-class", scene_target, "target object class id");

    // replay
    auto* replay_cmd = app.add_subcommand("replay", "re-render one trajectory transcript");
    std::string run_dir;
    int replay_index = 0, replay_iter = 0;
    replay_cmd->add_option("--run", run_dir, "run directory")->required();
    replay_cmd->add_option("--index", replay_index, "flat batch index (query*G + member)")
        ->required();
    replay_cmd->add_option("--iter", replay_iter, "checkpoint iteration to replay");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 1;
    }

    try {
        if (*train_cmd) return cmd_train(config_file, out_dir, resume, threads_override);
        if (*eval_cmd) return cmd_eval(checkpoint, eval_config, eval_scenes, eval_seed);
        if (*theory_cmd) {
            if (*prop1_cmd) {
                auto rep = prop1_experiment(rho_grid, sigma2, G, trials1, theory_seed,
                                            theory_threads);
                emit_report(rep.csv(), theory_out);
            } else if (*prop2_cmd) {
                auto rep = prop2_experiment(p_grid, sigma_sem, trials2, theory_seed,
                                            theory_threads);
                emit_report(rep.csv(), theory_out);
            } else {
                auto rep = convergence_experiment(conv_L, conv_delta, sigma2_grid, T_grid, reps,
                                                  theory_seed, theory_threads);
                emit_report(rep.csv(), theory_out);
            }
            return 0;
        }
        if (*scene_cmd)
            return cmd_scene_gen(scene_seed_opt, scene_n, scene_out, scene_grid, scene_target);
        if (*replay_cmd) return cmd_replay(run_dir, replay_index, replay_iter);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
