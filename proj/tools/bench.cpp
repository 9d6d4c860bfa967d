// Serial-reference vs OpenMP timing for the two hot loops: trajectory
// rollouts and the Monte-Carlo variance kernel.

#include <cstdio>
#include <cstdlib>

#include "mapo/optim.hpp"
#include "mapo/parallel.hpp"
#include "mapo/theory.hpp"

using namespace mapo;

namespace {

double time_rollouts(const RunConfig& config, int threads) {
    Vocabulary vocab = default_vocabulary();
    EmbeddingSpace space(vocab, config.embed_seed, static_cast<std::size_t>(config.embed_dim));
    PolicyShape shape = PolicyShape::make(vocab, config.grid_size,
                                          static_cast<std::size_t>(config.embed_dim),
                                          config.max_turns);
    PolicyParams params = PolicyParams::zeros(shape);
    const int n = 512;
    Scene scene = generate_scene(1, config.grid_size, config.target_class, vocab);
    Query query = make_query(scene, 2, vocab);
    std::vector<Trajectory> out(n);
    double t0 = wall_time();
    parallel_for(n, threads, [&](std::size_t i) {
        Rng rng(mix_seed(7, static_cast<std::uint64_t>(i)));
        out[i] = sample_trajectory(params, scene, query, space, config, rng);
    });
    return wall_time() - t0;
}

double time_prop1(int threads) {
    double t0 = wall_time();
    (void)prop1_experiment({0.0, 0.5, 0.9}, 1.0, 8, 200000, 7, threads);
    return wall_time() - t0;
}

}  // namespace

int main(int argc, char** argv) {
    int threads = argc > 1 ? std::atoi(argv[1]) : 4;
    RunConfig config;
    config.validate();

    // Warm-up pass so first-touch allocation does not skew the serial number.
    time_rollouts(config, 1);

    double roll_serial = time_rollouts(config, 1);
    double roll_par = time_rollouts(config, threads);
    double p1_serial = time_prop1(1);
    double p1_par = time_prop1(threads);

    std::printf("kernel            serial_s   par_s(%d)   speedup\n", threads);
    std::printf("rollout_batch     %8.4f   %8.4f   %6.2fx\n", roll_serial, roll_par,
                roll_par > 0 ? roll_serial / roll_par : 0.0);
    std::printf("prop1_mc          %8.4f   %8.4f   %6.2fx\n", p1_serial, p1_par,
                p1_par > 0 ? p1_serial / p1_par : 0.0);
    return 0;
}
