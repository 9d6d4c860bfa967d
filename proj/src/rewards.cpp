#include "mapo/rewards.hpp"

#include <cmath>
#include <stdexcept>

#include "mapo/config.hpp"
#include "mapo/policy.hpp"

namespace mapo {

double trajectory_semantic_score(const std::vector<double>& z, double lambda) {
    if (!(lambda > 0.0 && lambda <= 1.0))
        throw std::invalid_argument("trajectory_semantic_score: lambda must be in (0,1]");
    for (double zt : z)
        if (!(zt >= -1.0 && zt <= 1.0))
            throw std::invalid_argument("trajectory_semantic_score: z_t outside [-1,1]");
    std::size_t T = z.size();
    if (T == 0) return 0.0;
    double sum = 0.0;
    double weight = 1.0;  // lambda^(T-t), walking t from T down to 1
    for (std::size_t t = T; t >= 1; --t) {
        sum += weight * z[t - 1];
        weight *= lambda;
    }
    return sum / static_cast<double>(T);
}

double trajectory_semantic_score_raw_sum(const std::vector<double>& z) {
    double sum = 0.0;
    for (double zt : z) {
        if (!(zt >= -1.0 && zt <= 1.0))
            throw std::invalid_argument("trajectory_semantic_score_raw_sum: z_t outside [-1,1]");
        sum += zt;
    }
    return sum;
}

std::vector<double> group_normalize(const std::vector<double>& values) {
    std::size_t n = values.size();
    if (n < 2) throw std::invalid_argument("group_normalize: need at least 2 values");
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);  // population variance
    double std_dev = std::sqrt(var);
    std::vector<double> out(n, 0.0);
    if (std_dev < 1e-12) return out;  // degenerate group carries no signal
    for (std::size_t i = 0; i < n; ++i) out[i] = (values[i] - mean) / std_dev;
    return out;
}

std::vector<double> group_center(const std::vector<double>& values) {
    std::size_t n = values.size();
    if (n < 2) throw std::invalid_argument("group_center: need at least 2 values");
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(n);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = values[i] - mean;
    return out;
}

GroupBatch score_group(std::vector<Trajectory> trajectories, const RunConfig& config) {
    if (trajectories.size() != static_cast<std::size_t>(config.group_size))
        throw std::invalid_argument("score_group: expected exactly G trajectories");
    for (const auto& traj : trajectories)
        if (!(traj.query == trajectories.front().query))
            throw std::invalid_argument("score_group: trajectories answer different queries");
    GroupBatch batch;
    batch.trajectories = std::move(trajectories);
    for (auto& traj : batch.trajectories) {
        auto z = traj.step_scores();
        traj.r_sem = config.sem_aggregation == SemAggregation::DiscountedMean
                         ? trajectory_semantic_score(z, config.lambda)
                         : trajectory_semantic_score_raw_sum(z);
        batch.r_out.push_back(traj.r_out);
        batch.r_sem.push_back(traj.r_sem);
    }
    auto normalize = [&](const std::vector<double>& v) {
        return config.sem_norm == SemNorm::Zscore ? group_normalize(v) : group_center(v);
    };
    batch.a_out = group_normalize(batch.r_out);
    batch.a_sem = normalize(batch.r_sem);
    batch.a_tilde.resize(batch.r_out.size());
    for (std::size_t i = 0; i < batch.a_tilde.size(); ++i)
        batch.a_tilde[i] = composite_advantage(batch.a_out[i], batch.a_sem[i], config.beta);
    return batch;
}

}  // namespace mapo
