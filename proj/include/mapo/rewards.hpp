#pragma once

#include <vector>

namespace mapo {

struct Trajectory;  // policy.hpp
struct RunConfig;   // config.hpp

// Discounted per-step scores aggregated to the trajectory level:
//   R_sem = (1/T) * sum_{t=1..T} lambda^(T-t) * z_t
// T = z.size(); a trajectory with no tool calls scores 0. With lambda < 1
// this both tolerates early misses and penalizes long trajectories.
// Throws std::invalid_argument for z_t outside [-1,1] or lambda outside (0,1].
double trajectory_semantic_score(const std::vector<double>& z, double lambda);

// Undiscounted-sum ablation of the above (sum of z_t, no 1/T, no discount).
double trajectory_semantic_score_raw_sum(const std::vector<double>& z);

// (v_i - mean) / population std; all zeros when the population std is below
// 1e-12. Requires at least 2 values.
std::vector<double> group_normalize(const std::vector<double>& values);

// Mean-only variant (centering without scaling), exposed for ablation.
std::vector<double> group_center(const std::vector<double>& values);

inline double composite_advantage(double a_out, double a_sem, double beta) {
    return a_out + beta * a_sem;
}

// G trajectories answering one query, with their reward signals and the
// composite advantage assigned uniformly to every token of trajectory i.
struct GroupBatch {
    std::vector<Trajectory> trajectories;
    std::vector<double> r_out;
    std::vector<double> r_sem;
    std::vector<double> a_out;
    std::vector<double> a_sem;
    std::vector<double> a_tilde;
};

GroupBatch score_group(std::vector<Trajectory> trajectories, const RunConfig& config);

}  // namespace mapo
