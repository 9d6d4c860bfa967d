#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mapo/rng.hpp"

namespace mapo {

// r_i = sigma * (sqrt(rho) * c + sqrt(1-rho) * e_i) with c, e_i independent
// standard normals: Var(r_i) = sigma^2 and corr(r_i, r_j) = rho exactly.
std::vector<double> sample_equicorrelated(double rho, double sigma, int G, Rng& rng);

struct VarianceRow {
    double rho = 0.0;
    double sigma2 = 0.0;
    int G = 0;
    long trials = 0;
    double empirical_var = 0.0;
    double analytic_var = 0.0;  // ((G-1)/G) * (1-rho) * sigma2
    double relative_error = 0.0;
};

struct VarianceReport {
    std::vector<VarianceRow> rows;
    std::string csv() const;
};

// Spatial variance reduction: draws `trials` equicorrelated groups per rho,
// forms the group-mean-baselined advantage of a fixed member, and compares
// its empirical variance to the closed form.
VarianceReport prop1_experiment(const std::vector<double>& rho_grid, double sigma2, int G,
                                long trials, std::uint64_t seed = 7, int threads = 1);

struct SignalRow {
    double p = 0.0;
    double sigma_out2 = 0.0;  // mean Bernoulli conditional variance
    double sigma_sem2 = 0.0;
    long trials = 0;
    double var_g_out = 0.0;  // trace of the score-estimator covariance
    double var_g_sem = 0.0;
    double ratio = 0.0;  // var_g_out / var_g_sem
};

struct SignalReport {
    std::vector<SignalRow> rows;
    std::string csv() const;
};

// Signal variance reduction on a 3-state toy softmax policy. Success
// probabilities sit at p + {-0.05, 0, +0.05}; the sparse channel draws
// r_out ~ Bernoulli(p(tau)), the dense channel r_sem = p(tau) +
// Normal(0, sigma_sem^2). Both estimators use the mean-centered reward
// g = grad log pi(tau) * (r - E[p(tau)]).
SignalReport prop2_experiment(const std::vector<double>& p_grid, double sigma_sem, long trials,
                              std::uint64_t seed = 7, int threads = 1);

struct ConvergenceRow {
    double L = 0.0;
    double Delta = 0.0;
    double sigma2 = 0.0;
    long T = 0;
    double min_grad_norm2 = 0.0;
    double bound = 0.0;  // (2*L*Delta + sigma2) / sqrt(T)
    bool satisfied = false;
};

struct ConvergenceReport {
    std::vector<ConvergenceRow> rows;
    std::string csv() const;
};

// Stochastic gradient ascent on a concave quadratic with curvature L and
// initial gap Delta, constant step 1/(L*sqrt(T)), additive Gaussian gradient
// noise of total variance sigma2. Reports min over t of |grad J(theta_t)|^2
// averaged over `reps` repetitions per (sigma2, T) cell.
ConvergenceReport convergence_experiment(double L, double Delta,
                                         const std::vector<double>& sigma2_grid,
                                         const std::vector<long>& T_grid, int reps = 100,
                                         std::uint64_t seed = 7, int threads = 1);

struct RhoEstimate {
    double rho_hat = 0.0;
    bool valid = false;
};

// Pooled pairwise correlation across groups: grand-mean-centered cross
// products over within-group pairs divided by the pooled variance. Flagged
// invalid (never thrown) below 30 groups or when the pooled variance is
// degenerate (< 1e-12).
RhoEstimate estimate_rho(const std::vector<std::vector<double>>& group_rewards);

}  // namespace mapo
