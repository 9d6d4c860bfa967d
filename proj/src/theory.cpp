#include "mapo/theory.hpp"

#include <array>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "mapo/parallel.hpp"

namespace mapo {

namespace {

double population_variance(const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    return var / static_cast<double>(v.size());
}

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(12);
    os << x;
    return os.str();
}

}  // namespace

std::vector<double> sample_equicorrelated(double rho, double sigma, int G, Rng& rng) {
    if (!(rho >= 0.0 && rho <= 1.0))
        throw std::invalid_argument("sample_equicorrelated: rho must be in [0,1]");
    if (!(sigma > 0.0)) throw std::invalid_argument("sample_equicorrelated: sigma must be > 0");
    double c = rng.normal();
    double sr = std::sqrt(rho);
    double se = std::sqrt(1.0 - rho);
    std::vector<double> r(G);
    for (auto& ri : r) ri = sigma * (sr * c + se * rng.normal());
    return r;
}

VarianceReport prop1_experiment(const std::vector<double>& rho_grid, double sigma2, int G,
                                long trials, std::uint64_t seed, int threads) {
    if (trials < 10000) throw std::invalid_argument("prop1_experiment: trials must be >= 1e4");
    double sigma = std::sqrt(sigma2);
    VarianceReport report;
    for (double rho : rho_grid) {
        // Advantage of a fixed group member; per-trial seeds keep the result
        // independent of the worker count.
        std::vector<double> a0(trials);
        parallel_for(static_cast<std::size_t>(trials), threads, [&](std::size_t t) {
            Rng rng(mix_seed(seed, 0x1de4ULL,
                             hash_bytes(reinterpret_cast<const char*>(&rho), sizeof rho),
                             static_cast<std::uint64_t>(t)));
            auto r = sample_equicorrelated(rho, sigma, G, rng);
            double mean = 0.0;
            for (double ri : r) mean += ri;
            mean /= G;
            a0[t] = r[0] - mean;
        });
        VarianceRow row;
        row.rho = rho;
        row.sigma2 = sigma2;
        row.G = G;
        row.trials = trials;
        row.empirical_var = population_variance(a0);
        row.analytic_var = (static_cast<double>(G - 1) / G) * (1.0 - rho) * sigma2;
        row.relative_error = row.analytic_var > 0.0
                                 ? std::abs(row.empirical_var - row.analytic_var) / row.analytic_var
                                 : row.empirical_var;
        report.rows.push_back(row);
    }
    return report;
}

std::string VarianceReport::csv() const {
    std::string out = "rho,sigma2,G,trials,empirical_var,analytic_var,relative_error\n";
    for (const auto& r : rows)
        out += fmt(r.rho) + "," + fmt(r.sigma2) + "," + std::to_string(r.G) + "," +
               std::to_string(r.trials) + "," + fmt(r.empirical_var) + "," + fmt(r.analytic_var) +
               "," + fmt(r.relative_error) + "\n";
    return out;
}

SignalReport prop2_experiment(const std::vector<double>& p_grid, double sigma_sem, long trials,
                              std::uint64_t seed, int threads) {
    constexpr int kStates = 3;
    constexpr std::array<double, kStates> kOffsets = {-0.05, 0.0, 0.05};
    double sigma_sem2 = sigma_sem * sigma_sem;
    SignalReport report;
    for (double p : p_grid) {
        std::array<double, kStates> pa{};
        double min_bern = 1.0;
        double baseline = 0.0;  // E[p(tau)] under the uniform toy policy
        for (int a = 0; a < kStates; ++a) {
            pa[a] = p + kOffsets[a];
            if (!(pa[a] > 0.0 && pa[a] < 1.0))
                throw std::invalid_argument("prop2_experiment: p grid leaves (0,1)");
            min_bern = std::min(min_bern, pa[a] * (1.0 - pa[a]));
            baseline += pa[a] / kStates;
        }
        if (!(sigma_sem2 < min_bern))
            throw std::invalid_argument(
                "prop2_experiment: requires sigma_sem^2 < p(1-p) across the grid");

        // Uniform softmax policy (theta = 0): grad log pi(a)_k = 1[k==a] - 1/3.
        std::vector<std::array<double, 2 * kStates>> samples(trials);
        parallel_for(static_cast<std::size_t>(trials), threads, [&](std::size_t t) {
            Rng rng(mix_seed(seed, 0x51e2ULL,
                             hash_bytes(reinterpret_cast<const char*>(&p), sizeof p),
                             static_cast<std::uint64_t>(t)));
            int a = static_cast<int>(rng.uniform_int(kStates));
            double r_out = rng.uniform() < pa[a] ? 1.0 : 0.0;
            double r_sem = pa[a] + sigma_sem * rng.normal();
            for (int k = 0; k < kStates; ++k) {
                double score = (k == a ? 1.0 : 0.0) - 1.0 / kStates;
                samples[t][k] = score * (r_out - baseline);
                samples[t][kStates + k] = score * (r_sem - baseline);
            }
        });

        SignalRow row;
        row.p = p;
        row.sigma_sem2 = sigma_sem2;
        row.trials = trials;
        for (int a = 0; a < kStates; ++a) row.sigma_out2 += pa[a] * (1.0 - pa[a]) / kStates;
        std::vector<double> comp(trials);
        for (int k = 0; k < 2 * kStates; ++k) {
            for (long t = 0; t < trials; ++t) comp[t] = samples[t][k];
            double var = population_variance(comp);
            (k < kStates ? row.var_g_out : row.var_g_sem) += var;
        }
        row.ratio = row.var_g_out / row.var_g_sem;
        report.rows.push_back(row);
    }
    return report;
}

std::string SignalReport::csv() const {
    std::string out = "p,sigma_out2,sigma_sem2,trials,var_g_out,var_g_sem,ratio\n";
    for (const auto& r : rows)
        out += fmt(r.p) + "," + fmt(r.sigma_out2) + "," + fmt(r.sigma_sem2) + "," +
               std::to_string(r.trials) + "," + fmt(r.var_g_out) + "," + fmt(r.var_g_sem) + "," +
               fmt(r.ratio) + "\n";
    return out;
}

ConvergenceReport convergence_experiment(double L, double Delta,
                                         const std::vector<double>& sigma2_grid,
                                         const std::vector<long>& T_grid, int reps,
                                         std::uint64_t seed, int threads) {
    constexpr int kDim = 10;
    ConvergenceReport report;
    for (double sigma2 : sigma2_grid) {
        for (long T : T_grid) {
            double eta = 1.0 / (L * std::sqrt(static_cast<double>(T)));
            double noise_sd = std::sqrt(sigma2 / kDim);  // per-coordinate
            std::vector<double> mins(reps);
            parallel_for(static_cast<std::size_t>(reps), threads, [&](std::size_t rep) {
                Rng rng(mix_seed(
                    seed, 0xc0deULL,
                    hash_bytes(reinterpret_cast<const char*>(&sigma2), sizeof sigma2),
                    static_cast<std::uint64_t>(T), static_cast<std::uint64_t>(rep)));
                // J(theta) = -(L/2)|theta|^2; start at the gap Delta.
                std::vector<double> theta(kDim, std::sqrt(2.0 * Delta / (L * kDim)));
                double min_g2 = 0.0;
                for (long t = 0; t < T; ++t) {
                    double g2 = 0.0;
                    for (double th : theta) g2 += (L * th) * (L * th);
                    if (t == 0 || g2 < min_g2) min_g2 = g2;
                    for (auto& th : theta) {
                        double g = -L * th + noise_sd * rng.normal();
                        th += eta * g;
                    }
                }
                mins[rep] = min_g2;
            });
            ConvergenceRow row;
            row.L = L;
            row.Delta = Delta;
            row.sigma2 = sigma2;
            row.T = T;
            for (double m : mins) row.min_grad_norm2 += m;
            row.min_grad_norm2 /= reps;
            row.bound = (2.0 * L * Delta + sigma2) / std::sqrt(static_cast<double>(T));
            row.satisfied = row.min_grad_norm2 <= row.bound;
            report.rows.push_back(row);
        }
    }
    return report;
}

std::string ConvergenceReport::csv() const {
    std::string out = "L,Delta,sigma2,T,min_grad_norm2,bound,satisfied\n";
    for (const auto& r : rows)
        out += fmt(r.L) + "," + fmt(r.Delta) + "," + fmt(r.sigma2) + "," + std::to_string(r.T) +
               "," + fmt(r.min_grad_norm2) + "," + fmt(r.bound) + "," +
               (r.satisfied ? "1" : "0") + "\n";
    return out;
}

RhoEstimate estimate_rho(const std::vector<std::vector<double>>& group_rewards) {
    RhoEstimate est;
    if (group_rewards.size() < 30) return est;
    double grand = 0.0;
    long n = 0;
    for (const auto& g : group_rewards)
        for (double r : g) {
            grand += r;
            ++n;
        }
    if (n == 0) return est;
    grand /= static_cast<double>(n);
    double var = 0.0;
    double cross = 0.0;
    long pairs = 0;
    for (const auto& g : group_rewards) {
        for (std::size_t i = 0; i < g.size(); ++i) {
            var += (g[i] - grand) * (g[i] - grand);
            for (std::size_t j = i + 1; j < g.size(); ++j) {
                cross += (g[i] - grand) * (g[j] - grand);
                ++pairs;
            }
        }
    }
    var /= static_cast<double>(n);
    if (var < 1e-12 || pairs == 0) return est;
    est.rho_hat = (cross / static_cast<double>(pairs)) / var;
    est.valid = true;
    return est;
}

}  // namespace mapo
