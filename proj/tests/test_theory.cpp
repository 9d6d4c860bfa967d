#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "mapo/theory.hpp"

using namespace mapo;

TEST_CASE("equicorrelated generator hits its moments") {
    // rho = 1: the group collapses onto the shared component.
    Rng rng(1);
    auto r = sample_equicorrelated(1.0, 2.0, 8, rng);
    for (double ri : r) CHECK(ri == doctest::Approx(r[0]).epsilon(1e-12));

    // rho = 0.5, sigma = 2: variance 4 and correlation 0.5 within 2%.
    const long n = 100000;
    double s = 0.0, s2 = 0.0, cross = 0.0;
    Rng rng2(2);
    for (long t = 0; t < n; ++t) {
        auto g = sample_equicorrelated(0.5, 2.0, 2, rng2);
        s += g[0] + g[1];
        s2 += g[0] * g[0] + g[1] * g[1];
        cross += g[0] * g[1];
    }
    double mean = s / (2 * n);
    double var = s2 / (2 * n) - mean * mean;
    double cov = cross / n - mean * mean;
    CHECK(var == doctest::Approx(4.0).epsilon(0.02));
    CHECK(cov / var == doctest::Approx(0.5).epsilon(0.02));

    // rho = 0: members are independent.
    double cross0 = 0.0;
    Rng rng3(3);
    for (long t = 0; t < n; ++t) {
        auto g = sample_equicorrelated(0.0, 1.0, 2, rng3);
        cross0 += g[0] * g[1];
    }
    CHECK(std::abs(cross0 / n) < 0.02);
}

TEST_CASE("equicorrelated generator validates its arguments") {
    Rng rng(4);
    CHECK_THROWS_AS(sample_equicorrelated(-0.1, 1.0, 8, rng), std::invalid_argument);
    CHECK_THROWS_AS(sample_equicorrelated(1.1, 1.0, 8, rng), std::invalid_argument);
    CHECK_THROWS_AS(sample_equicorrelated(0.5, 0.0, 8, rng), std::invalid_argument);
    CHECK_THROWS_AS(sample_equicorrelated(0.5, -1.0, 8, rng), std::invalid_argument);
}

TEST_CASE("baselined advantage variance matches the closed form") {
    auto rep = prop1_experiment({0.0, 0.9}, 1.0, 8, 20000);
    REQUIRE(rep.rows.size() == 2);
    CHECK(rep.rows[0].analytic_var == doctest::Approx(0.875).epsilon(1e-12));
    CHECK(rep.rows[1].analytic_var == doctest::Approx(0.0875).epsilon(1e-12));
    for (const auto& row : rep.rows) CHECK(row.relative_error < 0.05);
}

TEST_CASE("perfectly correlated rewards leave no advantage variance") {
    auto rep = prop1_experiment({1.0}, 1.0, 8, 10000);
    CHECK(rep.rows[0].analytic_var == 0.0);
    CHECK(rep.rows[0].empirical_var < 1e-20);
}

TEST_CASE("advantage variance decreases monotonically in rho") {
    auto rep = prop1_experiment({0.0, 0.25, 0.5, 0.75, 1.0}, 1.0, 8, 20000);
    for (std::size_t i = 1; i < rep.rows.size(); ++i)
        CHECK(rep.rows[i].empirical_var < rep.rows[i - 1].empirical_var);
}

TEST_CASE("prop1 requires a meaningful trial count and worker-count invariance") {
    CHECK_THROWS_AS(prop1_experiment({0.5}, 1.0, 8, 9999), std::invalid_argument);
    auto serial = prop1_experiment({0.5}, 1.0, 8, 20000, 7, 1);
    auto parallel = prop1_experiment({0.5}, 1.0, 8, 20000, 7, 4);
    CHECK(serial.rows[0].empirical_var == parallel.rows[0].empirical_var);
}

TEST_CASE("variance csv is one labeled row per grid point") {
    auto rep = prop1_experiment({0.0, 0.5}, 1.0, 8, 10000);
    std::string csv = rep.csv();
    CHECK(csv.rfind("rho,sigma2,G,trials,empirical_var,analytic_var,relative_error\n", 0) == 0);
    std::size_t lines = 0;
    for (char ch : csv)
        if (ch == '\n') ++lines;
    CHECK(lines == 3);
}

TEST_CASE("the dense channel estimator has much lower variance") {
    auto rep = prop2_experiment({0.2, 0.5, 0.8}, 0.1, 50000);
    REQUIRE(rep.rows.size() == 3);
    for (const auto& row : rep.rows) {
        CHECK(row.ratio >= 2.0);
        CHECK(row.var_g_out > row.var_g_sem);
    }
    // Mean Bernoulli conditional variance at p = 0.5.
    CHECK(rep.rows[1].sigma_out2 ==
          doctest::Approx((0.45 * 0.55 + 0.25 + 0.55 * 0.45) / 3.0).epsilon(1e-12));
}

TEST_CASE("a noise-free dense channel is still an advantage, never a loss") {
    auto rep = prop2_experiment({0.5}, 0.0, 50000);
    CHECK(rep.rows[0].ratio > 1.0);
    CHECK(rep.rows[0].sigma_sem2 == 0.0);
}

TEST_CASE("prop2 enforces its noise precondition") {
    CHECK_THROWS_AS(prop2_experiment({1.0}, 0.1, 10000), std::invalid_argument);
    CHECK_THROWS_AS(prop2_experiment({0.0}, 0.1, 10000), std::invalid_argument);
    // sigma_sem^2 must stay below the worst-case Bernoulli variance.
    CHECK_THROWS_AS(prop2_experiment({0.9}, 0.3, 10000), std::invalid_argument);
    CHECK_NOTHROW(prop2_experiment({0.9}, 0.1, 10000));
}

TEST_CASE("signal csv shape") {
    auto rep = prop2_experiment({0.5}, 0.1, 10000);
    CHECK(rep.csv().rfind("p,sigma_out2,sigma_sem2,trials,var_g_out,var_g_sem,ratio\n", 0) == 0);
}

TEST_CASE("sga on the quadratic meets the 1/sqrt(T) bound") {
    auto rep = convergence_experiment(1.0, 1.0, {0.0, 0.5, 2.0}, {100, 10000}, 50);
    REQUIRE(rep.rows.size() == 6);
    for (const auto& row : rep.rows) CHECK(row.satisfied);
    // Frozen bound values: (2*L*Delta + sigma2)/sqrt(T).
    CHECK(rep.rows[0].bound == doctest::Approx(0.2).epsilon(1e-12));    // sigma2=0,   T=100
    CHECK(rep.rows[1].bound == doctest::Approx(0.02).epsilon(1e-12));   // sigma2=0,   T=1e4
    CHECK(rep.rows[5].bound == doctest::Approx(0.04).epsilon(1e-12));   // sigma2=2,   T=1e4
}

TEST_CASE("noiseless descent is deterministic and improves with horizon") {
    auto rep = convergence_experiment(1.0, 1.0, {0.0}, {100, 1000, 10000}, 2);
    for (std::size_t i = 1; i < rep.rows.size(); ++i) {
        CHECK(rep.rows[i].min_grad_norm2 < rep.rows[i - 1].min_grad_norm2);
        CHECK(rep.rows[i].bound < rep.rows[i - 1].bound);
    }
    std::string csv = rep.csv();
    CHECK(csv.rfind("L,Delta,sigma2,T,min_grad_norm2,bound,satisfied\n", 0) == 0);
    CHECK(csv.find(",1\n") != std::string::npos);  // satisfied flag rendered
}

TEST_CASE("estimate_rho recovers the generator correlation") {
    auto make_history = [](double rho, int n_groups, std::uint64_t seed) {
        std::vector<std::vector<double>> h;
        Rng rng(seed);
        for (int i = 0; i < n_groups; ++i) h.push_back(sample_equicorrelated(rho, 1.0, 8, rng));
        return h;
    };
    auto est = estimate_rho(make_history(0.7, 1000, 11));
    REQUIRE(est.valid);
    CHECK(est.rho_hat == doctest::Approx(0.7).epsilon(0.08));

    auto indep = estimate_rho(make_history(0.0, 1000, 12));
    REQUIRE(indep.valid);
    CHECK(std::abs(indep.rho_hat) < 0.05);
}

TEST_CASE("estimate_rho flags degenerate inputs instead of throwing") {
    // Too few groups.
    std::vector<std::vector<double>> few(29, std::vector<double>{1.0, 0.0});
    CHECK(!estimate_rho(few).valid);
    few.push_back({1.0, 0.0});
    CHECK(estimate_rho(few).valid);

    // No variance at all.
    std::vector<std::vector<double>> flat(50, std::vector<double>{1.0, 1.0, 1.0});
    CHECK(!estimate_rho(flat).valid);

    // Groups exist but carry no members.
    std::vector<std::vector<double>> empty(50);
    CHECK(!estimate_rho(empty).valid);
}
