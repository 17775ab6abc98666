#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <vector>

#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "wptmech/benchmarks.hpp"
#include "wptmech/mpat.hpp"

using namespace wptmech;

namespace {

// Two EUs on two channels, EU 1 only on channel 1: its utility Hessian in p
// is singular, the classic non-strictly-concave case.
Scenario two_channel_scenario(double g = 1.0) {
    Scenario s;
    s.k = 2;
    s.channels.n = 2;
    s.channels.peak = {4.0, 4.0};
    s.channels.pmax = 4.0;
    s.cost = CostSpec{0.5, 1.4, 1.0};
    EUProfile eu1;
    eu1.h = {g, 0.0};
    eu1.utility = LogThroughputUtility{1.0, 1.0, 1.0, 1.0, 1.0};
    EUProfile eu2;
    eu2.h = {0.8, 1.2};
    eu2.utility = AlphaFairUtility{1.0, 1.0, 0.5, 1.0};
    s.eus = {eu1, eu2};
    s.pup.assign(3, 40.0);
    return s;
}

}  // namespace

TEST_CASE("outcome function is channelwise") {
    MpatMessageProfile m;
    m.gamma = {{2.0, 1.0}, {2.0, 1.0}, {2.0, 1.0}};
    m.b = {{1.0, -0.5}, {2.0, 0.25}, {3.0, 1.5}};
    const auto a = mpat_outcome(m);
    CHECK(a.p[0] == 2.0);
    CHECK(a.p[1] == 1.0);
    // Channel 1 prices (1,2,3) reproduce the single-channel case.
    CHECK(a.rates[0][0] == -1.0);
    CHECK(a.rates[1][0] == 2.0);
    CHECK(a.rates[2][0] == -1.0);
    for (int ch = 0; ch < 2; ++ch) {
        double sum = 0.0;
        for (int k = 0; k < 3; ++k) sum += a.rates[k][ch];
        CHECK(sum == Catch::Approx(0.0).margin(1e-15));
    }
}

TEST_CASE("per-channel budget balance for arbitrary profiles") {
    SplitMix64 rng(41);
    for (int trial = 0; trial < 500; ++trial) {
        const int agents = 3 + static_cast<int>(rng.uniform() * 4);
        const int n = 1 + static_cast<int>(rng.uniform() * 4);
        MpatMessageProfile m;
        m.gamma.assign(agents, std::vector<double>(n));
        m.b.assign(agents, std::vector<double>(n));
        for (int k = 0; k < agents; ++k)
            for (int i = 0; i < n; ++i) {
                m.gamma[k][i] = rng.uniform(-5.0, 10.0);
                m.b[k][i] = rng.uniform(-10.0, 10.0);
            }
        const auto a = mpat_outcome(m);
        for (int i = 0; i < n; ++i) {
            double sum = 0.0, scale = 0.0;
            for (int k = 0; k < agents; ++k) {
                sum += a.taxes[k][i];
                scale = std::max(scale, std::abs(a.taxes[k][i]));
            }
            CHECK(std::abs(sum) <= 1e-9 * std::max(scale, 1e-300));
        }
    }
}

TEST_CASE("penalized local update solves the known scalar case") {
    // ln(1+p) with rate 0.5, penalty 1 anchored at 1: root of
    // 1/(1+p) - 0.5 - (p - 1) = 0 is p = 1, cross-checked on a grid.
    Scenario s = testfix::log_unit_scenario(2);
    const std::vector<double> rates{0.5};
    const std::vector<double> anchor{1.0};
    const auto hat = adal_local_update(s, 1, rates, anchor, 1.0);
    CHECK(hat[0] == Catch::Approx(1.0).margin(1e-8));
    const double oracle = testoracle::grid_argmax_1d(
        [&](double p) {
            return utility_at(s.eus[0], std::vector<double>{p}) - 0.5 * p -
                   0.5 * (p - 1.0) * (p - 1.0);
        },
        0.0, s.pup[1]);
    CHECK(hat[0] == Catch::Approx(oracle).margin(1e-4));
}

TEST_CASE("penalized update of a zero-utility agent is a pure pull") {
    auto s = testfix::log_unit_scenario(1);
    s = add_virtual_agent(s);
    const std::vector<double> rates{0.0};
    const std::vector<double> anchor{2.5};
    const auto hat = adal_local_update(s, 2, rates, anchor, 1.0);
    CHECK(hat[0] == 2.5);
    const std::vector<double> neg_anchor{-3.0};
    CHECK(adal_local_update(s, 2, rates, neg_anchor, 1.0)[0] == 0.0);
}

TEST_CASE("penalized ET update stays feasible") {
    const auto s = two_channel_scenario();
    SplitMix64 rng(43);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> rates{rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)};
        std::vector<double> anchor{rng.uniform(-1.0, 6.0), rng.uniform(-1.0, 6.0)};
        const auto hat = adal_local_update(s, 0, rates, anchor, 1.0);
        CHECK(in_feasible_set(hat, s.channels, 1e-9));
    }
}

TEST_CASE("local update objective is strongly concave around the maximizer") {
    const auto s = two_channel_scenario();
    SplitMix64 rng(47);
    const double rho = 1.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int agent = 1 + trial % 2;
        std::vector<double> rates{rng.uniform(0.05, 1.0), rng.uniform(0.05, 1.0)};
        std::vector<double> anchor{rng.uniform(0.0, 3.0), rng.uniform(0.0, 3.0)};
        const auto hat = adal_local_update(s, agent, rates, anchor, rho);
        auto objective = [&](const std::vector<double>& p) {
            double v = utility_at(s.eus[agent - 1], p);
            for (int i = 0; i < 2; ++i)
                v -= rates[i] * p[i] + 0.5 * rho * (p[i] - anchor[i]) * (p[i] - anchor[i]);
            return v;
        };
        const double f_hat = objective(hat);
        for (int probe = 0; probe < 5; ++probe) {
            std::vector<double> x{rng.uniform(0.0, 4.0), rng.uniform(0.0, 4.0)};
            double dist2 = 0.0;
            for (int i = 0; i < 2; ++i) dist2 += (x[i] - hat[i]) * (x[i] - hat[i]);
            CHECK(objective(x) <= f_hat - 0.5 * rho * dist2 + 1e-7);
        }
    }
}

TEST_CASE("d-mpat converges on the degenerate two-channel economy") {
    const auto s = two_channel_scenario();
    AdalConfig cfg;
    cfg.seed = 2;
    cfg.eps1 = cfg.eps2 = 1e-6;
    const auto res = run_dmpat(s, cfg);
    REQUIRE(res.report.converged);
    const auto grid = testoracle::grid_swm(s);
    CHECK(res.report.p[0] == Catch::Approx(grid[0]).margin(1e-3));
    CHECK(res.report.p[1] == Catch::Approx(grid[1]).margin(1e-3));
    CHECK(res.report.oracle_rel_gap <= 1e-3);
    CHECK(res.report.ne.verdict);
}

TEST_CASE("d-mpat drives all-zero utilities to zero power") {
    Scenario s;
    s.k = 2;
    s.channels.n = 2;
    s.channels.peak = {2.0, 2.0};
    s.channels.pmax = 2.0;
    s.cost = CostSpec{1.0, 1.3, 1.0};
    for (int i = 0; i < 2; ++i) {
        EUProfile eu;
        eu.h = {0.0, 0.0};
        eu.utility = ZeroUtility{};
        s.eus.push_back(eu);
    }
    s.pup.assign(3, 20.0);
    AdalConfig cfg;
    cfg.seed = 5;
    cfg.eps1 = cfg.eps2 = 1e-7;
    const auto res = run_dmpat(s, cfg);
    CHECK(res.report.p[0] == Catch::Approx(0.0).margin(1e-4));
    CHECK(res.report.p[1] == Catch::Approx(0.0).margin(1e-4));
}

TEST_CASE("payoffs agree across seeds under degeneracy") {
    const auto s = two_channel_scenario();
    AdalConfig cfg;
    cfg.eps1 = cfg.eps2 = 1e-7;
    cfg.seed = 10;
    const auto a = run_dmpat(s, cfg);
    cfg.seed = 20;
    const auto b = run_dmpat(s, cfg);
    REQUIRE(a.report.converged);
    REQUIRE(b.report.converged);
    for (int k = 0; k <= s.k; ++k) {
        const double scale = std::max({std::abs(a.report.payoffs[k]),
                                       std::abs(b.report.payoffs[k]), 1e-6});
        CHECK(std::abs(a.report.payoffs[k] - b.report.payoffs[k]) <= 1e-4 * scale);
    }
}

TEST_CASE("augmented lagrangian telescopes at consensus") {
    const auto s = two_channel_scenario();
    SplitMix64 rng(53);
    const std::vector<double> p{1.2, 0.7};
    Matrix pi(s.n_agents(), p);
    Matrix beta(s.n_agents(), std::vector<double>(2));
    for (auto& row : beta)
        for (auto& v : row) v = rng.uniform(-2.0, 2.0);
    const double val = augmented_lagrangian(s, pi, beta, 1.0);
    CHECK(val == Catch::Approx(social_welfare(s, p)).margin(1e-10));
}

TEST_CASE("augmented lagrangian reduces to the plain lagrangian at rho 0") {
    const auto s = two_channel_scenario();
    SplitMix64 rng(59);
    Matrix pi(s.n_agents(), std::vector<double>(2));
    Matrix beta(s.n_agents(), std::vector<double>(2));
    for (auto& row : pi)
        for (auto& v : row) v = rng.uniform(0.0, 2.0);
    for (auto& row : beta)
        for (auto& v : row) v = rng.uniform(-2.0, 2.0);

    double plain = -cost(s.cost, pi[0]);
    for (int k = 1; k <= s.k; ++k) plain += utility_at(s.eus[k - 1], pi[k]);
    for (int k = 0; k <= s.k; ++k)
        for (int i = 0; i < 2; ++i)
            plain -= beta[k][i] * (pi[k][i] - pi[ring_index(k - 1, s.n_agents())][i]);

    // Same telescoping structure, just grouped per agent.
    double grouped = augmented_lagrangian(s, pi, beta, 0.0);
    CHECK(grouped == Catch::Approx(plain).margin(1e-10));
}

TEST_CASE("departing from consensus lowers the augmented lagrangian") {
    const auto s = two_channel_scenario();
    const auto sol = solve_swm(s);
    const auto lin = lindahl_allocation(s, sol);
    const auto m = mpat_profile_from_rates(lin.rates, sol.p_opt);

    Matrix pi(s.n_agents(), sol.p_opt);
    // beta_k = b_{w(k+1)} recovers the consistency prices of the saddle.
    Matrix beta(s.n_agents());
    for (int k = 0; k < s.n_agents(); ++k) beta[k] = m.b[ring_index(k + 1, s.n_agents())];

    const double at_saddle = augmented_lagrangian(s, pi, beta, 1.0);
    SplitMix64 rng(61);
    for (int probe = 0; probe < 50; ++probe) {
        Matrix moved = pi;
        const int k = static_cast<int>(rng.uniform() * s.n_agents());
        for (auto& v : moved[k]) v = std::max(0.0, v + rng.uniform(-0.5, 0.5));
        CHECK(augmented_lagrangian(s, moved, beta, 1.0) <= at_saddle + 1e-9);
    }
}

TEST_CASE("mpat ne verification") {
    const auto s = two_channel_scenario();
    const auto sol = solve_swm(s);
    const auto lin = lindahl_allocation(s, sol);
    const auto m = mpat_profile_from_rates(lin.rates, sol.p_opt);

    const auto rep = verify_mpat_ne(s, m, 1e-4);
    CHECK(rep.verdict);
    CHECK(rep.aggregate_kkt_residual <= 1e-4);

    auto perturbed = m;
    perturbed.gamma[1][0] += 0.5;
    CHECK_FALSE(verify_mpat_ne(s, perturbed, 1e-4).verdict);

    // Columnwise constant shift of prices leaves rates and the verdict alone.
    auto shifted = m;
    for (auto& row : shifted.b) {
        row[0] += 2.0;
        row[1] -= 1.0;
    }
    CHECK(verify_mpat_ne(s, shifted, 1e-4).verdict);
}

TEST_CASE("ET proposal row stays feasible along the run") {
    const auto s = two_channel_scenario();
    AdalConfig cfg;
    cfg.seed = 31;
    cfg.max_iters = 400;
    cfg.record_trace = true;
    const auto res = run_dmpat(s, cfg);
    for (const auto& row : res.trace.rows)
        CHECK(in_feasible_set(row.gamma[0], s.channels, 1e-9));
}

TEST_CASE("mpat trace csv schema") {
    const auto s = two_channel_scenario();
    AdalConfig cfg;
    cfg.seed = 37;
    cfg.max_iters = 10;
    cfg.record_trace = true;
    const auto res = run_dmpat(s, cfg);
    std::ostringstream csv;
    res.trace.write_csv(csv);
    std::istringstream in(csv.str());
    std::string header;
    std::getline(in, header);
    CHECK(header == "iter,p_1,p_2,consistency_residual,sw,max_rel_change");
    int rows = 0;
    for (std::string line; std::getline(in, line);) ++rows;
    CHECK(rows == 11);
}
