#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <utility>
#include <vector>

#include "wptmech/model.hpp"
#include "wptmech/mpat.hpp"
#include "wptmech/report.hpp"
#include "wptmech/rng.hpp"
#include "wptmech/swm.hpp"
#include "wptmech/textio.hpp"

namespace wptmech {

// Private-goods market outcome: each EU pays only for the power he requests,
// so free-riding caps the provision at the single largest marginal utility.
struct BenchmarkEquilibrium {
    std::vector<double> p_be;
    std::vector<double> theta;
    Matrix demands;  // K x N
    int iterations = 0;
    bool converged = false;
};

struct BeConfig {
    double alpha0 = 0.0;  // 0 -> 0.1 * pmax / (1 + |grad C(0)|_inf)
    double eps = 1e-6;
    int max_iters = 200000;
    std::uint64_t seed = 0;
    bool record_trace = false;
};

struct BeTraceRow {
    int iter = 0;
    std::vector<double> p;
    std::vector<double> theta;
    double max_rel_change = 0.0;
};

struct BeTrace {
    std::vector<BeTraceRow> rows;

    // Mirrors the single-channel trace schema with a theta column block.
    void write_csv(std::ostream& os) const {
        if (rows.empty()) return;
        const int n = static_cast<int>(rows.front().p.size());
        os << "iter";
        for (int i = 1; i <= n; ++i) os << ",p_" << i;
        for (int i = 1; i <= n; ++i) os << ",theta_" << i;
        os << ",max_rel_change\n";
        for (const auto& r : rows) {
            os << r.iter;
            for (double v : r.p) os << ',' << format_double(v);
            for (double v : r.theta) os << ',' << format_double(v);
            os << ',' << format_double(r.max_rel_change) << '\n';
        }
    }
};

namespace detail {

inline std::vector<double> max_marginal_utility(const Scenario& s,
                                                std::span<const double> p,
                                                double cap = 1e12) {
    std::vector<double> out(s.n_channels(), 0.0);
    for (const auto& eu : s.eus) {
        const double du = utility_derivative_capped(eu.utility, received_power(p, eu), cap);
        for (int i = 0; i < s.n_channels(); ++i)
            out[i] = std::max(out[i], eu.h[i] * du);
    }
    return out;
}

}  // namespace detail

struct BeResult {
    BeTrace trace;
    BenchmarkEquilibrium equilibrium;
};

// Projected iteration p <- Proj[p + a(t) (max_k grad U_k - grad C)] with a
// diminishing step; the equilibrium price is the componentwise maximal
// marginal utility at the fixed point and demand goes to the EUs attaining
// it (ties split equally).
inline BeResult run_be(const Scenario& s, const BeConfig& cfg) {
    s.validate();
    if (!(cfg.eps > 0)) throw std::invalid_argument("BeConfig: eps must be > 0");
    const int n = s.n_channels();

    double alpha0 = cfg.alpha0;
    if (alpha0 <= 0.0) {
        const double mc0 = s.cost.marginal(0.0);
        alpha0 = 0.1 * s.channels.pmax / (1.0 + mc0);
    }

    std::vector<double> p(n);
    for (int i = 0; i < n; ++i)
        p[i] = substream(cfg.seed, stream::be_init, i).uniform(0.0, s.channels.pmax);
    p = project_feasible(p, s.channels);

    BeResult out;
    auto record = [&](int iter, double mrc) {
        if (!cfg.record_trace) return;
        out.trace.rows.push_back(
            {iter, p, detail::max_marginal_utility(s, p), mrc});
    };
    record(0, 0.0);

    bool converged = false;
    int t = 0;
    for (; t < cfg.max_iters && !converged; ++t) {
        const auto mm = detail::max_marginal_utility(s, p);
        const auto mc = cost_gradient(s.cost, p);
        std::vector<double> cand(n);
        const double step = alpha0 / std::sqrt(static_cast<double>(t) + 1.0);
        for (int i = 0; i < n; ++i) cand[i] = p[i] + step * (mm[i] - mc[i]);
        cand = project_feasible(cand, s.channels);

        double move = 0.0, norm = 0.0;
        for (int i = 0; i < n; ++i) {
            move += (cand[i] - p[i]) * (cand[i] - p[i]);
            norm += p[i] * p[i];
        }
        move = std::sqrt(move);
        norm = std::sqrt(norm);
        converged = move <= cfg.eps * std::max(norm, 1e-9);
        p = std::move(cand);
        record(t + 1, move / std::max(norm, 1e-9));
    }

    auto& eq = out.equilibrium;
    eq.p_be = p;
    eq.theta = detail::max_marginal_utility(s, p);
    eq.iterations = t;
    eq.converged = converged;

    // Demand attribution: the whole channel provision goes to the EUs whose
    // marginal utility attains the price; ties split equally.
    eq.demands.assign(s.k, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i) {
        if (p[i] <= 0.0) continue;
        std::vector<int> winners;
        for (int k = 0; k < s.k; ++k) {
            const auto& eu = s.eus[k];
            const double du =
                utility_derivative_capped(eu.utility, received_power(p, eu));
            if (std::abs(eu.h[i] * du - eq.theta[i]) <=
                1e-9 * std::max(1.0, std::abs(eq.theta[i])))
                winners.push_back(k);
        }
        if (winners.empty()) continue;
        for (int k : winners) eq.demands[k][i] = p[i] / winners.size();
    }
    return out;
}

inline double be_eu_payoff(const Scenario& s, const BenchmarkEquilibrium& eq, int k) {
    double pay = 0.0;
    for (int i = 0; i < s.n_channels(); ++i) pay += eq.theta[i] * eq.demands[k - 1][i];
    return utility_at(s.eus[k - 1], eq.p_be) - pay;
}

struct DpoResult {
    MpatTrace trace;
    EquilibriumReport report;
    std::vector<double> p;
};

// Distributed pure-optimization baseline: star-topology consensus (every
// EU's power copy tied to the ET's) solved with the same relaxed penalized
// updates and price steps as the mechanism algorithm.
inline DpoResult run_dpo(const Scenario& s, const AdalConfig& cfg) {
    s.validate();
    cfg.validate();
    const int kk = s.k;
    const int n = s.n_channels();

    Matrix pi(kk + 1, std::vector<double>(n));
    Matrix beta(kk + 1, std::vector<double>(n));  // row 0 unused
    for (int k = 0; k <= kk; ++k)
        for (int i = 0; i < n; ++i) {
            pi[k][i] = substream(cfg.seed, stream::power_init,
                                 static_cast<std::uint64_t>(k) * n + i)
                           .uniform(0.0, s.channels.pmax);
            beta[k][i] = substream(cfg.seed, stream::price_init,
                                   static_cast<std::uint64_t>(k) * n + i)
                             .uniform(-1.0, 1.0);
        }
    pi[0] = project_feasible(pi[0], s.channels);

    DpoResult out;
    auto residual = [&]() {
        double r = 0.0;
        for (int k = 1; k <= kk; ++k)
            for (int i = 0; i < n; ++i) r = std::max(r, std::abs(pi[k][i] - pi[0][i]));
        return r;
    };
    auto record = [&](int iter, double mrc) {
        if (!cfg.record_trace) return;
        MpatTraceRow row;
        row.iter = iter;
        row.p = pi[0];
        row.consistency_residual = residual();
        row.sw = social_welfare(s, pi[0]);
        row.max_rel_change = mrc;
        out.trace.rows.push_back(std::move(row));
    };
    record(0, 0.0);

    bool converged = false;
    int tau = 0;
    while (tau < cfg.max_iters && !converged) {
        ++tau;
        Matrix pi_next = pi;
        Matrix beta_next = beta;

        // EU copies: rates row = beta_k, anchored at the ET's copy.
        std::vector<std::vector<double>> hats(kk + 1);
        for (int k = 1; k <= kk; ++k)
            hats[k] = detail::eu_prox_argmax(s.eus[k - 1], s.pup[k], beta[k], pi[0],
                                             cfg.rho);
        // ET copy: K quadratic terms collapse to one centered at the mean
        // EU copy with penalty rho*K and rate row -sum_k beta_k.
        {
            std::vector<double> mean(n, 0.0), rate0(n, 0.0);
            for (int k = 1; k <= kk; ++k)
                for (int i = 0; i < n; ++i) {
                    mean[i] += pi[k][i] / kk;
                    rate0[i] -= beta[k][i];
                }
            hats[0] = detail::et_prox_argmax(s.channels, s.cost, rate0, mean,
                                             cfg.rho * kk);
        }

        for (int k = 0; k <= kk; ++k)
            for (int i = 0; i < n; ++i)
                pi_next[k][i] = pi[k][i] + cfg.sigma * (hats[k][i] - pi[k][i]);
        for (int k = 1; k <= kk; ++k)
            for (int i = 0; i < n; ++i)
                beta_next[k][i] =
                    beta[k][i] + cfg.rho * cfg.sigma * (pi[k][i] - pi[0][i]);

        double mrc = 0.0;
        converged = true;
        for (int k = 0; k <= kk; ++k)
            for (int i = 0; i < n; ++i) {
                converged = converged &&
                            rel_change_ok(pi_next[k][i], pi[k][i], cfg.eps2) &&
                            (k == 0 ||
                             rel_change_ok(beta_next[k][i], beta[k][i], cfg.eps1));
                mrc = std::max(mrc, std::abs(pi_next[k][i] - pi[k][i]) /
                                        std::max(std::abs(pi[k][i]), 1e-9));
            }
        pi = std::move(pi_next);
        beta = std::move(beta_next);
        record(tau, mrc);
    }

    out.p = pi[0];
    auto& rep = out.report;
    rep.converged = converged;
    rep.iterations = tau;
    rep.p = pi[0];
    rep.sw = social_welfare(s, pi[0]);
    rep.payoffs.assign(kk + 1, 0.0);
    rep.payoffs[0] = -cost(s.cost, pi[0]);
    for (int k = 1; k <= kk; ++k) rep.payoffs[k] = utility_at(s.eus[k - 1], pi[0]);

    const auto oracle = solve_swm(s);
    rep.oracle_sw = oracle.sw;
    rep.oracle_rel_gap =
        std::abs(rep.sw - oracle.sw) / std::max(std::abs(oracle.sw), 1e-12);
    for (int i = 0; i < n; ++i)
        rep.oracle_power_gap =
            std::max(rep.oracle_power_gap, std::abs(pi[0][i] - oracle.p_opt[i]));
    rep.ne.verdict = true;  // pure optimization, no game to verify
    return out;
}

// Appends a zero-utility, zero-gain agent so the PAT/MPAT outcome maps
// (which need at least three agents) apply to a single-EU economy. The
// optimal power and the real agents' Lindahl rates are unchanged.
inline Scenario add_virtual_agent(const Scenario& s) {
    Scenario out = s;
    EUProfile virtual_eu;
    virtual_eu.h.assign(s.n_channels(), 0.0);
    virtual_eu.utility = ZeroUtility{};
    out.eus.push_back(std::move(virtual_eu));
    out.pup.push_back(out.pup.empty() ? s.channels.pmax : out.pup.back());
    out.k += 1;
    return out;
}

}  // namespace wptmech
