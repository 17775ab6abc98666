#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "wptmech/model.hpp"

namespace wptmech {

struct SwmDuals {
    std::vector<double> lambda;  // peak constraints
    std::vector<double> mu;      // nonnegativity constraints
    double nu = 0.0;             // total power cap
};

struct OracleSolution {
    std::vector<double> p_opt;
    double sw = 0.0;
    SwmDuals duals;
    double kkt_residual = 0.0;
    bool converged = false;
    int iterations = 0;
    bool strict_curvature = true;  // false when zeta == 1: p may be non-unique
};

struct LindahlAllocation {
    std::vector<double> p_opt;
    std::vector<std::vector<double>> rates;  // (K+1) x N, row 0 = ET
    std::vector<std::vector<double>> taxes;  // t_{k,n} = R_{k,n} * p_n
};

inline double social_welfare(const Scenario& s, std::span<const double> p) {
    double sw = 0.0;
    for (const auto& eu : s.eus) sw += utility_at(eu, p);
    return sw - cost(s.cost, p);
}

// Gradient of SW with the alpha-fair blow-up at q = 0 capped; only boundary
// iterates of the solver ever see the cap.
inline std::vector<double> sw_gradient(const Scenario& s, std::span<const double> p,
                                       double cap = 1e12) {
    const int n = s.n_channels();
    std::vector<double> g(n, 0.0);
    for (const auto& eu : s.eus) {
        const double du = utility_derivative_capped(eu.utility, received_power(p, eu), cap);
        for (int i = 0; i < n; ++i) g[i] += eu.h[i] * du;
    }
    double total = 0.0;
    for (double v : p) total += v;
    const double mc = s.cost.marginal(total);
    for (int i = 0; i < n; ++i) g[i] -= mc;
    return g;
}

struct ProblemScale {
    double power = 1.0;  // total-power scale of the welfare optimum
    double rate = 1.0;   // marginal-utility / marginal-cost level there
};

// Conditioning estimate from the uniform-power ray: the total power S where
// the aggregate marginal utility crosses the marginal cost, and the rate
// level there. Penalty coefficients and step sizes scale with rate/power so
// the distributed algorithms behave the same across unit systems.
inline ProblemScale problem_scale(const Scenario& s) {
    const int n = s.n_channels();
    auto aggregate_marginal = [&](double total) {
        double acc = 0.0;
        const std::vector<double> p(n, total / n);
        for (const auto& eu : s.eus) {
            const double du =
                utility_derivative_capped(eu.utility, received_power(p, eu));
            for (double h : eu.h) acc += h * du / n;
        }
        return acc;
    };
    const double s_lo = s.channels.pmax * 1e-9;
    const double s_hi = s.channels.pmax;
    ProblemScale ps;
    if (aggregate_marginal(s_lo) <= s.cost.marginal(s_lo)) {
        // Cold economy: provision collapses toward zero power.
        ps.power = s.channels.pmax;
        ps.rate = std::max(s.cost.marginal(s.channels.pmax), 1e-12);
        return ps;
    }
    if (aggregate_marginal(s_hi) >= s.cost.marginal(s_hi)) {
        ps.power = s.channels.pmax;
        ps.rate = std::max(aggregate_marginal(s_hi), 1e-12);
        return ps;
    }
    double lo = s_lo, hi = s_hi;
    for (int it = 0; it < 200; ++it) {
        const double mid = std::sqrt(lo * hi);  // log-scale bisection
        if (aggregate_marginal(mid) > s.cost.marginal(mid))
            lo = mid;
        else
            hi = mid;
    }
    ps.power = std::sqrt(lo * hi);
    ps.rate = std::max(s.cost.marginal(ps.power), 1e-12);
    return ps;
}

// Least-squares dual recovery from the active-set geometry at p. With the
// shift nu fixed, the optimal lambda/mu on active constraints follow in
// closed form, so only the scalar nu needs a search (convex in nu).
inline SwmDuals recover_duals(const Scenario& s, std::span<const double> p) {
    const int n = s.n_channels();
    const auto g = sw_gradient(s, p);
    SwmDuals d;
    d.lambda.assign(n, 0.0);
    d.mu.assign(n, 0.0);

    double total = 0.0, scale = std::max(1.0, s.channels.pmax);
    for (double v : p) total += v;
    const double act_tol = 1e-7 * scale;
    const bool cap_active = s.channels.pmax - total <= act_tol;
    std::vector<int> state(n);  // 0 interior, 1 at peak, 2 at zero
    for (int i = 0; i < n; ++i)
        state[i] = (s.channels.peak[i] - p[i] <= act_tol) ? 1 : (p[i] <= act_tol ? 2 : 0);

    auto residual_sq = [&](double nu) {
        double r = 0.0;
        for (int i = 0; i < n; ++i) {
            const double v = g[i] - nu;
            if (state[i] == 1)
                r += std::min(v, 0.0) * std::min(v, 0.0);
            else if (state[i] == 2)
                r += std::max(v, 0.0) * std::max(v, 0.0);
            else
                r += v * v;
        }
        return r;
    };

    double nu = 0.0;
    if (cap_active) {
        double lo = 0.0, hi = 1.0;
        for (int i = 0; i < n; ++i) hi = std::max(hi, std::abs(g[i]) + 1.0);
        for (int it = 0; it < 200; ++it) {
            const double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
            if (residual_sq(m1) <= residual_sq(m2))
                hi = m2;
            else
                lo = m1;
        }
        nu = 0.5 * (lo + hi);
    }
    d.nu = nu;
    for (int i = 0; i < n; ++i) {
        if (state[i] == 1) d.lambda[i] = std::max(0.0, g[i] - nu);
        if (state[i] == 2) d.mu[i] = std::max(0.0, nu - g[i]);
    }
    return d;
}

// Norm of the SWM KKT violation at (p, duals): stationarity rows plus
// complementary slackness, dual sign, and primal feasibility terms.
inline double kkt_residual(const Scenario& s, std::span<const double> p,
                           const SwmDuals& duals) {
    const int n = s.n_channels();
    const auto g = sw_gradient(s, p);
    double total = 0.0;
    for (double v : p) total += v;

    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        const double stat = g[i] - duals.lambda[i] - duals.nu + duals.mu[i];
        acc += stat * stat;
        const double cs_peak = duals.lambda[i] * (p[i] - s.channels.peak[i]);
        const double cs_zero = duals.mu[i] * p[i];
        acc += cs_peak * cs_peak + cs_zero * cs_zero;
        acc += std::min(duals.lambda[i], 0.0) * std::min(duals.lambda[i], 0.0);
        acc += std::min(duals.mu[i], 0.0) * std::min(duals.mu[i], 0.0);
        acc += std::max(0.0, p[i] - s.channels.peak[i]) * std::max(0.0, p[i] - s.channels.peak[i]);
        acc += std::min(p[i], 0.0) * std::min(p[i], 0.0);
    }
    const double cs_cap = duals.nu * (total - s.channels.pmax);
    acc += cs_cap * cs_cap;
    acc += std::min(duals.nu, 0.0) * std::min(duals.nu, 0.0);
    acc += std::max(0.0, total - s.channels.pmax) * std::max(0.0, total - s.channels.pmax);
    return std::sqrt(acc);
}

inline double kkt_residual(const Scenario& s, std::span<const double> p) {
    return kkt_residual(s, p, recover_duals(s, p));
}

// Projected gradient ascent with backtracking on SW over the feasible set.
// Stops when the relative SW change and the KKT residual (scaled by the
// initial gradient magnitude) both fall below tol.
inline OracleSolution solve_swm(const Scenario& s, double tol = 1e-8,
                                int max_iters = 200000,
                                std::optional<std::vector<double>> start = {}) {
    s.validate();
    const int n = s.n_channels();
    std::vector<double> p;
    if (start) {
        p = project_feasible(*start, s.channels);
    } else {
        p.assign(n, s.channels.pmax / (2.0 * n));
        p = project_feasible(p, s.channels);
    }

    double f = social_welfare(s, p);
    auto g = sw_gradient(s, p);

    // Residual tolerance scales with the gradient magnitude at the current
    // iterate; the 1e12 alpha-fair boundary cap must never enter the scale.
    auto res_tol_at = [&](const std::vector<double>& grad) {
        double scale = 1.0;
        for (double v : grad)
            if (std::abs(v) < 1e11) scale = std::max(scale, std::abs(v));
        return tol * scale;
    };

    double step = s.channels.pmax;
    OracleSolution sol;
    sol.strict_curvature = s.cost.strictly_convex();

    int it = 0;
    for (; it < max_iters; ++it) {
        std::vector<double> p_new;
        double f_new = -std::numeric_limits<double>::infinity();
        bool accepted = false;
        for (int bt = 0; bt < 200; ++bt) {
            std::vector<double> cand(n);
            for (int i = 0; i < n; ++i) cand[i] = p[i] + step * g[i];
            cand = project_feasible(cand, s.channels);
            double dir = 0.0;
            for (int i = 0; i < n; ++i) dir += g[i] * (cand[i] - p[i]);
            const double fc = social_welfare(s, cand);
            if (fc >= f + 1e-4 * dir && std::isfinite(fc)) {
                p_new = std::move(cand);
                f_new = fc;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;

        const double rel_change = std::abs(f_new - f) / std::max(std::abs(f), 1e-12);
        double move = 0.0;
        for (int i = 0; i < n; ++i) move = std::max(move, std::abs(p_new[i] - p[i]));
        p = std::move(p_new);
        f = f_new;
        g = sw_gradient(s, p);
        step = std::min(step * 2.0, 1e9 * s.channels.pmax);

        const bool settled =
            rel_change < tol && move < tol * std::max(1.0, s.channels.pmax);
        if (settled || it % 100 == 99) {
            const auto duals = recover_duals(s, p);
            if (kkt_residual(s, p, duals) <= res_tol_at(g)) {
                sol.converged = true;
                break;
            }
        }
    }

    sol.p_opt = p;
    sol.sw = f;
    sol.duals = recover_duals(s, p);
    sol.kkt_residual = kkt_residual(s, p, sol.duals);
    sol.iterations = it;
    if (!sol.converged) sol.converged = sol.kkt_residual <= res_tol_at(g);
    return sol;
}

// Scheme: rates are each EU's utility gradient at the optimum and the ET's
// rate balances them; taxes follow as rate * power per channel.
inline LindahlAllocation lindahl_allocation(const Scenario& s,
                                            const OracleSolution& sol) {
    const int n = s.n_channels();
    LindahlAllocation a;
    a.p_opt = sol.p_opt;
    a.rates.assign(s.n_agents(), std::vector<double>(n, 0.0));
    for (int k = 1; k <= s.k; ++k) {
        a.rates[k] = marginal_utility(s.eus[k - 1], sol.p_opt);
        for (int i = 0; i < n; ++i) a.rates[0][i] -= a.rates[k][i];
    }
    a.taxes.assign(s.n_agents(), std::vector<double>(n, 0.0));
    for (int k = 0; k <= s.k; ++k)
        for (int i = 0; i < n; ++i) a.taxes[k][i] = a.rates[k][i] * sol.p_opt[i];
    return a;
}

}  // namespace wptmech
