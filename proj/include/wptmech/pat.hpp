#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <utility>
#include <vector>

#include "wptmech/model.hpp"
#include "wptmech/report.hpp"
#include "wptmech/rng.hpp"
#include "wptmech/swm.hpp"
#include "wptmech/textio.hpp"

namespace wptmech {

inline int ring_index(int x, int agents) {
    const int m = x % agents;
    return m < 0 ? m + agents : m;
}

// Single-channel message profile: agent 0 is the ET.
struct PatMessageProfile {
    std::vector<double> gamma;  // power proposals, Watts
    std::vector<double> b;      // price proposals

    int n_agents() const { return static_cast<int>(gamma.size()); }
};

struct PatAllocation {
    double p = 0.0;
    std::vector<double> rates;
    std::vector<double> taxes;
    std::vector<double> payoffs;  // filled by pat_fill_payoffs
};

// Outcome function: mean power proposal, telescoping tax rates
// R_k = b_{w(k+1)} - b_{w(k+2)}, taxes t_k = R_k * p.
inline PatAllocation pat_outcome(const PatMessageProfile& m) {
    const int agents = m.n_agents();
    if (agents != static_cast<int>(m.b.size()))
        throw std::invalid_argument("pat_outcome: gamma/b size mismatch");
    if (agents < 3)
        throw std::invalid_argument(
            "pat_outcome: needs at least 3 agents; add a virtual agent for K = 1");
    PatAllocation a;
    for (double g : m.gamma) a.p += g;
    a.p /= agents;
    a.rates.resize(agents);
    a.taxes.resize(agents);
    for (int k = 0; k < agents; ++k) {
        a.rates[k] = m.b[ring_index(k + 1, agents)] - m.b[ring_index(k + 2, agents)];
        a.taxes[k] = a.rates[k] * a.p;
    }
    return a;
}

inline double pat_single_channel_cap(const Scenario& s) {
    return std::min(s.channels.peak[0], s.channels.pmax);
}

// Payoff J_k(p, t_k); the ET's constraint violation maps to a -inf sentinel
// that is compared, never added to.
inline double pat_payoff(const Scenario& s, int k, double p, double t_k) {
    if (k < 0 || k > s.k) throw std::invalid_argument("pat_payoff: bad agent index");
    if (k == 0) {
        if (p < 0.0 || p > pat_single_channel_cap(s))
            return -std::numeric_limits<double>::infinity();
        return -s.cost.total(p) - t_k;
    }
    const auto& eu = s.eus[k - 1];
    return utility(eu.utility, eu.h[0] * std::max(p, 0.0)) - t_k;
}

namespace detail {

// Bisection on the decreasing derivative of a concave 1-D objective over
// [0, ub]. Checking the upper end first resolves the linear zero-slope tie
// toward "transmit as much as possible".
template <typename Deriv>
double argmax_concave_1d(Deriv&& phi, double ub, double width_tol = 1e-10) {
    if (phi(ub) >= 0.0) return ub;
    if (phi(0.0) <= 0.0) return 0.0;
    double lo = 0.0, hi = ub;
    for (int it = 0; it < 200 && hi - lo > width_tol; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (phi(mid) > 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace detail

// argmax_p J_k(p, R_k p) clipped to [0, P_k^up] (EU) or [0, P_max] (ET).
inline double best_response_power(const Scenario& s, int k, double rate) {
    if (s.n_channels() != 1)
        throw std::invalid_argument("best_response_power: single-channel only");
    if (!std::isfinite(rate))
        throw std::invalid_argument("best_response_power: rate must be finite");
    if (k == 0) {
        const double ub = pat_single_channel_cap(s);
        auto phi = [&](double p) { return -s.cost.marginal(p) - rate; };
        return detail::argmax_concave_1d(phi, ub);
    }
    const auto& eu = s.eus[k - 1];
    const double ub = s.pup[k];
    if (rate <= 0.0) return ub;  // increasing objective, clip binds
    const double h = eu.h[0];
    auto phi = [&](double p) {
        return h * utility_derivative_capped(eu.utility, h * p) - rate;
    };
    return detail::argmax_concave_1d(phi, ub);
}

// Diminishing step schedule rho(tau) = rho0 * c / (c + tau).
struct StepSchedule {
    double rho0 = 1.0;
    double c = 50.0;
    double operator()(int tau) const { return rho0 * c / (c + tau); }
};

struct DPatConfig {
    StepSchedule step;
    double eps1 = 1e-5;  // price-proposal relative stopping threshold
    double eps2 = 1e-5;  // power-proposal relative stopping threshold
    int max_iters = 200000;
    std::uint64_t seed = 0;
    bool record_trace = false;

    void validate() const {
        if (!(eps1 > 0 && eps2 > 0))
            throw std::invalid_argument("DPatConfig: thresholds must be > 0");
        if (max_iters < 0) throw std::invalid_argument("DPatConfig: max_iters < 0");
    }
};

struct PatTraceRow {
    int iter = 0;
    double p = 0.0;
    std::vector<double> gamma;
    std::vector<double> b;
    double max_rel_change = 0.0;
};

struct PatTrace {
    std::vector<PatTraceRow> rows;

    // CSV contract: iter, p, gamma_0..gamma_K, b_0..b_K, max_rel_change.
    void write_csv(std::ostream& os) const {
        if (rows.empty()) return;
        const int agents = static_cast<int>(rows.front().gamma.size());
        os << "iter,p";
        for (int k = 0; k < agents; ++k) os << ",gamma_" << k;
        for (int k = 0; k < agents; ++k) os << ",b_" << k;
        os << ",max_rel_change\n";
        for (const auto& r : rows) {
            os << r.iter << ',' << format_double(r.p);
            for (double g : r.gamma) os << ',' << format_double(g);
            for (double b : r.b) os << ',' << format_double(b);
            os << ',' << format_double(r.max_rel_change) << '\n';
        }
    }
};

inline void pat_fill_payoffs(const Scenario& s, PatAllocation& a) {
    a.payoffs.resize(s.n_agents());
    for (int k = 0; k <= s.k; ++k) a.payoffs[k] = pat_payoff(s, k, a.p, a.taxes[k]);
}

// Relative-change criterion with a small absolute floor so zero iterates do
// not divide by zero.
inline bool rel_change_ok(double now, double before, double eps) {
    return std::abs(now - before) <= eps * std::max(std::abs(before), 1e-9);
}

struct DPatResult {
    PatTrace trace;
    EquilibriumReport report;
    PatAllocation allocation;
    PatMessageProfile profile;
};

inline NeReport verify_ne(const Scenario& s, const PatMessageProfile& m, double tol);

inline PatMessageProfile random_pat_profile(const Scenario& s, std::uint64_t seed) {
    const int agents = s.n_agents();
    PatMessageProfile m;
    m.gamma.resize(agents);
    m.b.resize(agents);
    for (int k = 0; k < agents; ++k) {
        m.gamma[k] = substream(seed, stream::power_init, k).uniform(0.0, s.channels.pmax);
        m.b[k] = substream(seed, stream::price_init, k).uniform(-1.0, 1.0);
    }
    m.gamma[0] = std::min(m.gamma[0], pat_single_channel_cap(s));
    return m;
}

// D-PAT: best-response power proposals plus dual-style price updates on the
// proposal ring, run until both relative criteria hold or max_iters.
inline DPatResult run_dpat(const Scenario& s, const DPatConfig& cfg) {
    s.validate();
    cfg.validate();
    if (s.n_channels() != 1)
        throw std::invalid_argument("run_dpat: single-channel scenarios only");
    const int agents = s.n_agents();
    if (agents < 3)
        throw std::invalid_argument(
            "run_dpat: needs at least 3 agents; add a virtual agent for K = 1");

    DPatResult out;
    PatMessageProfile cur = random_pat_profile(s, cfg.seed);
    PatMessageProfile prev = cur;

    auto record = [&](int iter, double mrc) {
        if (!cfg.record_trace) return;
        PatTraceRow row;
        row.iter = iter;
        row.p = pat_outcome(cur).p;
        row.gamma = cur.gamma;
        row.b = cur.b;
        row.max_rel_change = mrc;
        out.trace.rows.push_back(std::move(row));
    };
    record(0, 0.0);

    bool converged = false;
    int tau = 0;
    while (tau < cfg.max_iters && !converged) {
        ++tau;
        const auto rates = pat_outcome(cur).rates;
        PatMessageProfile next;
        next.gamma.resize(agents);
        next.b.resize(agents);
        const double rho = cfg.step(tau);
        for (int k = 0; k < agents; ++k) {
            next.gamma[k] = best_response_power(s, k, rates[k]);
            next.b[k] = cur.b[k] +
                        rho * (cur.gamma[ring_index(k - 1, agents)] -
                               cur.gamma[ring_index(k - 2, agents)]);
        }
        prev = std::exchange(cur, std::move(next));

        double mrc = 0.0;
        converged = true;
        for (int k = 0; k < agents; ++k) {
            converged = converged && rel_change_ok(cur.b[k], prev.b[k], cfg.eps1) &&
                        rel_change_ok(cur.gamma[k], prev.gamma[k], cfg.eps2);
            mrc = std::max(mrc, std::abs(cur.b[k] - prev.b[k]) /
                                    std::max(std::abs(prev.b[k]), 1e-9));
            mrc = std::max(mrc, std::abs(cur.gamma[k] - prev.gamma[k]) /
                                    std::max(std::abs(prev.gamma[k]), 1e-9));
        }
        record(tau, mrc);
    }

    out.profile = cur;
    out.allocation = pat_outcome(cur);
    pat_fill_payoffs(s, out.allocation);

    auto& rep = out.report;
    rep.converged = converged;
    rep.iterations = tau;
    rep.p = {out.allocation.p};
    rep.payoffs = out.allocation.payoffs;
    rep.sw = social_welfare(s, rep.p);

    const auto oracle = solve_swm(s);
    rep.oracle_sw = oracle.sw;
    rep.oracle_rel_gap =
        std::abs(rep.sw - oracle.sw) / std::max(std::abs(oracle.sw), 1e-12);
    rep.oracle_power_gap = std::abs(out.allocation.p - oracle.p_opt[0]);
    rep.ne = verify_ne(s, cur, 1e-3 * s.channels.pmax);
    return out;
}

// Lemma-style NE check: every agent's outcome power must be its own best
// response under the profile's tax rates. Agents with a flat or near-flat
// objective (zero utility, linear-cost plateau) pass through the payoff gap:
// a power deviation of tol moves the payoff by at most ~|R| * tol, so payoff
// gaps below that resolution are within the verification tolerance.
inline NeReport verify_ne(const Scenario& s, const PatMessageProfile& m, double tol) {
    const auto alloc = pat_outcome(m);
    NeReport rep;
    rep.agents.resize(s.n_agents());
    rep.verdict = true;
    for (int k = 0; k <= s.k; ++k) {
        auto& a = rep.agents[k];
        const double br = best_response_power(s, k, alloc.rates[k]);
        a.power_gap = std::abs(alloc.p - br);
        const double j_br = pat_payoff(s, k, br, alloc.rates[k] * br);
        const double j_m = pat_payoff(s, k, alloc.p, alloc.taxes[k]);
        a.payoff_gap = j_br - j_m;
        a.indifferent =
            a.payoff_gap <= tol * std::max(std::abs(alloc.rates[k]), 1e-9);
        a.pass = a.power_gap <= tol || a.indifferent;
        rep.verdict = rep.verdict && a.pass;
    }
    std::vector<double> p{alloc.p};
    rep.aggregate_kkt_residual = kkt_residual(s, p);
    return rep;
}

// Payoff deltas against the all-or-none fallback (0 power, 0 tax).
inline std::vector<double> participation_check(const Scenario& s,
                                               const PatAllocation& alloc) {
    std::vector<double> deltas(s.n_agents());
    for (int k = 0; k <= s.k; ++k)
        deltas[k] = pat_payoff(s, k, alloc.p, alloc.taxes[k]) - pat_payoff(s, k, 0.0, 0.0);
    return deltas;
}

// NE profile built from tax rates summing to zero: gamma rows equal the
// target power and prices unwind the telescoping rate map.
inline PatMessageProfile profile_from_rates(const std::vector<double>& rates,
                                            double p) {
    const int agents = static_cast<int>(rates.size());
    PatMessageProfile m;
    m.gamma.assign(agents, p);
    m.b.assign(agents, 0.0);
    for (int j = agents - 1; j >= 1; --j)
        m.b[j] = m.b[ring_index(j + 1, agents)] + rates[ring_index(j - 1, agents)];
    return m;
}

}  // namespace wptmech
