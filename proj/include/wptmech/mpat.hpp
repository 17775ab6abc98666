#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <utility>
#include <vector>

#include "wptmech/model.hpp"
#include "wptmech/pat.hpp"
#include "wptmech/report.hpp"
#include "wptmech/rng.hpp"
#include "wptmech/swm.hpp"
#include "wptmech/textio.hpp"

namespace wptmech {

using Matrix = std::vector<std::vector<double>>;  // (K+1) rows x N columns

struct MpatMessageProfile {
    Matrix gamma;
    Matrix b;

    int n_agents() const { return static_cast<int>(gamma.size()); }
    int n_channels() const { return gamma.empty() ? 0 : static_cast<int>(gamma[0].size()); }
};

struct MpatAllocation {
    std::vector<double> p;
    Matrix rates;
    Matrix taxes;
    std::vector<double> payoffs;
};

struct AdalConfig {
    double rho = 1.0;    // penalty coefficient
    double sigma = 0.25; // relaxation step, in (0, 1/2) for two coupled agents
    double eps1 = 1e-6;
    double eps2 = 1e-6;
    int max_iters = 20000;
    std::uint64_t seed = 0;
    bool record_trace = false;

    void validate() const {
        if (!(rho > 0)) throw std::invalid_argument("AdalConfig: rho must be > 0");
        if (!(sigma > 0 && sigma < 0.5))
            throw std::invalid_argument("AdalConfig: sigma must be in (0, 1/2)");
        if (!(eps1 > 0 && eps2 > 0))
            throw std::invalid_argument("AdalConfig: thresholds must be > 0");
        if (max_iters < 0) throw std::invalid_argument("AdalConfig: max_iters < 0");
    }
};

// Channelwise outcome function of the multi-channel mechanism.
inline MpatAllocation mpat_outcome(const MpatMessageProfile& m) {
    const int agents = m.n_agents();
    const int n = m.n_channels();
    if (agents < 3)
        throw std::invalid_argument(
            "mpat_outcome: needs at least 3 agents; add a virtual agent for K = 1");
    if (static_cast<int>(m.b.size()) != agents)
        throw std::invalid_argument("mpat_outcome: gamma/b row mismatch");
    for (const auto& row : m.gamma)
        if (static_cast<int>(row.size()) != n)
            throw std::invalid_argument("mpat_outcome: ragged gamma matrix");
    for (const auto& row : m.b)
        if (static_cast<int>(row.size()) != n)
            throw std::invalid_argument("mpat_outcome: ragged b matrix");

    MpatAllocation a;
    a.p.assign(n, 0.0);
    for (const auto& row : m.gamma)
        for (int i = 0; i < n; ++i) a.p[i] += row[i];
    for (int i = 0; i < n; ++i) a.p[i] /= agents;

    a.rates.assign(agents, std::vector<double>(n, 0.0));
    a.taxes.assign(agents, std::vector<double>(n, 0.0));
    for (int k = 0; k < agents; ++k) {
        const auto& b1 = m.b[ring_index(k + 1, agents)];
        const auto& b2 = m.b[ring_index(k + 2, agents)];
        for (int i = 0; i < n; ++i) {
            a.rates[k][i] = b1[i] - b2[i];
            a.taxes[k][i] = a.rates[k][i] * a.p[i];
        }
    }
    return a;
}

inline double mpat_payoff(const Scenario& s, int k, std::span<const double> p,
                          std::span<const double> taxes_row) {
    double tax = 0.0;
    for (double t : taxes_row) tax += t;
    if (k == 0) {
        if (!in_feasible_set(p, s.channels, 0.0))
            return -std::numeric_limits<double>::infinity();
        return -cost(s.cost, p) - tax;
    }
    return utility_at(s.eus[k - 1], p) - tax;
}

inline void mpat_fill_payoffs(const Scenario& s, MpatAllocation& a) {
    a.payoffs.resize(s.n_agents());
    for (int k = 0; k <= s.k; ++k) a.payoffs[k] = mpat_payoff(s, k, a.p, a.taxes[k]);
}

namespace detail {

// EU proximal update: maximize U(q(p)) - R.p - (rho/2)|p - a|^2 over the box
// [0, up]^N. The stationarity system collapses to one scalar s = U'(q):
// p_n(s) = clamp(a_n + (s h_n - R_n)/rho, 0, up), and s - U'(q(s)) is
// increasing, so a bisection solves the update exactly.
inline std::vector<double> eu_prox_argmax(const EUProfile& eu, double up,
                                          std::span<const double> rates,
                                          std::span<const double> anchor, double rho) {
    const int n = static_cast<int>(eu.h.size());
    auto p_of = [&](double s) {
        std::vector<double> p(n);
        for (int i = 0; i < n; ++i)
            p[i] = std::clamp(anchor[i] + (s * eu.h[i] - rates[i]) / rho, 0.0, up);
        return p;
    };
    auto q_of = [&](double s) {
        double q = 0.0;
        for (int i = 0; i < n; ++i)
            q += eu.h[i] *
                 std::clamp(anchor[i] + (s * eu.h[i] - rates[i]) / rho, 0.0, up);
        return q;
    };
    if (is_zero_utility(eu.utility)) return p_of(0.0);

    auto phi = [&](double s) {
        return s - utility_derivative_capped(eu.utility, q_of(s));
    };
    if (phi(0.0) >= 0.0) return p_of(0.0);
    double hi = 1.0;
    for (double r : rates) hi = std::max(hi, std::abs(r));
    int guard = 0;
    while (phi(hi) < 0.0 && guard++ < 80) hi *= 2.0;
    double lo = 0.0;
    for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (phi(mid) < 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return p_of(0.5 * (lo + hi));
}

// ET proximal update: maximize -C(sum p) - R.p - (rho/2)|p - a|^2 over the
// feasible set. With w = C'(S) + nu the KKT system gives
// p_n(w) = clamp(a_n - (R_n + w)/rho, 0, peak_n) with S(w) decreasing, so two
// scalar bisections (cap slack, then cap tight) solve it exactly.
inline std::vector<double> et_prox_argmax(const ChannelSet& ch, const CostSpec& cost,
                                          std::span<const double> rates,
                                          std::span<const double> anchor, double rho) {
    const int n = ch.n;
    auto p_of = [&](double w) {
        std::vector<double> p(n);
        for (int i = 0; i < n; ++i)
            p[i] = std::clamp(anchor[i] - (rates[i] + w) / rho, 0.0, ch.peak[i]);
        return p;
    };
    auto sum_of = [&](double w) {
        double s = 0.0;
        for (int i = 0; i < n; ++i)
            s += std::clamp(anchor[i] - (rates[i] + w) / rho, 0.0, ch.peak[i]);
        return s;
    };

    auto phi = [&](double w) { return w - cost.marginal(sum_of(w)); };
    double w = 0.0;
    if (phi(0.0) < 0.0) {
        double hi = 1.0;
        int guard = 0;
        while (phi(hi) < 0.0 && guard++ < 80) hi *= 2.0;
        double lo = 0.0;
        for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, hi); ++it) {
            const double mid = 0.5 * (lo + hi);
            if (phi(mid) < 0.0)
                lo = mid;
            else
                hi = mid;
        }
        w = 0.5 * (lo + hi);
    }
    if (sum_of(w) > ch.pmax) {
        double lo = w, hi = std::max(w, 1.0);
        int guard = 0;
        while (sum_of(hi) > ch.pmax && guard++ < 80) hi *= 2.0;
        for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, hi); ++it) {
            const double mid = 0.5 * (lo + hi);
            if (sum_of(mid) > ch.pmax)
                lo = mid;
            else
                hi = mid;
        }
        w = hi;
    }
    return project_feasible(p_of(w), ch);
}

}  // namespace detail

// One agent's penalized proposal update (the rho-strongly-concave argmax).
inline std::vector<double> adal_local_update(const Scenario& s, int k,
                                             std::span<const double> rates,
                                             std::span<const double> neighbor_gamma,
                                             double rho) {
    if (static_cast<int>(rates.size()) != s.n_channels() ||
        static_cast<int>(neighbor_gamma.size()) != s.n_channels())
        throw std::invalid_argument("adal_local_update: dimension mismatch");
    if (k == 0)
        return detail::et_prox_argmax(s.channels, s.cost, rates, neighbor_gamma, rho);
    return detail::eu_prox_argmax(s.eus[k - 1], s.pup[k], rates, neighbor_gamma, rho);
}

struct MpatTraceRow {
    int iter = 0;
    std::vector<double> p;
    double consistency_residual = 0.0;
    double sw = 0.0;
    double max_rel_change = 0.0;
    Matrix gamma;  // kept for diagnostics; not part of the CSV schema
};

struct MpatTrace {
    std::vector<MpatTraceRow> rows;

    // CSV contract: iter, p_1..p_N, consistency_residual, sw, max_rel_change.
    void write_csv(std::ostream& os) const {
        if (rows.empty()) return;
        const int n = static_cast<int>(rows.front().p.size());
        os << "iter";
        for (int i = 1; i <= n; ++i) os << ",p_" << i;
        os << ",consistency_residual,sw,max_rel_change\n";
        for (const auto& r : rows) {
            os << r.iter;
            for (double v : r.p) os << ',' << format_double(v);
            os << ',' << format_double(r.consistency_residual) << ','
               << format_double(r.sw) << ',' << format_double(r.max_rel_change) << '\n';
        }
    }
};

struct DMpatResult {
    MpatTrace trace;
    EquilibriumReport report;
    MpatAllocation allocation;
    MpatMessageProfile profile;
};

inline NeReport verify_mpat_ne(const Scenario& s, const MpatMessageProfile& m,
                               double tol);

inline MpatMessageProfile random_mpat_profile(const Scenario& s, std::uint64_t seed) {
    const int agents = s.n_agents();
    const int n = s.n_channels();
    MpatMessageProfile m;
    m.gamma.assign(agents, std::vector<double>(n));
    m.b.assign(agents, std::vector<double>(n));
    for (int k = 0; k < agents; ++k)
        for (int i = 0; i < n; ++i) {
            m.gamma[k][i] = substream(seed, stream::power_init,
                                      static_cast<std::uint64_t>(k) * n + i)
                                .uniform(0.0, s.channels.pmax);
            m.b[k][i] = substream(seed, stream::price_init,
                                  static_cast<std::uint64_t>(k) * n + i)
                            .uniform(-1.0, 1.0);
        }
    m.gamma[0] = project_feasible(m.gamma[0], s.channels);
    return m;
}

inline double consistency_residual(const MpatMessageProfile& m) {
    const int agents = m.n_agents();
    double r = 0.0;
    for (int k = 0; k < agents; ++k) {
        const auto& a = m.gamma[k];
        const auto& bnd = m.gamma[ring_index(k - 1, agents)];
        for (std::size_t i = 0; i < a.size(); ++i)
            r = std::max(r, std::abs(a[i] - bnd[i]));
    }
    return r;
}

// D-MPAT: penalized local updates relaxed by sigma plus ring price updates.
// The K+1 local argmaxes read only the previous iterate, so their execution
// order cannot change the result.
inline DMpatResult run_dmpat(const Scenario& s, const AdalConfig& cfg) {
    s.validate();
    cfg.validate();
    const int agents = s.n_agents();
    const int n = s.n_channels();
    if (agents < 3)
        throw std::invalid_argument(
            "run_dmpat: needs at least 3 agents; add a virtual agent for K = 1");

    DMpatResult out;
    MpatMessageProfile cur = random_mpat_profile(s, cfg.seed);
    MpatMessageProfile prev = cur;

    auto record = [&](int iter, double mrc) {
        if (!cfg.record_trace) return;
        MpatTraceRow row;
        row.iter = iter;
        row.p = mpat_outcome(cur).p;
        row.consistency_residual = consistency_residual(cur);
        row.sw = social_welfare(s, row.p);
        row.max_rel_change = mrc;
        row.gamma = cur.gamma;
        out.trace.rows.push_back(std::move(row));
    };
    record(0, 0.0);

    bool converged = false;
    int tau = 0;
    while (tau < cfg.max_iters && !converged) {
        ++tau;
        const auto rates = mpat_outcome(cur).rates;
        MpatMessageProfile next = cur;
        for (int k = 0; k < agents; ++k) {
            const auto hat = adal_local_update(s, k, rates[k],
                                               cur.gamma[ring_index(k - 1, agents)],
                                               cfg.rho);
            for (int i = 0; i < n; ++i) {
                next.gamma[k][i] =
                    cur.gamma[k][i] + cfg.sigma * (hat[i] - cur.gamma[k][i]);
                next.b[k][i] = cur.b[k][i] +
                               cfg.rho * cfg.sigma *
                                   (cur.gamma[ring_index(k - 1, agents)][i] -
                                    cur.gamma[ring_index(k - 2, agents)][i]);
            }
        }
        prev = std::exchange(cur, std::move(next));

        double mrc = 0.0;
        converged = true;
        for (int k = 0; k < agents; ++k)
            for (int i = 0; i < n; ++i) {
                converged = converged &&
                            rel_change_ok(cur.b[k][i], prev.b[k][i], cfg.eps1) &&
                            rel_change_ok(cur.gamma[k][i], prev.gamma[k][i], cfg.eps2);
                mrc = std::max(mrc, std::abs(cur.b[k][i] - prev.b[k][i]) /
                                        std::max(std::abs(prev.b[k][i]), 1e-9));
                mrc = std::max(mrc, std::abs(cur.gamma[k][i] - prev.gamma[k][i]) /
                                        std::max(std::abs(prev.gamma[k][i]), 1e-9));
            }
        record(tau, mrc);
    }

    out.profile = cur;
    out.allocation = mpat_outcome(cur);
    mpat_fill_payoffs(s, out.allocation);

    auto& rep = out.report;
    rep.converged = converged;
    rep.iterations = tau;
    rep.p = out.allocation.p;
    rep.payoffs = out.allocation.payoffs;
    rep.sw = social_welfare(s, rep.p);

    const auto oracle = solve_swm(s);
    rep.oracle_sw = oracle.sw;
    rep.oracle_rel_gap =
        std::abs(rep.sw - oracle.sw) / std::max(std::abs(oracle.sw), 1e-12);
    for (int i = 0; i < n; ++i)
        rep.oracle_power_gap =
            std::max(rep.oracle_power_gap, std::abs(rep.p[i] - oracle.p_opt[i]));
    rep.ne = verify_mpat_ne(s, cur, 1e-3 * s.channels.pmax);
    return out;
}

// Decomposed augmented Lagrangian of the ring-consensus reformulation:
// sum of local utility/cost terms minus the consistency-price terms minus
// the quadratic penalty. At a consensus point the price terms telescope away
// and the value equals SW.
inline double augmented_lagrangian(const Scenario& s, const Matrix& pi,
                                   const Matrix& beta, double rho) {
    const int agents = s.n_agents();
    const int n = s.n_channels();
    if (static_cast<int>(pi.size()) != agents || static_cast<int>(beta.size()) != agents)
        throw std::invalid_argument("augmented_lagrangian: row count mismatch");
    double value = 0.0;
    for (int k = 0; k < agents; ++k) {
        if (k == 0)
            value -= cost(s.cost, pi[0]);
        else
            value += utility_at(s.eus[k - 1], pi[k]);
        const auto& beta_next = beta[ring_index(k + 1, agents)];
        const auto& pi_prev = pi[ring_index(k - 1, agents)];
        for (int i = 0; i < n; ++i) {
            value -= pi[k][i] * (beta[k][i] - beta_next[i]);
            value -= 0.5 * rho * (pi[k][i] - pi_prev[i]) * (pi[k][i] - pi_prev[i]);
        }
    }
    return value;
}

namespace detail {

// Exact best response of an EU under fixed rates, solved in received-power
// space: free or subsidized channels fill to the bound, then priced channels
// are bought cheapest-per-received-watt first until the marginal utility
// meets the price. The optimal q is unique even when the optimal p is not.
struct EuBestResponse {
    std::vector<double> p;
    double q = 0.0;
    double payoff = 0.0;
};

inline EuBestResponse eu_best_response(const EUProfile& eu, double up,
                                       std::span<const double> rates,
                                       std::span<const double> reference_p) {
    const int n = static_cast<int>(eu.h.size());
    EuBestResponse br;
    br.p.assign(n, 0.0);
    const bool zero_u = is_zero_utility(eu.utility);

    std::vector<int> priced;
    for (int i = 0; i < n; ++i) {
        if (eu.h[i] <= 0.0 || zero_u) {
            if (rates[i] < 0.0)
                br.p[i] = up;
            else if (rates[i] == 0.0)
                br.p[i] = std::clamp(reference_p[i], 0.0, up);  // payoff-neutral
        } else if (rates[i] <= 0.0) {
            br.p[i] = up;
        } else {
            priced.push_back(i);
        }
    }
    std::sort(priced.begin(), priced.end(), [&](int a, int b) {
        const double pa = rates[a] / eu.h[a], pb = rates[b] / eu.h[b];
        return pa == pb ? a < b : pa < pb;
    });

    for (int i = 0; i < n; ++i) br.q += eu.h[i] * br.p[i];
    if (!zero_u) {
        for (int idx : priced) {
            const double price = rates[idx] / eu.h[idx];
            const double q_target = inverse_marginal(eu.utility, price);
            if (q_target <= br.q) break;
            const double buy = std::min((q_target - br.q) / eu.h[idx], up);
            br.p[idx] = buy;
            br.q += eu.h[idx] * buy;
            if (buy < up) break;
        }
    }
    br.payoff = utility(eu.utility, br.q);
    for (int i = 0; i < n; ++i) br.payoff -= rates[i] * br.p[i];
    return br;
}

// Exact best response of the ET: the cheapest per-channel fill defines a
// piecewise-linear payment c0(S), and -C(S) - c0(S) is concave in the total
// power S, maximized segment by segment. Zero-slope plateaus (linear cost)
// resolve to the upper end.
struct EtBestResponse {
    std::vector<double> p;
    double total = 0.0;
    double payoff = 0.0;
};

inline EtBestResponse et_best_response(const ChannelSet& ch, const CostSpec& cost,
                                       std::span<const double> rates) {
    const int n = ch.n;
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return rates[a] == rates[b] ? a < b : rates[a] < rates[b];
    });

    double cap_total = std::min(ch.pmax, std::accumulate(ch.peak.begin(), ch.peak.end(), 0.0));
    double best_s = 0.0, lo = 0.0;
    for (int idx : order) {
        const double hi = std::min(lo + ch.peak[idx], cap_total);
        if (hi <= lo) break;
        auto slope = [&](double sv) { return -cost.marginal(sv) - rates[idx]; };
        if (slope(hi) >= 0.0) {
            best_s = hi;
            lo = hi;
            continue;
        }
        if (slope(lo) <= 0.0) break;
        double a = lo, b = hi;
        for (int it = 0; it < 200 && b - a > 1e-14 * std::max(1.0, b); ++it) {
            const double mid = 0.5 * (a + b);
            if (slope(mid) > 0.0)
                a = mid;
            else
                b = mid;
        }
        best_s = 0.5 * (a + b);
        break;
    }

    EtBestResponse br;
    br.p.assign(n, 0.0);
    br.total = best_s;
    double remaining = best_s;
    for (int idx : order) {
        br.p[idx] = std::min(ch.peak[idx], remaining);
        remaining -= br.p[idx];
        if (remaining <= 0.0) break;
    }
    br.payoff = -cost.total(br.total);
    for (int i = 0; i < n; ++i) br.payoff -= rates[i] * br.p[i];
    return br;
}

}  // namespace detail

// NE check for the multi-channel game. Because payoffs need not be strictly
// concave in p, best responses are compared in the coordinates that are
// unique at an optimum: received power q for each EU and total power for the
// ET. The aggregate stationarity is cross-checked through the SWM KKT
// residual at the outcome power.
inline NeReport verify_mpat_ne(const Scenario& s, const MpatMessageProfile& m,
                               double tol) {
    const auto alloc = mpat_outcome(m);
    const int n = s.n_channels();
    NeReport rep;
    rep.agents.resize(s.n_agents());
    rep.verdict = true;

    for (int k = 0; k <= s.k; ++k) {
        auto& a = rep.agents[k];
        double j_m = mpat_payoff(s, k, alloc.p, alloc.taxes[k]);
        double j_br = 0.0;
        if (k == 0) {
            const auto br = detail::et_best_response(s.channels, s.cost, alloc.rates[0]);
            double total_m = 0.0;
            for (double v : alloc.p) total_m += v;
            a.power_gap = std::abs(br.total - total_m);
            j_br = br.payoff;
        } else {
            const auto br = detail::eu_best_response(s.eus[k - 1], s.pup[k],
                                                     alloc.rates[k], alloc.p);
            a.power_gap = std::abs(br.q - received_power(alloc.p, s.eus[k - 1]));
            j_br = br.payoff;
        }
        a.payoff_gap = j_br - j_m;
        double rate_scale = 1e-9;
        for (double r : alloc.rates[k]) rate_scale = std::max(rate_scale, std::abs(r));
        a.indifferent = a.payoff_gap <= tol * rate_scale;
        a.pass = a.power_gap <= tol || a.indifferent;
        rep.verdict = rep.verdict && a.pass;
    }
    rep.aggregate_kkt_residual = kkt_residual(s, alloc.p);
    return rep;
}

inline MpatMessageProfile mpat_profile_from_rates(const Matrix& rates,
                                                  const std::vector<double>& p) {
    const int agents = static_cast<int>(rates.size());
    const int n = static_cast<int>(p.size());
    MpatMessageProfile m;
    m.gamma.assign(agents, p);
    m.b.assign(agents, std::vector<double>(n, 0.0));
    for (int j = agents - 1; j >= 1; --j)
        for (int i = 0; i < n; ++i)
            m.b[j][i] = m.b[ring_index(j + 1, agents)][i] +
                        rates[ring_index(j - 1, agents)][i];
    return m;
}

}  // namespace wptmech
