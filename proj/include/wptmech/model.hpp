#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "wptmech/rng.hpp"

namespace wptmech {

inline constexpr double kSpeedOfLight = 2.998e8;  // m/s
inline constexpr double kPi = 3.14159265358979323846;

// Feasible transmit-power set: 0 <= p_n <= peak_n and sum(p) <= pmax.
struct ChannelSet {
    int n = 1;
    std::vector<double> peak;  // per-channel peak power, Watts
    double pmax = 1.0;         // total power cap, Watts

    void validate() const {
        if (n < 1) throw std::invalid_argument("ChannelSet: n must be >= 1");
        if (static_cast<int>(peak.size()) != n)
            throw std::invalid_argument("ChannelSet: peak size mismatch");
        for (double v : peak)
            if (!(v > 0.0)) throw std::invalid_argument("ChannelSet: peak must be > 0");
        if (!(pmax > 0.0)) throw std::invalid_argument("ChannelSet: pmax must be > 0");
    }
};

// Weighted alpha-fair utility: (energy_rate/battery) * q^(1-alpha)/(1-alpha) * horizon.
struct AlphaFairUtility {
    double energy_rate = 0.2;  // E_k
    double battery = 40.0;     // B_k
    double alpha = 0.5;        // fairness exponent, in (0,1)
    double horizon_s = 1000.0; // T
};

// Achievable throughput: t2 * bandwidth * ln(1 + gain * q * t1 / (noise * t2)).
struct LogThroughputUtility {
    double t1_s = 1.0;
    double t2_s = 1.0;
    double bandwidth_hz = 1.0;
    double gain = 1.0;
    double noise_w = 1.0;
};

// Identically-zero utility; used by the virtual agent that lets the
// mechanisms run with a single real user.
struct ZeroUtility {};

using UtilitySpec = std::variant<AlphaFairUtility, LogThroughputUtility, ZeroUtility>;

inline void validate(const UtilitySpec& u) {
    if (const auto* a = std::get_if<AlphaFairUtility>(&u)) {
        if (!(a->energy_rate > 0 && a->battery > 0 && a->horizon_s > 0))
            throw std::invalid_argument("AlphaFairUtility: parameters must be > 0");
        if (!(a->alpha > 0 && a->alpha < 1))
            throw std::invalid_argument("AlphaFairUtility: alpha must be in (0,1)");
    } else if (const auto* l = std::get_if<LogThroughputUtility>(&u)) {
        if (!(l->t1_s > 0 && l->t2_s > 0 && l->bandwidth_hz > 0 && l->gain > 0 &&
              l->noise_w > 0))
            throw std::invalid_argument("LogThroughputUtility: parameters must be > 0");
    }
}

inline bool is_zero_utility(const UtilitySpec& u) {
    return std::holds_alternative<ZeroUtility>(u);
}

// U(q); continuous limit U(0) = 0 for every variant.
inline double utility(const UtilitySpec& u, double q) {
    if (q < 0.0) throw std::invalid_argument("utility: q must be >= 0");
    if (const auto* a = std::get_if<AlphaFairUtility>(&u)) {
        if (q == 0.0) return 0.0;
        return (a->energy_rate / a->battery) * std::pow(q, 1.0 - a->alpha) /
               (1.0 - a->alpha) * a->horizon_s;
    }
    if (const auto* l = std::get_if<LogThroughputUtility>(&u)) {
        const double kappa = l->gain * l->t1_s / (l->noise_w * l->t2_s);
        return l->t2_s * l->bandwidth_hz * std::log1p(kappa * q);
    }
    return 0.0;
}

// U'(q). The alpha-fair derivative is unbounded at q = 0; callers that can
// hit the boundary must use utility_derivative_capped instead.
inline double utility_derivative(const UtilitySpec& u, double q) {
    if (q < 0.0) throw std::invalid_argument("utility_derivative: q must be >= 0");
    if (const auto* a = std::get_if<AlphaFairUtility>(&u)) {
        if (q == 0.0)
            throw std::domain_error(
                "utility_derivative: alpha-fair marginal utility unbounded at q = 0");
        return (a->energy_rate / a->battery) * std::pow(q, -a->alpha) * a->horizon_s;
    }
    if (const auto* l = std::get_if<LogThroughputUtility>(&u)) {
        const double kappa = l->gain * l->t1_s / (l->noise_w * l->t2_s);
        return l->t2_s * l->bandwidth_hz * kappa / (1.0 + kappa * q);
    }
    return 0.0;
}

inline double utility_derivative_capped(const UtilitySpec& u, double q,
                                        double cap = 1e12) {
    if (q <= 0.0 && std::holds_alternative<AlphaFairUtility>(u)) return cap;
    return std::min(utility_derivative(u, q), cap);
}

// Largest q with U'(q) >= s (0 if U'(0+) <= s already). Both variants invert
// in closed form; the zero utility never reaches a positive marginal.
inline double inverse_marginal(const UtilitySpec& u, double s) {
    if (!(s > 0.0)) throw std::invalid_argument("inverse_marginal: s must be > 0");
    if (const auto* a = std::get_if<AlphaFairUtility>(&u)) {
        const double c = (a->energy_rate / a->battery) * a->horizon_s;
        return std::pow(c / s, 1.0 / a->alpha);
    }
    if (const auto* l = std::get_if<LogThroughputUtility>(&u)) {
        const double kappa = l->gain * l->t1_s / (l->noise_w * l->t2_s);
        const double q = (l->t2_s * l->bandwidth_hz * kappa / s - 1.0) / kappa;
        return std::max(q, 0.0);
    }
    return 0.0;
}

struct EUProfile {
    std::vector<double> h;  // channel gains, length N
    double ambient = 0.0;   // I_k, fixed 0 by convention
    UtilitySpec utility;

    void validate(int n, bool allow_zero_gains = false) const {
        if (static_cast<int>(h.size()) != n)
            throw std::invalid_argument("EUProfile: gain vector size mismatch");
        bool any_positive = false;
        for (double g : h) {
            if (g < 0.0) throw std::invalid_argument("EUProfile: gains must be >= 0");
            any_positive = any_positive || g > 0.0;
        }
        if (!any_positive && !(allow_zero_gains || is_zero_utility(utility)))
            throw std::invalid_argument("EUProfile: needs at least one positive gain");
        wptmech::validate(utility);
    }
};

// C(p) = e * T * (sum p)^zeta.
struct CostSpec {
    double e = 0.5;
    double zeta = 1.1;
    double horizon_s = 1000.0;

    void validate() const {
        if (!(e > 0 && horizon_s > 0))
            throw std::invalid_argument("CostSpec: e and horizon must be > 0");
        if (!(zeta >= 1.0)) throw std::invalid_argument("CostSpec: zeta must be >= 1");
    }
    bool strictly_convex() const { return zeta > 1.0; }

    double total(double s) const {
        if (s < 0.0) throw std::invalid_argument("cost: total power must be >= 0");
        return s == 0.0 ? 0.0 : e * horizon_s * std::pow(s, zeta);
    }
    // dC/ds; zero at s = 0 whenever zeta > 1.
    double marginal(double s) const {
        if (s < 0.0) throw std::invalid_argument("cost: total power must be >= 0");
        if (s == 0.0) return zeta > 1.0 ? 0.0 : e * horizon_s;
        return e * horizon_s * zeta * std::pow(s, zeta - 1.0);
    }
};

struct Scenario {
    int k = 0;  // number of EUs; agent 0 is the ET, agents 1..k the EUs
    ChannelSet channels;
    std::vector<EUProfile> eus;
    CostSpec cost;
    std::vector<double> pup;  // per-agent proposal upper bounds, length k+1

    int n_channels() const { return channels.n; }
    int n_agents() const { return k + 1; }

    void validate() const {
        if (k < 1) throw std::invalid_argument("Scenario: k must be >= 1");
        channels.validate();
        cost.validate();
        if (static_cast<int>(eus.size()) != k)
            throw std::invalid_argument("Scenario: eus size mismatch");
        for (const auto& eu : eus) eu.validate(channels.n);
        if (static_cast<int>(pup.size()) != k + 1)
            throw std::invalid_argument("Scenario: pup size mismatch");
        for (double v : pup)
            if (!(v >= channels.pmax))
                throw std::invalid_argument("Scenario: pup must be >= pmax");
    }
};

inline double received_power(std::span<const double> p, const EUProfile& eu) {
    if (p.size() != eu.h.size())
        throw std::invalid_argument("received_power: dimension mismatch");
    double q = eu.ambient;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] < 0.0) throw std::invalid_argument("received_power: p must be >= 0");
        q += eu.h[i] * p[i];
    }
    return q;
}

inline double utility_at(const EUProfile& eu, std::span<const double> p) {
    return utility(eu.utility, received_power(p, eu));
}

// Gradient of U_k(q_k(p)) wrt p: component n is h_{k,n} * U_k'(q_k(p)).
inline std::vector<double> marginal_utility(const EUProfile& eu,
                                            std::span<const double> p) {
    const double q = received_power(p, eu);
    std::vector<double> grad(eu.h.size(), 0.0);
    if (is_zero_utility(eu.utility)) return grad;
    const double du = utility_derivative(eu.utility, q);
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = eu.h[i] * du;
    return grad;
}

inline double cost(const CostSpec& c, std::span<const double> p) {
    double s = 0.0;
    for (double v : p) {
        if (v < 0.0) throw std::invalid_argument("cost: p must be >= 0");
        s += v;
    }
    return c.total(s);
}

inline std::vector<double> cost_gradient(const CostSpec& c, std::span<const double> p) {
    double s = 0.0;
    for (double v : p) s += v;
    return std::vector<double>(p.size(), c.marginal(s));
}

inline bool in_feasible_set(std::span<const double> p, const ChannelSet& ch,
                            double tol = 1e-9) {
    if (static_cast<int>(p.size()) != ch.n) return false;
    double s = 0.0;
    for (int i = 0; i < ch.n; ++i) {
        if (p[i] < -tol || p[i] > ch.peak[i] + tol) return false;
        s += p[i];
    }
    return s <= ch.pmax + tol;
}

// Euclidean projection onto the feasible set. Box clip first; if the sum cap
// is violated the KKT form is clamp(p_n - t, 0, peak_n) for a shift t >= 0,
// found by bisection.
inline std::vector<double> project_feasible(std::span<const double> p,
                                            const ChannelSet& ch) {
    if (static_cast<int>(p.size()) != ch.n)
        throw std::invalid_argument("project_feasible: dimension mismatch");
    std::vector<double> out(ch.n);
    double sum = 0.0;
    for (int i = 0; i < ch.n; ++i) {
        out[i] = std::clamp(p[i], 0.0, ch.peak[i]);
        sum += out[i];
    }
    if (sum <= ch.pmax) return out;

    auto clipped_sum = [&](double t) {
        double s = 0.0;
        for (int i = 0; i < ch.n; ++i) s += std::clamp(p[i] - t, 0.0, ch.peak[i]);
        return s;
    };
    double lo = 0.0;
    double hi = 0.0;
    for (int i = 0; i < ch.n; ++i) hi = std::max(hi, p[i]);
    for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (clipped_sum(mid) > ch.pmax)
            lo = mid;
        else
            hi = mid;
    }
    for (int i = 0; i < ch.n; ++i) out[i] = std::clamp(p[i] - hi, 0.0, ch.peak[i]);
    return out;
}

// Friis link budget in dB units.
inline double friis_received_dbm(double pt_dbm, double gt_dbi, double gr_dbi,
                                 double d_m, double f0_hz) {
    if (!(d_m > 0.0) || !(f0_hz > 0.0))
        throw std::invalid_argument("friis_received_dbm: d and f0 must be > 0");
    const double path = 20.0 * std::log10(kSpeedOfLight / (4.0 * kPi * d_m * f0_hz));
    return pt_dbm + gt_dbi + gr_dbi + path;
}

struct ScenarioGenSpec {
    int k = 2;
    int n = 1;
    double prob = 0.8;            // per-channel availability probability
    double radius_m = 5.0;        // EU distances drawn from U[1, radius]
    std::vector<double> cfs_hz;   // carrier frequencies; defaults below
    double pmax = 4.0;
    std::vector<double> peak;     // empty -> pmax on every channel
    double cost_e = 0.5;
    double cost_zeta = 1.1;
    double horizon_s = 1000.0;
    double alpha = 0.5;
    double battery_lo = 20.0, battery_hi = 50.0;
    double energy_lo = 0.1, energy_hi = 0.3;
    double pup_factor = 10.0;     // P_k^up = pup_factor * pmax
    std::uint64_t seed = 0;

    void validate() const {
        if (k < 1 || n < 1) throw std::invalid_argument("ScenarioGenSpec: k,n >= 1");
        if (!(prob >= 0.0 && prob <= 1.0))
            throw std::invalid_argument("ScenarioGenSpec: prob must be in [0,1]");
        if (!(radius_m >= 1.0))
            throw std::invalid_argument("ScenarioGenSpec: radius must be >= 1");
        if (!(alpha > 0 && alpha < 1))
            throw std::invalid_argument("ScenarioGenSpec: alpha must be in (0,1)");
        if (!(battery_hi >= battery_lo && energy_hi >= energy_lo))
            throw std::invalid_argument("ScenarioGenSpec: empty parameter range");
        if (!(pmax > 0)) throw std::invalid_argument("ScenarioGenSpec: pmax must be > 0");
        if (!(pup_factor >= 1.0))
            throw std::invalid_argument("ScenarioGenSpec: pup_factor must be >= 1");
    }
};

inline std::vector<double> default_carrier_frequencies(int n) {
    static const double base[] = {865e6, 890e6, 915e6, 950e6};
    if (n > 4)
        throw std::invalid_argument(
            "default_carrier_frequencies: give explicit cfs for n > 4");
    return std::vector<double>(base, base + n);
}

// phi_n = (2.39e7 / CF_n)^2, the carrier-frequency factor of the long-term
// path-loss model h = a * phi * d^-3.
inline double pathloss_factor(double cf_hz) {
    const double r = 2.39e7 / cf_hz;
    return r * r;
}

inline Scenario sample_scenario(const ScenarioGenSpec& spec) {
    spec.validate();
    std::vector<double> cfs = spec.cfs_hz.empty()
                                  ? default_carrier_frequencies(spec.n)
                                  : spec.cfs_hz;
    if (static_cast<int>(cfs.size()) != spec.n)
        throw std::invalid_argument("sample_scenario: cfs size mismatch");

    Scenario s;
    s.k = spec.k;
    s.channels.n = spec.n;
    s.channels.pmax = spec.pmax;
    s.channels.peak = spec.peak.empty() ? std::vector<double>(spec.n, spec.pmax)
                                        : spec.peak;
    s.cost = CostSpec{spec.cost_e, spec.cost_zeta, spec.horizon_s};
    s.pup.assign(spec.k + 1, spec.pup_factor * spec.pmax);

    constexpr int kMaxRowRetries = 100;
    for (int i = 0; i < spec.k; ++i) {
        EUProfile eu;
        const double battery =
            substream(spec.seed, stream::battery, i).uniform(spec.battery_lo, spec.battery_hi);
        const double energy =
            substream(spec.seed, stream::energy_rate, i).uniform(spec.energy_lo, spec.energy_hi);
        const double d =
            substream(spec.seed, stream::distance, i).uniform(1.0, spec.radius_m);
        eu.utility = AlphaFairUtility{energy, battery, spec.alpha, spec.horizon_s};

        auto avail = substream(spec.seed, stream::availability, i);
        bool ok = false;
        for (int attempt = 0; attempt < kMaxRowRetries && !ok; ++attempt) {
            eu.h.assign(spec.n, 0.0);
            for (int ch = 0; ch < spec.n; ++ch)
                if (avail.bernoulli(spec.prob))
                    eu.h[ch] = pathloss_factor(cfs[ch]) / (d * d * d);
            for (double g : eu.h) ok = ok || g > 0.0;
        }
        if (!ok)
            throw std::runtime_error(
                "sample_scenario: unsatisfiable scenario, all-zero gain row after " +
                std::to_string(kMaxRowRetries) + " retries");
        s.eus.push_back(std::move(eu));
    }
    s.validate();
    return s;
}

}  // namespace wptmech
