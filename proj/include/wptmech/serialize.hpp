#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "wptmech/benchmarks.hpp"
#include "wptmech/model.hpp"
#include "wptmech/mpat.hpp"
#include "wptmech/pat.hpp"
#include "wptmech/swm.hpp"
#include "wptmech/textio.hpp"

namespace wptmech {

inline constexpr const char* kScenarioFormat = "wpt-scenario/1";
inline constexpr const char* kProfileFormat = "wpt-profile/1";
inline constexpr const char* kOracleFormat = "wpt-oracle/1";
inline constexpr const char* kLindahlFormat = "wpt-lindahl/1";
inline constexpr const char* kBeFormat = "wpt-be/1";

inline void write_scenario(std::ostream& os, const Scenario& s) {
    KvFile kv;
    kv.set("format", kScenarioFormat);
    kv.set_int("k", s.k);
    kv.set_int("n", s.channels.n);
    kv.set_double("pmax", s.channels.pmax);
    kv.set_doubles("peak", s.channels.peak);
    kv.set_double("cost.e", s.cost.e);
    kv.set_double("cost.zeta", s.cost.zeta);
    kv.set_double("cost.t", s.cost.horizon_s);
    kv.set_doubles("pup", s.pup);
    for (int i = 0; i < s.k; ++i) {
        const std::string pre = "eu." + std::to_string(i) + ".";
        const auto& eu = s.eus[i];
        kv.set_doubles(pre + "h", eu.h);
        if (const auto* a = std::get_if<AlphaFairUtility>(&eu.utility)) {
            kv.set(pre + "utility.kind", "alphafair");
            kv.set_double(pre + "utility.energy_rate", a->energy_rate);
            kv.set_double(pre + "utility.battery", a->battery);
            kv.set_double(pre + "utility.alpha", a->alpha);
            kv.set_double(pre + "utility.t", a->horizon_s);
        } else if (const auto* l = std::get_if<LogThroughputUtility>(&eu.utility)) {
            kv.set(pre + "utility.kind", "logthroughput");
            kv.set_double(pre + "utility.t1", l->t1_s);
            kv.set_double(pre + "utility.t2", l->t2_s);
            kv.set_double(pre + "utility.bandwidth", l->bandwidth_hz);
            kv.set_double(pre + "utility.gain", l->gain);
            kv.set_double(pre + "utility.noise", l->noise_w);
        } else {
            kv.set(pre + "utility.kind", "zero");
        }
    }
    kv.write(os);
}

inline Scenario read_scenario(std::istream& is) {
    const KvFile kv = KvFile::read(is);
    kv.require_format(kScenarioFormat);
    Scenario s;
    s.k = static_cast<int>(kv.get_int("k"));
    s.channels.n = static_cast<int>(kv.get_int("n"));
    s.channels.pmax = kv.get_double("pmax");
    s.channels.peak = kv.get_doubles("peak");
    s.cost = CostSpec{kv.get_double("cost.e"), kv.get_double("cost.zeta"),
                      kv.get_double("cost.t")};
    s.pup = kv.get_doubles("pup");
    for (int i = 0; i < s.k; ++i) {
        const std::string pre = "eu." + std::to_string(i) + ".";
        EUProfile eu;
        eu.h = kv.get_doubles(pre + "h");
        const std::string kind = kv.get(pre + "utility.kind");
        if (kind == "alphafair") {
            eu.utility = AlphaFairUtility{
                kv.get_double(pre + "utility.energy_rate"),
                kv.get_double(pre + "utility.battery"),
                kv.get_double(pre + "utility.alpha"),
                kv.get_double(pre + "utility.t")};
        } else if (kind == "logthroughput") {
            eu.utility = LogThroughputUtility{
                kv.get_double(pre + "utility.t1"), kv.get_double(pre + "utility.t2"),
                kv.get_double(pre + "utility.bandwidth"),
                kv.get_double(pre + "utility.gain"), kv.get_double(pre + "utility.noise")};
        } else if (kind == "zero") {
            eu.utility = ZeroUtility{};
        } else {
            throw std::invalid_argument("bad value for key '" + pre +
                                        "utility.kind': " + kind);
        }
        s.eus.push_back(std::move(eu));
    }
    s.validate();
    return s;
}

// Message profiles are stored row per agent so a converged run can be fed
// back into the NE verifier.
inline void write_profile(std::ostream& os, const MpatMessageProfile& m) {
    KvFile kv;
    kv.set("format", kProfileFormat);
    kv.set_int("agents", m.n_agents());
    kv.set_int("n", m.n_channels());
    for (int k = 0; k < m.n_agents(); ++k) {
        kv.set_doubles("gamma." + std::to_string(k), m.gamma[k]);
        kv.set_doubles("b." + std::to_string(k), m.b[k]);
    }
    kv.write(os);
}

inline void write_profile(std::ostream& os, const PatMessageProfile& m) {
    MpatMessageProfile mm;
    for (int k = 0; k < m.n_agents(); ++k) {
        mm.gamma.push_back({m.gamma[k]});
        mm.b.push_back({m.b[k]});
    }
    write_profile(os, mm);
}

inline MpatMessageProfile read_profile(std::istream& is) {
    const KvFile kv = KvFile::read(is);
    kv.require_format(kProfileFormat);
    const int agents = static_cast<int>(kv.get_int("agents"));
    const int n = static_cast<int>(kv.get_int("n"));
    if (agents < 1 || n < 1) throw std::invalid_argument("bad profile dimensions");
    MpatMessageProfile m;
    for (int k = 0; k < agents; ++k) {
        m.gamma.push_back(kv.get_doubles("gamma." + std::to_string(k)));
        m.b.push_back(kv.get_doubles("b." + std::to_string(k)));
        if (static_cast<int>(m.gamma[k].size()) != n ||
            static_cast<int>(m.b[k].size()) != n)
            throw std::invalid_argument("profile row size mismatch for agent " +
                                        std::to_string(k));
    }
    return m;
}

inline void write_oracle_solution(std::ostream& os, const OracleSolution& sol) {
    KvFile kv;
    kv.set("format", kOracleFormat);
    kv.set_doubles("p", sol.p_opt);
    kv.set_double("sw", sol.sw);
    kv.set_doubles("dual.lambda", sol.duals.lambda);
    kv.set_doubles("dual.mu", sol.duals.mu);
    kv.set_double("dual.nu", sol.duals.nu);
    kv.set_double("kkt_residual", sol.kkt_residual);
    kv.set_int("converged", sol.converged ? 1 : 0);
    kv.set_int("iterations", sol.iterations);
    kv.set_int("strict_curvature", sol.strict_curvature ? 1 : 0);
    kv.write(os);
}

inline void write_lindahl(std::ostream& os, const LindahlAllocation& a) {
    KvFile kv;
    kv.set("format", kLindahlFormat);
    kv.set_doubles("p", a.p_opt);
    for (std::size_t k = 0; k < a.rates.size(); ++k) {
        kv.set_doubles("rate." + std::to_string(k), a.rates[k]);
        kv.set_doubles("tax." + std::to_string(k), a.taxes[k]);
    }
    kv.write(os);
}

inline void write_benchmark_equilibrium(std::ostream& os,
                                        const BenchmarkEquilibrium& eq) {
    KvFile kv;
    kv.set("format", kBeFormat);
    kv.set_doubles("p", eq.p_be);
    kv.set_doubles("theta", eq.theta);
    for (std::size_t k = 0; k < eq.demands.size(); ++k)
        kv.set_doubles("demand." + std::to_string(k + 1), eq.demands[k]);
    kv.set_int("iterations", eq.iterations);
    kv.set_int("converged", eq.converged ? 1 : 0);
    kv.write(os);
}

}  // namespace wptmech
