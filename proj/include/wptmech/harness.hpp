#pragma once

#include <chrono>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "wptmech/benchmarks.hpp"
#include "wptmech/model.hpp"
#include "wptmech/mpat.hpp"
#include "wptmech/pat.hpp"
#include "wptmech/rng.hpp"
#include "wptmech/swm.hpp"
#include "wptmech/textio.hpp"

namespace wptmech {

inline constexpr const char* kPlanFormat = "wpt-plan/1";

struct ExperimentPlan {
    std::vector<int> k_list{5};
    int n = 1;
    std::vector<double> pmax_list{4.0};
    std::vector<double> prob_list{0.8};
    std::vector<double> r_list{5.0};
    int trials = 1;
    std::uint64_t seed_base = 0;
    std::vector<std::string> mechanisms{"mpat"};  // subset of mpat, be, dpo, pat
    double alpha = 0.5;
    std::vector<double> cfs_hz;  // empty -> defaults for n <= 4
    double cost_e = 0.5, cost_zeta = 1.1, horizon_s = 1000.0;
    double eps1 = 1e-5, eps2 = 1e-5;
    int max_iters = 20000;
    // Wall-clock timing breaks byte-identical reruns, so it is opt-in; rows
    // carry 0 when disabled.
    bool timing = false;

    void validate() const {
        if (trials < 1) throw std::invalid_argument("plan: trials must be >= 1");
        if (k_list.empty() || pmax_list.empty() || prob_list.empty() || r_list.empty())
            throw std::invalid_argument("plan: empty sweep axis");
        if (mechanisms.empty()) throw std::invalid_argument("plan: no mechanisms");
        for (const auto& m : mechanisms) {
            if (m != "mpat" && m != "be" && m != "dpo" && m != "pat")
                throw std::invalid_argument("plan: unknown mechanism '" + m + "'");
            if (m == "pat" && n != 1)
                throw std::invalid_argument("plan: mechanism pat requires n = 1");
        }
        if (!(eps1 > 0 && eps2 > 0)) throw std::invalid_argument("plan: eps must be > 0");
        if (max_iters < 0) throw std::invalid_argument("plan: max_iters < 0");
    }
};

struct ExperimentRow {
    std::uint64_t seed = 0;
    int k = 0;
    int n = 0;
    double pmax = 0.0;
    double prob = 0.0;
    double r = 0.0;
    std::string mechanism;
    int iterations = 0;
    bool converged = false;
    double sw = 0.0;
    double eu_avg_payoff = 0.0;
    double oracle_sw = 0.0;
    double rel_gap = 0.0;
    double wall_ms = 0.0;
};

inline constexpr const char* kExperimentCsvHeader =
    "seed,k,n,pmax,prob,r,mechanism,iterations,converged,sw,eu_avg_payoff,"
    "oracle_sw,rel_gap,wall_ms";

inline void write_experiment_csv(std::ostream& os,
                                 const std::vector<ExperimentRow>& rows) {
    os << kExperimentCsvHeader << '\n';
    for (const auto& r : rows) {
        os << r.seed << ',' << r.k << ',' << r.n << ',' << format_double(r.pmax) << ','
           << format_double(r.prob) << ',' << format_double(r.r) << ',' << r.mechanism
           << ',' << r.iterations << ',' << (r.converged ? 1 : 0) << ','
           << format_double(r.sw) << ',' << format_double(r.eu_avg_payoff) << ','
           << format_double(r.oracle_sw) << ',' << format_double(r.rel_gap) << ','
           << format_double(r.wall_ms) << '\n';
    }
}

inline ExperimentPlan read_plan(std::istream& is) {
    const KvFile kv = KvFile::read(is);
    kv.require_format(kPlanFormat);
    ExperimentPlan p;
    p.k_list.clear();
    for (double v : kv.get_doubles("k")) p.k_list.push_back(static_cast<int>(v));
    p.n = static_cast<int>(kv.get_int("n"));
    p.pmax_list = kv.get_doubles("pmax");
    p.prob_list = kv.get_doubles("prob");
    p.r_list = kv.get_doubles("r");
    p.trials = static_cast<int>(kv.get_int("trials"));
    p.seed_base = static_cast<std::uint64_t>(kv.get_int("seed"));
    p.mechanisms = kv.get_strings("mechanisms");
    if (kv.has("alpha")) p.alpha = kv.get_double("alpha");
    if (kv.has("cfs")) p.cfs_hz = kv.get_doubles("cfs");
    if (kv.has("cost.e")) p.cost_e = kv.get_double("cost.e");
    if (kv.has("cost.zeta")) p.cost_zeta = kv.get_double("cost.zeta");
    if (kv.has("cost.t")) p.horizon_s = kv.get_double("cost.t");
    if (kv.has("eps1")) p.eps1 = kv.get_double("eps1");
    if (kv.has("eps2")) p.eps2 = kv.get_double("eps2");
    if (kv.has("max_iters")) p.max_iters = static_cast<int>(kv.get_int("max_iters"));
    if (kv.has("timing")) p.timing = kv.get_int("timing") != 0;
    p.validate();
    return p;
}

inline void write_plan(std::ostream& os, const ExperimentPlan& p) {
    KvFile kv;
    kv.set("format", kPlanFormat);
    std::vector<double> ks(p.k_list.begin(), p.k_list.end());
    kv.set_doubles("k", ks);
    kv.set_int("n", p.n);
    kv.set_doubles("pmax", p.pmax_list);
    kv.set_doubles("prob", p.prob_list);
    kv.set_doubles("r", p.r_list);
    kv.set_int("trials", p.trials);
    kv.set_int("seed", static_cast<long long>(p.seed_base));
    std::string mechs;
    for (std::size_t i = 0; i < p.mechanisms.size(); ++i)
        mechs += (i ? " " : "") + p.mechanisms[i];
    kv.set("mechanisms", mechs);
    kv.set_double("alpha", p.alpha);
    if (!p.cfs_hz.empty()) kv.set_doubles("cfs", p.cfs_hz);
    kv.set_double("cost.e", p.cost_e);
    kv.set_double("cost.zeta", p.cost_zeta);
    kv.set_double("cost.t", p.horizon_s);
    kv.set_double("eps1", p.eps1);
    kv.set_double("eps2", p.eps2);
    kv.set_int("max_iters", p.max_iters);
    kv.set_int("timing", p.timing ? 1 : 0);
    kv.write(os);
}

// Batch runner. Cells sweep (K x pmax x prob x r) in listed order; rows are
// emitted in (cell, trial, mechanism) order and a failed run becomes a
// converged=false row instead of aborting the batch.
inline std::vector<ExperimentRow> run_experiment(const ExperimentPlan& plan) {
    plan.validate();
    std::vector<ExperimentRow> rows;
    std::uint64_t cell_index = 0;
    for (int k : plan.k_list)
        for (double pmax : plan.pmax_list)
            for (double prob : plan.prob_list)
                for (double r : plan.r_list) {
                    for (int trial = 0; trial < plan.trials; ++trial) {
                        const std::uint64_t seed =
                            derive_seed(plan.seed_base, stream::experiment,
                                        cell_index * plan.trials + trial);
                        ScenarioGenSpec spec;
                        spec.k = k;
                        spec.n = plan.n;
                        spec.prob = prob;
                        spec.radius_m = r;
                        spec.pmax = pmax;
                        spec.alpha = plan.alpha;
                        spec.cfs_hz = plan.cfs_hz;
                        spec.cost_e = plan.cost_e;
                        spec.cost_zeta = plan.cost_zeta;
                        spec.horizon_s = plan.horizon_s;
                        spec.seed = seed;

                        for (const auto& mech : plan.mechanisms) {
                            ExperimentRow row;
                            row.seed = seed;
                            row.k = k;
                            row.n = plan.n;
                            row.pmax = pmax;
                            row.prob = prob;
                            row.r = r;
                            row.mechanism = mech;
                            const auto t0 = std::chrono::steady_clock::now();
                            try {
                                const Scenario s = sample_scenario(spec);
                                const auto oracle = solve_swm(s);
                                row.oracle_sw = oracle.sw;
                                if (mech == "mpat") {
                                    AdalConfig cfg;
                                    cfg.eps1 = plan.eps1;
                                    cfg.eps2 = plan.eps2;
                                    cfg.max_iters = plan.max_iters;
                                    cfg.seed = derive_seed(seed, 101);
                                    const auto res = run_dmpat(s, cfg);
                                    row.iterations = res.report.iterations;
                                    row.converged = res.report.converged;
                                    row.sw = res.report.sw;
                                    double acc = 0.0;
                                    for (int a = 1; a <= s.k; ++a)
                                        acc += res.allocation.payoffs[a];
                                    row.eu_avg_payoff = acc / s.k;
                                } else if (mech == "pat") {
                                    DPatConfig cfg;
                                    cfg.eps1 = plan.eps1;
                                    cfg.eps2 = plan.eps2;
                                    cfg.max_iters = plan.max_iters;
                                    cfg.seed = derive_seed(seed, 102);
                                    const auto res = run_dpat(s, cfg);
                                    row.iterations = res.report.iterations;
                                    row.converged = res.report.converged;
                                    row.sw = res.report.sw;
                                    double acc = 0.0;
                                    for (int a = 1; a <= s.k; ++a)
                                        acc += res.allocation.payoffs[a];
                                    row.eu_avg_payoff = acc / s.k;
                                } else if (mech == "be") {
                                    BeConfig cfg;
                                    cfg.eps = std::min(plan.eps1, plan.eps2);
                                    cfg.max_iters = plan.max_iters;
                                    cfg.seed = derive_seed(seed, 103);
                                    const auto res = run_be(s, cfg);
                                    row.iterations = res.equilibrium.iterations;
                                    row.converged = res.equilibrium.converged;
                                    row.sw = social_welfare(s, res.equilibrium.p_be);
                                    double acc = 0.0;
                                    for (int a = 1; a <= s.k; ++a)
                                        acc += be_eu_payoff(s, res.equilibrium, a);
                                    row.eu_avg_payoff = acc / s.k;
                                } else {  // dpo
                                    AdalConfig cfg;
                                    cfg.eps1 = plan.eps1;
                                    cfg.eps2 = plan.eps2;
                                    cfg.max_iters = plan.max_iters;
                                    cfg.seed = derive_seed(seed, 104);
                                    const auto res = run_dpo(s, cfg);
                                    row.iterations = res.report.iterations;
                                    row.converged = res.report.converged;
                                    row.sw = res.report.sw;
                                    double acc = 0.0;
                                    for (int a = 1; a <= s.k; ++a)
                                        acc += res.report.payoffs[a];
                                    row.eu_avg_payoff = acc / s.k;
                                }
                                row.rel_gap = std::abs(row.sw - row.oracle_sw) /
                                              std::max(std::abs(row.oracle_sw), 1e-12);
                            } catch (const std::exception&) {
                                row.converged = false;
                            }
                            if (plan.timing) {
                                const auto t1 = std::chrono::steady_clock::now();
                                row.wall_ms =
                                    std::chrono::duration<double, std::milli>(t1 - t0)
                                        .count();
                            }
                            rows.push_back(std::move(row));
                        }
                    }
                    ++cell_index;
                }
    return rows;
}

}  // namespace wptmech
