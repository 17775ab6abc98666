#pragma once

#include <vector>

namespace wptmech {

struct AgentBestResponse {
    double power_gap = 0.0;   // distance to a best response, Watts
    double payoff_gap = 0.0;  // J(best response) - J(outcome), >= 0
    bool indifferent = false; // payoff-flat agent (zero utility, linear tie)
    bool pass = false;
};

struct NeReport {
    std::vector<AgentBestResponse> agents;  // index 0 = ET
    bool verdict = false;
    double aggregate_kkt_residual = 0.0;
};

struct EquilibriumReport {
    bool converged = false;
    int iterations = 0;
    std::vector<double> p;
    std::vector<double> payoffs;  // K+1 values, index 0 = ET
    double sw = 0.0;
    double oracle_sw = 0.0;
    double oracle_rel_gap = 0.0;    // |sw - oracle_sw| / max(|oracle_sw|, 1e-12)
    double oracle_power_gap = 0.0;  // max_n |p_n - p_opt_n|
    NeReport ne;
};

}  // namespace wptmech
