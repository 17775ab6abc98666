#pragma once

// Hand-built economies reused across suites.

#include <vector>

#include "wptmech/model.hpp"
#include "wptmech/rng.hpp"

namespace testfix {

// K log-utility EUs (U = ln(1 + q)) with unit gains and linear unit cost on
// one channel. The welfare optimum solves K/(1+p) = 1.
inline wptmech::Scenario log_unit_scenario(int k, double pmax = 10.0,
                                           double cost_scale = 1.0,
                                           double zeta = 1.0) {
    wptmech::Scenario s;
    s.k = k;
    s.channels.n = 1;
    s.channels.peak = {pmax * 10.0};
    s.channels.pmax = pmax;
    s.cost = wptmech::CostSpec{cost_scale, zeta, 1.0};
    for (int i = 0; i < k; ++i) {
        wptmech::EUProfile eu;
        eu.h = {1.0};
        eu.utility = wptmech::LogThroughputUtility{1.0, 1.0, 1.0, 1.0, 1.0};
        s.eus.push_back(eu);
    }
    s.pup.assign(k + 1, 10.0 * pmax);
    return s;
}

// Well-scaled random economies for solver stress: moderate gains, mixed
// utility families, strictly convex cost unless asked otherwise.
inline wptmech::Scenario random_scenario(std::uint64_t seed, int k, int n,
                                         double avail_prob = 1.0,
                                         bool strictly_convex_cost = true) {
    wptmech::SplitMix64 rng(wptmech::mix64(seed + 0x51ed2701));
    wptmech::Scenario s;
    s.k = k;
    s.channels.n = n;
    s.channels.pmax = rng.uniform(1.0, 5.0);
    s.channels.peak.resize(n);
    for (auto& v : s.channels.peak) v = s.channels.pmax * rng.uniform(0.4, 1.0);
    const double zeta = strictly_convex_cost ? rng.uniform(1.1, 1.8) : 1.0;
    s.cost = wptmech::CostSpec{rng.uniform(0.2, 1.0), zeta, 1.0};
    for (int i = 0; i < k; ++i) {
        wptmech::EUProfile eu;
        eu.h.assign(n, 0.0);
        bool any = false;
        while (!any) {
            for (int c = 0; c < n; ++c) {
                eu.h[c] = rng.uniform() < avail_prob ? rng.uniform(0.3, 1.2) : 0.0;
                any = any || eu.h[c] > 0.0;
            }
        }
        if (i % 2 == 0)
            eu.utility = wptmech::AlphaFairUtility{rng.uniform(0.5, 2.0), 1.0,
                                                   rng.uniform(0.3, 0.7), 1.0};
        else
            eu.utility = wptmech::LogThroughputUtility{1.0, 1.0, rng.uniform(0.5, 2.0),
                                                       rng.uniform(0.5, 2.0), 1.0};
        s.eus.push_back(eu);
    }
    s.pup.assign(k + 1, 10.0 * s.channels.pmax);
    return s;
}

}  // namespace testfix
