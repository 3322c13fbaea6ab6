#pragma once

#include <cstdint>

#include "detrade/grid.hpp"

namespace detrade {

// Knobs of the synthetic radial-feeder generator. Everything downstream of
// these is drawn deterministically from the seed.
struct SyntheticSpec {
    int buses = 5;        // entity buses; the slack substation is added on top
    int generators = 1;
    int users_min = 100, users_max = 500;  // households per load aggregator
    double renewable_fraction = 0.5;       // share of generators with a renewable unit
    int horizon = 24;
    double slot_hours = 1.0;

    // physical calibration
    double drop_scale = 1.0;   // scales branch impedances (voltage-drop depth)
    double capacity_margin = 1.5;  // conventional capacity over estimated peak
    double risk_weight = 2.0;

    // market tuning
    double tol = 1e-2;
    int max_iters = 2000;
    double step_base = 1.0;
    double primal_scale = 0.0;  // 0 = derived from the network operator norm
    double dual_scale = 8.0;
};

class InfeasibleSpecError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

Scenario generate_scenario(const SyntheticSpec& spec, uint64_t seed);

}  // namespace detrade
