#pragma once

#include <Eigen/Dense>
#include <vector>

#include "detrade/appliance.hpp"
#include "detrade/grid.hpp"

namespace detrade {

// One appliance that has woken up (or, under complete information, whose
// wake slot is known in advance).
struct AwakeAppliance {
    int index = 0;      // into AggregatorConfig::appliances
    int wake_slot = 0;  // first slot it may consume in
    std::vector<int> window;
    double energy_used = 0.0;    // committed energy from past slots
    Eigen::ArrayXd profile;      // decision over the full horizon
};

struct AggregatorState {
    int bus = 0;
    std::vector<AwakeAppliance> active;
    std::vector<AwakeAppliance> retired;  // window elapsed; kept for accounting
    std::vector<int> asleep;              // appliance indices not yet awake
};

struct SolveStats {
    int iterations = 0;
    double residual = 0.0;
    bool converged = true;
};

AggregatorState init_aggregator_state(const AggregatorConfig& cfg);

// Moves the given appliance indices from asleep to active at slot t and
// retires active appliances whose window has fully elapsed.
void wake_step(AggregatorState& st, const AggregatorConfig& cfg, int t,
               const std::vector<int>& events, int horizon_len);

// Active + estimated sleeping demand over [t, H); entries before t are zero.
struct DemandProfile {
    Eigen::ArrayXd active_power;    // l_i(h)
    Eigen::ArrayXd reactive_power;  // q_i(h) = l_i(h) * reactive ratio
    Eigen::ArrayXd sleeping_part;   // the estimate component of l_i
};

DemandProfile demand_profile(const AggregatorState& st, const AggregatorConfig& cfg, int t,
                             int horizon_len);

ApplianceFeasibleSet awake_feasible_set(const AggregatorConfig& cfg, const AwakeAppliance& aa,
                                        int t, int horizon_len);

// Maximizes utility minus payment over the product of appliance feasible
// sets by projected gradient ascent with a diminishing step; the appliance
// problems are independent, so each is solved on its own. Profiles are
// updated in place (warm start).
SolveStats aggregator_local_solve(AggregatorState& st, const AggregatorConfig& cfg,
                                  const Eigen::ArrayXd& price_active, int t,
                                  const InnerSolverConfig& inner);

// Utility minus payment at the current profiles (sleeping estimate included
// in the payment term).
double aggregator_profit(const AggregatorState& st, const AggregatorConfig& cfg,
                         const Eigen::ArrayXd& price_active, int t);

// The no-demand-response comparison point: every active appliance runs at
// nominal power from the current slot until its remaining energy target is
// met, projected onto its feasible set.
std::vector<Eigen::ArrayXd> benchmark_point(const AggregatorState& st,
                                            const AggregatorConfig& cfg, int t);

double profiles_profit(const AggregatorState& st, const AggregatorConfig& cfg,
                       const std::vector<Eigen::ArrayXd>& profiles,
                       const Eigen::ArrayXd& price_active, int t);

}  // namespace detrade
