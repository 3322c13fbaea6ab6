#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "detrade/grid.hpp"
#include "detrade/linpf.hpp"
#include "detrade/market.hpp"

namespace detrade {

// Centralized welfare-maximization solution for one slot.
struct CentralSolution {
    std::vector<Eigen::ArrayXd> appliance_profiles;  // aligned with WorldView::awake
    Eigen::MatrixXd p_conv, q_conv, p_ren;           // bus rows x slots
    Eigen::MatrixXd theta, vmag;
    Eigen::MatrixXd lambda_p, lambda_q;  // multiplier estimates, market sign
    Eigen::VectorXd confidence;          // attained uncertainty budget per bus
    double objective = 0.0;              // welfare value at the solution
    double kkt_residual = 0.0;
    double balance_residual = 0.0;
    bool converged = false;
    int outer_iterations = 0;
};

struct CentralOptions {
    double tol = 1e-6;             // stationarity target
    double balance_tol = 1e-8;     // equality residual target
    int max_outer = 50;
    int max_inner = 20000;
    double initial_penalty = 1.0;
    uint64_t start_seed = 0;  // 0 = deterministic mid-box start, else random start
};

class InfeasibleScenarioError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Augmented-Lagrangian solver on the power-balance equalities with
// projected-gradient inner solves. Throws InfeasibleScenarioError when no
// interior point exists.
CentralSolution solve_central(const Scenario& s, const WorldView& view,
                              const CentralOptions& opts = {});

// Builds the slot-1 view of a freshly loaded scenario: wake draws replayed
// from the seed exactly as the market run would make them.
WorldView initial_view(const Scenario& s, uint64_t seed);

// Exhaustive grid search over agent decisions at the given resolution; the
// flow is solved per candidate and infeasible points are filtered out.
// Rejects grids above the size cap.
struct BruteForceResult {
    double objective = 0.0;
    bool feasible_point_found = false;
    std::vector<Eigen::ArrayXd> appliance_profiles;
    Eigen::MatrixXd p_conv, q_conv, p_ren;
};

BruteForceResult brute_force(const Scenario& s, const WorldView& view, double resolution,
                             std::size_t max_points = 100000000);

// Stationarity and feasibility report of a candidate equilibrium at its own
// prices (the exact price identities applied to the candidate multipliers).
struct KktReport {
    double appliance_stationarity = 0.0;
    double generator_stationarity = 0.0;
    double network_stationarity = 0.0;
    double balance_residual = 0.0;
    double decision_feasibility = 0.0;  // violation of agent constraint sets
    int worst_appliance_bus = -1;
    int worst_generator_bus = -1;

    double max_residual() const {
        return std::max({appliance_stationarity, generator_stationarity, network_stationarity,
                         balance_residual, decision_feasibility});
    }
};

KktReport kkt_check(const Scenario& s, const WorldView& view, const EquilibriumCandidate& cand);

// Rolling-horizon centralized run: per slot, the DNO solves the full problem
// and commits the current slot. Emits the same result shape as market runs.
SimulationResult oracle_run(const Scenario& s, const RunOptions& opts,
                            const CentralOptions& copts = {});

}  // namespace detrade
