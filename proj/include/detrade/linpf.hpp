#pragma once

#include <Eigen/Dense>
#include <vector>

#include "detrade/grid.hpp"

namespace detrade {

// Block matrices of the linear injection model
//   [p; q] = [[-B', G'], [-G', -B]] [theta; v]
// where B, G are the imaginary/real parts of the bus admittance matrix and
// the primed variants have the shunt terms removed from the diagonal.
struct AdmittanceBlocks {
    int n = 0;  // bus count including slack
    Eigen::MatrixXd B, Bp, G, Gp;

    Eigen::MatrixXd flow_matrix() const;  // the assembled 2n x 2n operator
};

AdmittanceBlocks assemble_lambda(const NetworkModel& network);

class SingularNetworkError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Inverse of the flow operator with the slack angle/magnitude rows and
// columns removed (theta_slack = 0, v_slack = 1) and re-embedded at full
// size with zeros in the slack rows/columns, so that entry (n + b, j) is
// the voltage-magnitude sensitivity dv_b/dp_j.
struct SensitivityMatrix {
    int n = 0;
    int slack = 0;
    Eigen::MatrixXd inv;  // 2n x 2n, slack rows/cols zero

    double dv_dp(int bus, int inj_bus) const { return inv(n + bus, inj_bus); }
    // column sum over all buses of dv_b/dp_j; the voltage-risk price of
    // injecting active power at bus j
    double voltage_shift_per_injection(int inj_bus) const;
};

SensitivityMatrix reduced_inverse(const AdmittanceBlocks& blocks, int slack);

// Voltage angles/magnitudes per slot; column h is slot h.
struct FlowState {
    Eigen::MatrixXd theta;  // n x slots
    Eigen::MatrixXd vmag;   // n x slots
};

// Factorization of the reduced operator, reused across slots and iterations.
class FlowSolver {
  public:
    FlowSolver(const AdmittanceBlocks& blocks, int slack);

    int size() const { return n_; }
    int slack() const { return slack_; }

    // Injections of all buses (slack entries ignored); returns anchored
    // theta, v. Single-slot version.
    void solve(const Eigen::VectorXd& p, const Eigen::VectorXd& q,
               Eigen::VectorXd& theta, Eigen::VectorXd& vmag) const;

    const SensitivityMatrix& sensitivity() const { return sens_; }

  private:
    int n_ = 0, slack_ = 0;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
    Eigen::VectorXd anchor_rhs_;  // contribution of v_slack = 1 to the rhs
    std::vector<int> keep_;       // reduced-row index -> full index in [0, 2n)
    SensitivityMatrix sens_;
};

FlowState solve_flow(const FlowSolver& solver, const Eigen::MatrixXd& p,
                     const Eigen::MatrixXd& q);

struct BranchFlow {
    double p = 0.0, q = 0.0;
};

// Line flow of Eq.-style linearization: denominators R^2 + X^2; a
// zero-impedance branch uses the split-branch reactance substitute.
BranchFlow branch_flow(double theta_from, double theta_to, double v_from, double v_to,
                       const Branch& br);

struct PolygonViolation {
    int side = 0;       // m index of the violated half-plane
    double amount = 0;  // positive violation magnitude
};

// Evaluates p cos(m a) + q sin(m a) <= s_max for m = 0 .. sides-1.
std::vector<PolygonViolation> polygon_violations(double p, double q, const Branch& br);

// Voltage magnitudes when every renewable injection is pinned at its lower
// bound, other injections unchanged. p, q are the scheduled injections for
// one slot; ren_offset(b) = p_ren_b - p_ren_min_b (zero at non-renewable buses).
Eigen::VectorXd worst_case_voltage(const FlowSolver& solver, const Eigen::VectorXd& p,
                                   const Eigen::VectorXd& q, const Eigen::VectorXd& ren_offset);

}  // namespace detrade
