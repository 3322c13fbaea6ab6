#pragma once

#include <Eigen/Dense>
#include <vector>

#include "detrade/grid.hpp"
#include "detrade/linpf.hpp"

namespace detrade {

// Sparse branch-stencil application of the flow operator: nodal model powers
// and multiplier gradients in O(branches) per slot instead of dense matvecs.
class NetworkOps {
  public:
    explicit NetworkOps(const NetworkModel& net);

    int size() const { return n_; }
    int slack() const { return slack_; }

    // model injections implied by (theta, v): p-rows and q-rows of the flow
    // operator
    void model_injections(const Eigen::VectorXd& theta, const Eigen::VectorXd& vmag,
                          Eigen::VectorXd& p_model, Eigen::VectorXd& q_model) const;

    // gradient of the multiplier terms with respect to (theta, v):
    //   d/dtheta [lam' p_model + gam' q_model] and d/dv of the same
    void multiplier_pullback(const Eigen::VectorXd& lam, const Eigen::VectorXd& gam,
                             Eigen::VectorXd& d_theta, Eigen::VectorXd& d_vmag) const;

    double operator_inf_norm() const;  // infinity norm of the dense operator

  private:
    struct Arc {
        int other;
        double wx, wr;  // X/(R^2+X^2), R/(R^2+X^2)
    };
    int n_ = 0, slack_ = 0;
    std::vector<std::vector<Arc>> adj_;
    Eigen::VectorXd shunt_b_, shunt_g_;
};

// Dykstra alternating projection onto the voltage box intersected with the
// per-branch polygon half-planes; the slack angle/magnitude stay anchored.
class NetworkProjector {
  public:
    explicit NetworkProjector(const NetworkModel& net, double tol = 1e-8, int max_sweeps = 500);

    void project(Eigen::VectorXd& theta, Eigen::VectorXd& vmag) const;

  private:
    struct HalfPlane {
        int coords[4];     // -1 for anchored entries folded into rhs
        double coeff[4];
        double rhs;
        double norm2;
    };
    int n_ = 0, slack_ = 0;
    double tol_;
    int max_sweeps_;
    Eigen::VectorXd v_lo_, v_hi_;
    std::vector<HalfPlane> planes_;
};

// Network variables and balance multipliers, one column per slot.
struct DnoState {
    Eigen::MatrixXd theta, vmag;    // primal network variables
    Eigen::MatrixXd lambda_p, lambda_q;  // multipliers of the balance equalities
    int iteration = 1;
};

DnoState init_dno_state(int buses, int horizon);

// Everything the DNO sees from the agents in one iteration, plus the value
// terms that make the relaxed objective a number.
struct InjectionSnapshot {
    Eigen::MatrixXd p, q;        // net injections per bus/slot (loads negative)
    Eigen::MatrixXd ren_offset;  // p_ren - ren_min per bus/slot, zero elsewhere
    double utility_total = 0.0;  // sum of aggregator utilities at the profiles
    double cost_total = 0.0;     // sum of conventional generation costs
};

struct PhiGradient {
    Eigen::MatrixXd theta, vmag, lambda_p, lambda_q;
};

struct LagrangianEval {
    double value = 0.0;
    PhiGradient grad;
};

// Relaxed objective: utility - cost - shortage risk + multiplier terms. The
// shortage risk enters in its reduced form, linear in the renewable offers
// with the Theorem-style penalty coefficients, which is what makes the
// decentralized fixed point coincide with the centralized optimum.
LagrangianEval lagrangian_value_and_gradient(const NetworkOps& ops, const DnoState& state,
                                             const InjectionSnapshot& inj,
                                             const Eigen::VectorXd& shortage_penalty, int t);

// Projected saddle step: gradient ascent on (theta, v) followed by the
// feasible-set projection, and the residual-driven multiplier update.
void update_phi(DnoState& state, const PhiGradient& grad, double step_primal, double step_dual,
                const NetworkProjector& projector, int slack, int t, int threads);

struct SignalBundle {
    Eigen::MatrixXd price_active;    // per bus/slot
    Eigen::MatrixXd price_reactive;  // per bus/slot (read by generators)
    Eigen::VectorXd shortage_penalty;  // per bus, slot-invariant
};

// Shortage penalties: risk weight times the column sums of the
// voltage-magnitude sensitivity block of the reduced inverse.
Eigen::VectorXd shortage_penalties(const SensitivityMatrix& sens, double risk_weight);

// Exact price identities from the multipliers; the penalty vector is cached.
SignalBundle signals(const DnoState& state, const std::vector<double>& reactive_ratio,
                     const Eigen::VectorXd& shortage_penalty, int t);

}  // namespace detrade
