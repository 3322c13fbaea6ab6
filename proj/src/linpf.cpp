#include "detrade/linpf.hpp"

#include <cmath>

namespace detrade {

namespace {

// Series admittance, with the substitute reactance for zero-impedance splits.
void series_admittance(const Branch& br, double& g, double& b) {
    double r = br.resistance, x = br.reactance;
    if (r == 0.0 && x == 0.0) x = kSplitBranchReactance;
    const double d = r * r + x * x;
    g = r / d;
    b = -x / d;
}

}  // namespace

AdmittanceBlocks assemble_lambda(const NetworkModel& network) {
    const int n = network.size();
    AdmittanceBlocks out;
    out.n = n;
    out.B = Eigen::MatrixXd::Zero(n, n);
    out.G = Eigen::MatrixXd::Zero(n, n);

    for (const Branch& br : network.branches) {
        const int r = network.index_of(br.from);
        const int s = network.index_of(br.to);
        double g, b;
        series_admittance(br, g, b);
        out.G(r, s) -= g;
        out.G(s, r) -= g;
        out.B(r, s) -= b;
        out.B(s, r) -= b;
        out.G(r, r) += g;
        out.G(s, s) += g;
        out.B(r, r) += b;
        out.B(s, s) += b;
    }
    out.Bp = out.B;
    out.Gp = out.G;
    for (int r = 0; r < n; ++r) {
        out.B(r, r) += network.buses[r].shunt_b;
        out.G(r, r) += network.buses[r].shunt_g;
    }
    return out;
}

Eigen::MatrixXd AdmittanceBlocks::flow_matrix() const {
    Eigen::MatrixXd m(2 * n, 2 * n);
    m.topLeftCorner(n, n) = -Bp;
    m.topRightCorner(n, n) = Gp;
    m.bottomLeftCorner(n, n) = -Gp;
    m.bottomRightCorner(n, n) = -B;
    return m;
}

double SensitivityMatrix::voltage_shift_per_injection(int inj_bus) const {
    double s = 0.0;
    for (int b = 0; b < n; ++b) s += inv(n + b, inj_bus);
    return s;
}

SensitivityMatrix reduced_inverse(const AdmittanceBlocks& blocks, int slack) {
    const int n = blocks.n;
    const Eigen::MatrixXd full = blocks.flow_matrix();

    std::vector<int> keep;
    keep.reserve(2 * n - 2);
    for (int i = 0; i < 2 * n; ++i)
        if (i != slack && i != n + slack) keep.push_back(i);

    Eigen::MatrixXd red(keep.size(), keep.size());
    for (size_t i = 0; i < keep.size(); ++i)
        for (size_t j = 0; j < keep.size(); ++j) red(i, j) = full(keep[i], keep[j]);

    Eigen::FullPivLU<Eigen::MatrixXd> lu(red);
    if (!lu.isInvertible()) {
        // name the numerically dependent rows for the diagnostic
        const auto rank = lu.rank();
        throw SingularNetworkError(
            "reduced flow operator is singular (rank " + std::to_string(rank) + " of " +
            std::to_string(keep.size()) +
            "); check for islanded buses or all-zero impedance paths");
    }
    Eigen::MatrixXd inv_red = lu.inverse();

    SensitivityMatrix out;
    out.n = n;
    out.slack = slack;
    out.inv = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    for (size_t i = 0; i < keep.size(); ++i)
        for (size_t j = 0; j < keep.size(); ++j) out.inv(keep[i], keep[j]) = inv_red(i, j);
    return out;
}

FlowSolver::FlowSolver(const AdmittanceBlocks& blocks, int slack) : n_(blocks.n), slack_(slack) {
    const Eigen::MatrixXd full = blocks.flow_matrix();
    keep_.reserve(2 * n_ - 2);
    for (int i = 0; i < 2 * n_; ++i)
        if (i != slack_ && i != n_ + slack_) keep_.push_back(i);

    Eigen::MatrixXd red(keep_.size(), keep_.size());
    for (size_t i = 0; i < keep_.size(); ++i)
        for (size_t j = 0; j < keep_.size(); ++j) red(i, j) = full(keep_[i], keep_[j]);

    // v_slack = 1 contributes a constant to every reduced row
    anchor_rhs_.resize(keep_.size());
    for (size_t i = 0; i < keep_.size(); ++i) anchor_rhs_(i) = full(keep_[i], n_ + slack_);

    Eigen::FullPivLU<Eigen::MatrixXd> check(red);
    if (!check.isInvertible())
        throw SingularNetworkError("reduced flow operator is singular; cannot factorize");
    lu_.compute(red);
    sens_ = reduced_inverse(blocks, slack);
}

void FlowSolver::solve(const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                       Eigen::VectorXd& theta, Eigen::VectorXd& vmag) const {
    Eigen::VectorXd rhs(keep_.size());
    for (size_t i = 0; i < keep_.size(); ++i) {
        const int full_idx = keep_[i];
        rhs(i) = (full_idx < n_ ? p(full_idx) : q(full_idx - n_)) - anchor_rhs_(i);
    }
    const Eigen::VectorXd x = lu_.solve(rhs);
    theta = Eigen::VectorXd::Zero(n_);
    vmag = Eigen::VectorXd::Ones(n_);
    for (size_t i = 0; i < keep_.size(); ++i) {
        const int full_idx = keep_[i];
        if (full_idx < n_)
            theta(full_idx) = x(i);
        else
            vmag(full_idx - n_) = x(i);
    }
}

FlowState solve_flow(const FlowSolver& solver, const Eigen::MatrixXd& p,
                     const Eigen::MatrixXd& q) {
    const int slots = static_cast<int>(p.cols());
    FlowState st;
    st.theta.resize(solver.size(), slots);
    st.vmag.resize(solver.size(), slots);
    for (int h = 0; h < slots; ++h) {
        Eigen::VectorXd theta, vmag;
        solver.solve(p.col(h), q.col(h), theta, vmag);
        st.theta.col(h) = theta;
        st.vmag.col(h) = vmag;
    }
    return st;
}

BranchFlow branch_flow(double theta_from, double theta_to, double v_from, double v_to,
                       const Branch& br) {
    double r = br.resistance, x = br.reactance;
    if (r == 0.0 && x == 0.0) x = kSplitBranchReactance;
    const double d = r * r + x * x;
    const double dv = v_from - v_to;
    const double dth = theta_from - theta_to;
    BranchFlow f;
    f.p = (r * dv + x * dth) / d;
    f.q = (x * dv - r * dth) / d;
    return f;
}

std::vector<PolygonViolation> polygon_violations(double p, double q, const Branch& br) {
    std::vector<PolygonViolation> out;
    const int sides = br.polygon_sides();
    for (int m = 0; m < sides; ++m) {
        const double a = m * br.polygon_angle;
        const double lhs = p * std::cos(a) + q * std::sin(a);
        if (lhs > br.s_max) out.push_back({m, lhs - br.s_max});
    }
    return out;
}

Eigen::VectorXd worst_case_voltage(const FlowSolver& solver, const Eigen::VectorXd& p,
                                   const Eigen::VectorXd& q, const Eigen::VectorXd& ren_offset) {
    Eigen::VectorXd theta, vmag;
    solver.solve(p - ren_offset, q, theta, vmag);
    return vmag;
}

}  // namespace detrade
