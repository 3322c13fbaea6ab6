#include "detrade/dno.hpp"

#include <algorithm>
#include <cmath>

#include "detrade/parallel.hpp"

namespace detrade {

NetworkOps::NetworkOps(const NetworkModel& net) : n_(net.size()), slack_(net.slack_index()) {
    adj_.resize(n_);
    shunt_b_.resize(n_);
    shunt_g_.resize(n_);
    for (int b = 0; b < n_; ++b) {
        shunt_b_(b) = net.buses[b].shunt_b;
        shunt_g_(b) = net.buses[b].shunt_g;
    }
    for (const Branch& br : net.branches) {
        double r = br.resistance, x = br.reactance;
        if (r == 0.0 && x == 0.0) x = kSplitBranchReactance;
        const double d = r * r + x * x;
        const int i = net.index_of(br.from), j = net.index_of(br.to);
        adj_[i].push_back({j, x / d, r / d});
        adj_[j].push_back({i, x / d, r / d});
    }
}

void NetworkOps::model_injections(const Eigen::VectorXd& theta, const Eigen::VectorXd& vmag,
                                  Eigen::VectorXd& p_model, Eigen::VectorXd& q_model) const {
    p_model.setZero(n_);
    q_model.setZero(n_);
    for (int b = 0; b < n_; ++b) {
        double p = 0.0, q = 0.0;
        for (const Arc& a : adj_[b]) {
            const double dth = theta(b) - theta(a.other);
            const double dv = vmag(b) - vmag(a.other);
            p += a.wx * dth + a.wr * dv;
            q += a.wx * dv - a.wr * dth;
        }
        p_model(b) = p;
        q_model(b) = q - shunt_b_(b) * vmag(b);
    }
}

void NetworkOps::multiplier_pullback(const Eigen::VectorXd& lam, const Eigen::VectorXd& gam,
                                     Eigen::VectorXd& d_theta, Eigen::VectorXd& d_vmag) const {
    // d/d(theta,v) of lam' p_model(theta,v) + gam' q_model(theta,v), using the
    // symmetry of the branch stencils
    d_theta.setZero(n_);
    d_vmag.setZero(n_);
    for (int b = 0; b < n_; ++b) {
        double dt = 0.0, dv = 0.0;
        for (const Arc& a : adj_[b]) {
            const double dlam = lam(b) - lam(a.other);
            const double dgam = gam(b) - gam(a.other);
            dt += a.wx * dlam - a.wr * dgam;
            dv += a.wr * dlam + a.wx * dgam;
        }
        d_theta(b) = dt;
        d_vmag(b) = dv - shunt_b_(b) * gam(b);
    }
}

double NetworkOps::operator_inf_norm() const {
    double best = 0.0;
    for (int b = 0; b < n_; ++b) {
        double rowp = 0.0, rowq = 0.0;
        for (const Arc& a : adj_[b]) {
            rowp += 2.0 * (a.wx + a.wr);
            rowq += 2.0 * (a.wx + a.wr);
        }
        rowq += std::abs(shunt_b_(b));
        best = std::max({best, rowp, rowq});
    }
    return best;
}

NetworkProjector::NetworkProjector(const NetworkModel& net, double tol, int max_sweeps)
    : n_(net.size()), slack_(net.slack_index()), tol_(tol), max_sweeps_(max_sweeps) {
    v_lo_.resize(n_);
    v_hi_.resize(n_);
    for (int b = 0; b < n_; ++b) {
        v_lo_(b) = net.buses[b].v_min;
        v_hi_(b) = net.buses[b].v_max;
    }

    for (const Branch& br : net.branches) {
        double r = br.resistance, x = br.reactance;
        if (r == 0.0 && x == 0.0) x = kSplitBranchReactance;
        const double d = r * r + x * x;
        const int bi = net.index_of(br.from), bj = net.index_of(br.to);
        const int sides = br.polygon_sides();
        for (int m = 0; m < sides; ++m) {
            const double cm = std::cos(m * br.polygon_angle);
            const double sm = std::sin(m * br.polygon_angle);
            // p cos + q sin as a linear functional of (theta_i, theta_j, v_i, v_j)
            const double ct = (x * cm - r * sm) / d;
            const double cv = (r * cm + x * sm) / d;
            HalfPlane hp{};
            hp.rhs = br.s_max;
            int k = 0;
            auto add = [&](int coord, double coeff, bool anchored, double anchor_value) {
                if (std::abs(coeff) < 1e-300) return;
                if (anchored) {
                    hp.rhs -= coeff * anchor_value;
                } else {
                    hp.coords[k] = coord;
                    hp.coeff[k] = coeff;
                    ++k;
                }
            };
            add(bi, ct, bi == slack_, 0.0);
            add(bj, -ct, bj == slack_, 0.0);
            add(n_ + bi, cv, bi == slack_, 1.0);
            add(n_ + bj, -cv, bj == slack_, 1.0);
            for (; k < 4; ++k) {
                hp.coords[k] = -1;
                hp.coeff[k] = 0.0;
            }
            hp.norm2 = 0.0;
            for (int kk = 0; kk < 4; ++kk) hp.norm2 += hp.coeff[kk] * hp.coeff[kk];
            if (hp.norm2 > 1e-300) planes_.push_back(hp);
        }
    }
}

void NetworkProjector::project(Eigen::VectorXd& theta, Eigen::VectorXd& vmag) const {
    auto coord = [&](int c) -> double& { return c < n_ ? theta(c) : vmag(c - n_); };

    auto apply_box = [&]() {
        theta(slack_) = 0.0;
        for (int b = 0; b < n_; ++b)
            vmag(b) = b == slack_ ? 1.0 : std::clamp(vmag(b), v_lo_(b), v_hi_(b));
    };

    apply_box();
    // quick exit: all half-planes already satisfied
    bool ok = true;
    for (const HalfPlane& hp : planes_) {
        double lhs = 0.0;
        for (int k = 0; k < 4 && hp.coords[k] >= 0; ++k) lhs += hp.coeff[k] * coord(hp.coords[k]);
        if (lhs > hp.rhs + 1e-14) {
            ok = false;
            break;
        }
    }
    if (ok) return;

    // Dykstra over {box} ∪ {half-planes}; corrections per set
    std::vector<std::array<double, 4>> corr(planes_.size(), {0, 0, 0, 0});
    Eigen::VectorXd box_corr_v = Eigen::VectorXd::Zero(n_);

    for (int sweep = 0; sweep < max_sweeps_; ++sweep) {
        double moved = 0.0;

        // box set (v bounds + anchors)
        for (int b = 0; b < n_; ++b) {
            const double y = vmag(b) + box_corr_v(b);
            const double proj = b == slack_ ? 1.0 : std::clamp(y, v_lo_(b), v_hi_(b));
            box_corr_v(b) = y - proj;
            moved = std::max(moved, std::abs(proj - vmag(b)));
            vmag(b) = proj;
        }
        theta(slack_) = 0.0;

        for (size_t i = 0; i < planes_.size(); ++i) {
            const HalfPlane& hp = planes_[i];
            double y[4];
            double lhs = 0.0;
            for (int k = 0; k < 4; ++k) {
                if (hp.coords[k] < 0) {
                    y[k] = 0.0;
                    continue;
                }
                y[k] = coord(hp.coords[k]) + corr[i][k];
                lhs += hp.coeff[k] * y[k];
            }
            const double excess = lhs - hp.rhs;
            const double scale = excess > 0.0 ? excess / hp.norm2 : 0.0;
            for (int k = 0; k < 4; ++k) {
                if (hp.coords[k] < 0) continue;
                const double proj = y[k] - scale * hp.coeff[k];
                corr[i][k] = y[k] - proj;
                moved = std::max(moved, std::abs(proj - coord(hp.coords[k])));
                coord(hp.coords[k]) = proj;
            }
        }
        if (moved <= tol_) break;
    }
    apply_box();
}

DnoState init_dno_state(int buses, int horizon) {
    DnoState st;
    st.theta = Eigen::MatrixXd::Zero(buses, horizon);
    st.vmag = Eigen::MatrixXd::Ones(buses, horizon);
    st.lambda_p = Eigen::MatrixXd::Zero(buses, horizon);
    st.lambda_q = Eigen::MatrixXd::Zero(buses, horizon);
    st.iteration = 1;
    return st;
}

LagrangianEval lagrangian_value_and_gradient(const NetworkOps& ops, const DnoState& state,
                                             const InjectionSnapshot& inj,
                                             const Eigen::VectorXd& shortage_penalty, int t) {
    const int n = ops.size();
    const int horizon = static_cast<int>(state.theta.cols());
    const int slack = ops.slack();

    LagrangianEval ev;
    ev.grad.theta = Eigen::MatrixXd::Zero(n, horizon);
    ev.grad.vmag = Eigen::MatrixXd::Zero(n, horizon);
    ev.grad.lambda_p = Eigen::MatrixXd::Zero(n, horizon);
    ev.grad.lambda_q = Eigen::MatrixXd::Zero(n, horizon);

    double value = inj.utility_total - inj.cost_total;

    for (int h = t; h < horizon; ++h) {
        Eigen::VectorXd p_model, q_model, d_theta, d_vmag;
        ops.model_injections(state.theta.col(h), state.vmag.col(h), p_model, q_model);
        ops.multiplier_pullback(state.lambda_p.col(h), state.lambda_q.col(h), d_theta, d_vmag);
        for (int b = 0; b < n; ++b) {
            if (b == slack) continue;  // slack balance row carries no multiplier
            const double rp = inj.p(b, h) - p_model(b);
            const double rq = inj.q(b, h) - q_model(b);
            value += state.lambda_p(b, h) * rp + state.lambda_q(b, h) * rq;
            value -= shortage_penalty(b) * inj.ren_offset(b, h);
            ev.grad.lambda_p(b, h) = rp;
            ev.grad.lambda_q(b, h) = rq;
            ev.grad.theta(b, h) = -d_theta(b);
            ev.grad.vmag(b, h) = -d_vmag(b);
        }
    }
    ev.value = value;
    return ev;
}

void update_phi(DnoState& state, const PhiGradient& grad, double step_primal, double step_dual,
                const NetworkProjector& projector, int slack, int t, int threads) {
    const int horizon = static_cast<int>(state.theta.cols());
    // primal ascent with projection; multipliers descend (they move along the
    // flow-minus-injection direction), the stable saddle orientation
    parallel_for(horizon - t, threads, [&](std::ptrdiff_t k) {
        const int h = t + static_cast<int>(k);
        Eigen::VectorXd theta = state.theta.col(h) + step_primal * grad.theta.col(h);
        Eigen::VectorXd vmag = state.vmag.col(h) + step_primal * grad.vmag.col(h);
        projector.project(theta, vmag);
        theta(slack) = 0.0;
        vmag(slack) = 1.0;
        state.theta.col(h) = theta;
        state.vmag.col(h) = vmag;
        state.lambda_p.col(h) -= step_dual * grad.lambda_p.col(h);
        state.lambda_q.col(h) -= step_dual * grad.lambda_q.col(h);
        state.lambda_p(slack, h) = 0.0;
        state.lambda_q(slack, h) = 0.0;
    });
    state.iteration += 1;
}

Eigen::VectorXd shortage_penalties(const SensitivityMatrix& sens, double risk_weight) {
    Eigen::VectorXd beta(sens.n);
    for (int j = 0; j < sens.n; ++j)
        beta(j) = risk_weight * sens.voltage_shift_per_injection(j);
    return beta;
}

SignalBundle signals(const DnoState& state, const std::vector<double>& reactive_ratio,
                     const Eigen::VectorXd& shortage_penalty, int t) {
    const int n = static_cast<int>(state.theta.rows());
    const int horizon = static_cast<int>(state.theta.cols());
    SignalBundle sb;
    sb.price_active.setZero(n, horizon);
    sb.price_reactive.setZero(n, horizon);
    sb.shortage_penalty = shortage_penalty;
    for (int h = t; h < horizon; ++h) {
        for (int b = 0; b < n; ++b) {
            sb.price_active(b, h) =
                state.lambda_p(b, h) + state.lambda_q(b, h) * reactive_ratio[b];
            sb.price_reactive(b, h) = state.lambda_q(b, h);
        }
    }
    return sb;
}

}  // namespace detrade
