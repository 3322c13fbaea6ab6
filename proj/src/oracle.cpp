#include "detrade/oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "detrade/aggregator.hpp"
#include "detrade/dno.hpp"
#include "detrade/generator.hpp"
#include "detrade/rng.hpp"

namespace detrade {

namespace {

struct Problem {
    const Scenario* scn = nullptr;
    const WorldView* view = nullptr;
    int n = 0, horizon = 0, t = 0, slack = 0;
    const NetworkOps* ops = nullptr;
    const NetworkProjector* projector = nullptr;
    const FlowSolver* solver = nullptr;
    Eigen::VectorXd beta;              // per bus
    std::vector<ApplianceFeasibleSet> fs;  // per awake item
    std::vector<int> item_bus;             // internal bus index per item
    std::vector<int> gen_bus;              // internal bus index per generator
    Eigen::MatrixXd base_load;             // sleeping estimates, bus x slot
    std::vector<double> ratio;             // reactive ratio per bus
};

struct Vars {
    std::vector<Eigen::ArrayXd> e;
    Eigen::MatrixXd p_conv, q_conv, p_ren;
    Eigen::MatrixXd theta, vmag;
};

Problem make_problem(const Scenario& s, const WorldView& view, const NetworkOps& ops,
                     const NetworkProjector& projector, const FlowSolver& solver) {
    Problem pr;
    pr.scn = &s;
    pr.view = &view;
    pr.n = s.network.size();
    pr.horizon = s.market.horizon;
    pr.t = view.t;
    pr.slack = ops.slack();
    pr.ops = &ops;
    pr.projector = &projector;
    pr.solver = &solver;
    pr.beta = shortage_penalties(solver.sensitivity(), s.market.risk_weight);

    pr.ratio.assign(pr.n, 0.0);
    for (const AggregatorConfig& a : s.aggregators)
        pr.ratio[s.network.index_of(a.bus)] = a.reactive_ratio();

    pr.base_load = Eigen::MatrixXd::Zero(pr.n, pr.horizon);
    for (size_t i = 0; i < s.aggregators.size(); ++i) {
        const int b = s.network.index_of(s.aggregators[i].bus);
        if (static_cast<int>(i) < static_cast<int>(view.sleeping_est.size()))
            for (int h = pr.t; h < pr.horizon; ++h) pr.base_load(b, h) = view.sleeping_est[i](h);
    }

    for (const WorldView::AwakeItem& item : view.awake) {
        const AggregatorConfig& cfg = s.aggregators[item.agg_index];
        const Appliance& app = cfg.appliances[item.appliance_index];
        ApplianceFeasibleSet f = feasible_set(app, item.window, pr.t, item.energy_used, pr.horizon);
        for (int h = pr.t; h < std::min(item.wake_slot, pr.horizon); ++h) {
            f.lo(h) = 0.0;
            f.hi(h) = 0.0;
        }
        if (f.has_band) std::erase_if(f.band_slots, [&](int h) { return h < item.wake_slot; });
        pr.fs.push_back(std::move(f));
        pr.item_bus.push_back(s.network.index_of(item.bus));
    }
    for (const GeneratorConfig& g : view.gen_cfgs)
        pr.gen_bus.push_back(s.network.index_of(g.bus));
    return pr;
}

// injections implied by the decision blocks
void injections(const Problem& pr, const Vars& x, Eigen::MatrixXd& p, Eigen::MatrixXd& q) {
    p = Eigen::MatrixXd::Zero(pr.n, pr.horizon);
    q = Eigen::MatrixXd::Zero(pr.n, pr.horizon);
    Eigen::MatrixXd load = pr.base_load;
    for (size_t it = 0; it < pr.fs.size(); ++it)
        for (int h = pr.t; h < pr.horizon; ++h) load(pr.item_bus[it], h) += x.e[it](h);
    for (size_t i = 0; i < pr.scn->aggregators.size(); ++i) {
        const int b = pr.scn->network.index_of(pr.scn->aggregators[i].bus);
        for (int h = pr.t; h < pr.horizon; ++h) {
            p(b, h) = -load(b, h);
            q(b, h) = -load(b, h) * pr.ratio[b];
        }
    }
    for (size_t j = 0; j < pr.view->gen_cfgs.size(); ++j) {
        const GeneratorConfig& g = pr.view->gen_cfgs[j];
        const int b = pr.gen_bus[j];
        for (int h = pr.t; h < pr.horizon; ++h) {
            p(b, h) = x.p_conv(b, h) + (g.has_renewable() ? x.p_ren(b, h) : 0.0);
            q(b, h) = x.q_conv(b, h);
        }
    }
}

// welfare value (the maximization objective)
double welfare(const Problem& pr, const Vars& x) {
    double f = 0.0;
    for (size_t it = 0; it < pr.fs.size(); ++it) {
        const WorldView::AwakeItem& item = pr.view->awake[it];
        const Appliance& app =
            pr.scn->aggregators[item.agg_index].appliances[item.appliance_index];
        f += utility(app, item.window, x.e[it], pr.t, item.energy_used);
    }
    for (size_t j = 0; j < pr.view->gen_cfgs.size(); ++j) {
        const GeneratorConfig& g = pr.view->gen_cfgs[j];
        const int b = pr.gen_bus[j];
        for (int h = pr.t; h < pr.horizon; ++h) {
            f -= g.cost(x.p_conv(b, h));
            if (g.has_renewable()) f -= pr.beta(b) * (x.p_ren(b, h) - g.ren_min(h));
        }
    }
    return f;
}

// balance residuals c = injections - model on non-slack rows
void residuals(const Problem& pr, const Vars& x, Eigen::MatrixXd& cp, Eigen::MatrixXd& cq) {
    Eigen::MatrixXd p, q;
    injections(pr, x, p, q);
    cp = Eigen::MatrixXd::Zero(pr.n, pr.horizon);
    cq = Eigen::MatrixXd::Zero(pr.n, pr.horizon);
    for (int h = pr.t; h < pr.horizon; ++h) {
        Eigen::VectorXd pm, qm;
        pr.ops->model_injections(x.theta.col(h), x.vmag.col(h), pm, qm);
        for (int b = 0; b < pr.n; ++b) {
            if (b == pr.slack) continue;
            cp(b, h) = p(b, h) - pm(b);
            cq(b, h) = q(b, h) - qm(b);
        }
    }
}

// augmented-Lagrangian value in minimization form
double al_value(const Problem& pr, const Vars& x, const Eigen::MatrixXd& mu_p,
                const Eigen::MatrixXd& mu_q, double rho) {
    Eigen::MatrixXd cp, cq;
    residuals(pr, x, cp, cq);
    double v = -welfare(pr, x);
    for (int h = pr.t; h < pr.horizon; ++h)
        for (int b = 0; b < pr.n; ++b) {
            if (b == pr.slack) continue;
            v += mu_p(b, h) * cp(b, h) + mu_q(b, h) * cq(b, h);
            v += 0.5 * rho * (cp(b, h) * cp(b, h) + cq(b, h) * cq(b, h));
        }
    return v;
}

struct Gradient {
    std::vector<Eigen::ArrayXd> e;
    Eigen::MatrixXd p_conv, q_conv, p_ren, theta, vmag;
};

Gradient al_gradient(const Problem& pr, const Vars& x, const Eigen::MatrixXd& mu_p,
                     const Eigen::MatrixXd& mu_q, double rho) {
    Eigen::MatrixXd cp, cq;
    residuals(pr, x, cp, cq);
    const Eigen::MatrixXd wp = mu_p + rho * cp;
    const Eigen::MatrixXd wq = mu_q + rho * cq;

    Gradient g;
    g.p_conv = Eigen::MatrixXd::Zero(pr.n, pr.horizon);
    g.q_conv = Eigen::MatrixXd::Zero(pr.n, pr.horizon);
    g.p_ren = Eigen::MatrixXd::Zero(pr.n, pr.horizon);
    g.theta = Eigen::MatrixXd::Zero(pr.n, pr.horizon);
    g.vmag = Eigen::MatrixXd::Zero(pr.n, pr.horizon);

    for (size_t it = 0; it < pr.fs.size(); ++it) {
        const WorldView::AwakeItem& item = pr.view->awake[it];
        const Appliance& app =
            pr.scn->aggregators[item.agg_index].appliances[item.appliance_index];
        Eigen::ArrayXd du =
            utility_gradient(app, item.window, x.e[it], pr.t, item.energy_used);
        Eigen::ArrayXd ge = Eigen::ArrayXd::Zero(pr.horizon);
        const int b = pr.item_bus[it];
        for (int h = pr.t; h < pr.horizon; ++h)
            ge(h) = -du(h) - wp(b, h) - pr.ratio[b] * wq(b, h);
        g.e.push_back(std::move(ge));
    }
    for (size_t j = 0; j < pr.view->gen_cfgs.size(); ++j) {
        const GeneratorConfig& gen = pr.view->gen_cfgs[j];
        const int b = pr.gen_bus[j];
        for (int h = pr.t; h < pr.horizon; ++h) {
            g.p_conv(b, h) = gen.marginal_cost(x.p_conv(b, h)) + wp(b, h);
            g.q_conv(b, h) = wq(b, h);
            if (gen.has_renewable()) g.p_ren(b, h) = pr.beta(b) + wp(b, h);
        }
    }
    for (int h = pr.t; h < pr.horizon; ++h) {
        Eigen::VectorXd dth, dv;
        pr.ops->multiplier_pullback(wp.col(h), wq.col(h), dth, dv);
        // c = inj - model, so the model pullback enters with a minus; and the
        // minimization form flips it back
        g.theta.col(h) = dth;
        g.vmag.col(h) = dv;
    }
    g.theta.row(pr.slack).setZero();
    g.vmag.row(pr.slack).setZero();
    return g;
}

void project_vars(const Problem& pr, Vars& x) {
    for (size_t it = 0; it < pr.fs.size(); ++it) project_feasible(pr.fs[it], x.e[it]);
    for (size_t j = 0; j < pr.view->gen_cfgs.size(); ++j) {
        const GeneratorConfig& g = pr.view->gen_cfgs[j];
        const int b = pr.gen_bus[j];
        for (int h = pr.t; h < pr.horizon; ++h) {
            x.p_conv(b, h) = std::clamp(x.p_conv(b, h), g.p_conv_min, g.p_conv_max);
            x.q_conv(b, h) = std::clamp(x.q_conv(b, h), g.q_conv_min, g.q_conv_max);
            if (g.has_renewable())
                x.p_ren(b, h) = std::clamp(x.p_ren(b, h), g.ren_min(h), g.ren_max(h));
        }
    }
    for (int h = pr.t; h < pr.horizon; ++h) {
        Eigen::VectorXd th = x.theta.col(h), v = x.vmag.col(h);
        pr.projector->project(th, v);
        th(pr.slack) = 0.0;
        v(pr.slack) = 1.0;
        x.theta.col(h) = th;
        x.vmag.col(h) = v;
    }
}

Vars axpy(const Problem& pr, const Vars& x, double a, const Gradient& g) {
    Vars y = x;
    for (size_t it = 0; it < x.e.size(); ++it) y.e[it] += a * g.e[it];
    y.p_conv += a * g.p_conv;
    y.q_conv += a * g.q_conv;
    y.p_ren += a * g.p_ren;
    y.theta += a * g.theta;
    y.vmag += a * g.vmag;
    project_vars(pr, y);
    return y;
}

double diff_norm_inf(const Vars& a, const Vars& b) {
    double d = 0.0;
    for (size_t it = 0; it < a.e.size(); ++it)
        d = std::max(d, (a.e[it] - b.e[it]).abs().maxCoeff());
    auto upd = [&](const Eigen::MatrixXd& m1, const Eigen::MatrixXd& m2) {
        d = std::max(d, (m1 - m2).cwiseAbs().maxCoeff());
    };
    upd(a.p_conv, b.p_conv);
    upd(a.q_conv, b.q_conv);
    upd(a.p_ren, b.p_ren);
    upd(a.theta, b.theta);
    upd(a.vmag, b.vmag);
    return d;
}

double dot_diff(const Vars& a, const Vars& b, const Gradient& g) {
    double s = 0.0;
    for (size_t it = 0; it < a.e.size(); ++it) s += ((a.e[it] - b.e[it]) * g.e[it]).sum();
    s += ((a.p_conv - b.p_conv).array() * g.p_conv.array()).sum();
    s += ((a.q_conv - b.q_conv).array() * g.q_conv.array()).sum();
    s += ((a.p_ren - b.p_ren).array() * g.p_ren.array()).sum();
    s += ((a.theta - b.theta).array() * g.theta.array()).sum();
    s += ((a.vmag - b.vmag).array() * g.vmag.array()).sum();
    return s;
}

double dist2(const Vars& a, const Vars& b) {
    double s = 0.0;
    for (size_t it = 0; it < a.e.size(); ++it) s += (a.e[it] - b.e[it]).square().sum();
    s += (a.p_conv - b.p_conv).squaredNorm();
    s += (a.q_conv - b.q_conv).squaredNorm();
    s += (a.p_ren - b.p_ren).squaredNorm();
    s += (a.theta - b.theta).squaredNorm();
    s += (a.vmag - b.vmag).squaredNorm();
    return s;
}

Vars start_point(const Problem& pr, uint64_t seed) {
    Vars x;
    x.p_conv = Eigen::MatrixXd::Zero(pr.n, pr.horizon);
    x.q_conv = Eigen::MatrixXd::Zero(pr.n, pr.horizon);
    x.p_ren = Eigen::MatrixXd::Zero(pr.n, pr.horizon);
    x.theta = Eigen::MatrixXd::Zero(pr.n, pr.horizon);
    x.vmag = Eigen::MatrixXd::Ones(pr.n, pr.horizon);

    auto mix01 = [&](const char* what, int a, int b) {
        return seed == 0 ? 0.5
                         : rng::uniform01(rng::key(seed, rng::tag_of(what), uint64_t(a),
                                                   uint64_t(b)));
    };
    for (size_t it = 0; it < pr.fs.size(); ++it) {
        Eigen::ArrayXd e = Eigen::ArrayXd::Zero(pr.horizon);
        for (int h = pr.t; h < pr.horizon; ++h) {
            const double u = mix01("oracle-e", static_cast<int>(it), h);
            e(h) = pr.fs[it].lo(h) + u * (pr.fs[it].hi(h) - pr.fs[it].lo(h));
        }
        project_feasible(pr.fs[it], e);
        x.e.push_back(std::move(e));
    }
    for (size_t j = 0; j < pr.view->gen_cfgs.size(); ++j) {
        const GeneratorConfig& g = pr.view->gen_cfgs[j];
        const int b = pr.gen_bus[j];
        for (int h = pr.t; h < pr.horizon; ++h) {
            x.p_conv(b, h) =
                g.p_conv_min + mix01("oracle-p", b, h) * (g.p_conv_max - g.p_conv_min);
            x.q_conv(b, h) =
                g.q_conv_min + mix01("oracle-q", b, h) * (g.q_conv_max - g.q_conv_min);
            if (g.has_renewable())
                x.p_ren(b, h) = g.ren_min(h) + mix01("oracle-r", b, h) * (g.ren_max(h) - g.ren_min(h));
        }
    }
    return x;
}

void check_interior_point(const Problem& pr) {
    for (int b = 0; b < pr.n; ++b) {
        if (b == pr.slack) continue;
        const Bus& bus = pr.scn->network.buses[b];
        if (bus.v_min >= 1.0 || bus.v_max <= 1.0)
            throw InfeasibleScenarioError(
                "no interior point: flat voltage is outside the bounds of bus " +
                std::to_string(bus.id));
    }
    // appliance sets checked by construction (feasible_set throws when empty)
}

}  // namespace

WorldView initial_view(const Scenario& s, uint64_t seed) {
    WorldView view;
    view.t = 0;
    view.gen_cfgs = s.generators;
    const int H = s.market.horizon;
    std::vector<std::vector<int>> asleep(s.aggregators.size());
    for (size_t i = 0; i < s.aggregators.size(); ++i) {
        const AggregatorConfig& cfg = s.aggregators[i];
        for (size_t idx = 0; idx < cfg.appliances.size(); ++idx) {
            const Appliance& app = cfg.appliances[idx];
            const double pw = wake_probability_now(app, 0);
            const double u = rng::uniform01(
                rng::key(seed, rng::tag_of("wake"), uint64_t(cfg.bus), uint64_t(idx), uint64_t(0)));
            if (u < pw) {
                WorldView::AwakeItem item;
                item.agg_index = static_cast<int>(i);
                item.bus = cfg.bus;
                item.appliance_index = static_cast<int>(idx);
                item.wake_slot = 0;
                item.window = app.materialize_window(0, H);
                view.awake.push_back(std::move(item));
            } else {
                asleep[i].push_back(static_cast<int>(idx));
            }
        }
    }
    for (size_t i = 0; i < s.aggregators.size(); ++i) {
        Eigen::ArrayXd est = Eigen::ArrayXd::Zero(H);
        for (int h = 1; h < H; ++h)
            est(h) = sleeping_load_estimate(s.aggregators[i].appliances, asleep[i], h, 0);
        view.sleeping_est.push_back(std::move(est));
    }
    return view;
}

CentralSolution solve_central(const Scenario& s, const WorldView& view,
                              const CentralOptions& opts) {
    NetworkOps ops(s.network);
    NetworkProjector projector(s.network);
    AdmittanceBlocks blocks = assemble_lambda(s.network);
    FlowSolver solver(blocks, s.network.slack_index());
    Problem pr = make_problem(s, view, ops, projector, solver);
    check_interior_point(pr);

    Vars x = start_point(pr, opts.start_seed);
    project_vars(pr, x);

    Eigen::MatrixXd mu_p = Eigen::MatrixXd::Zero(pr.n, pr.horizon);
    Eigen::MatrixXd mu_q = Eigen::MatrixXd::Zero(pr.n, pr.horizon);
    double rho = opts.initial_penalty;
    double prev_cnorm = std::numeric_limits<double>::infinity();

    CentralSolution sol;
    int outer = 0;
    for (outer = 1; outer <= opts.max_outer; ++outer) {
        // inner: projected gradient with backtracking on the AL
        double eta = 1.0 / (1.0 + rho * ops.operator_inf_norm());
        double value = al_value(pr, x, mu_p, mu_q, rho);
        const double inner_tol =
            std::max(opts.tol * 0.01, 1e-10 * (1.0 + std::abs(value)));
        bool stationary = false;
        for (int it = 0; it < opts.max_inner && !stationary; ++it) {
            const Gradient g = al_gradient(pr, x, mu_p, mu_q, rho);

            // exact network block step: with the agent blocks frozen, the
            // unconstrained (theta, v) minimizer solves model = inj + mu/rho
            if (it % 10 == 0) {
                Vars cand = x;
                Eigen::MatrixXd p, q;
                injections(pr, cand, p, q);
                for (int h = pr.t; h < pr.horizon; ++h) {
                    Eigen::VectorXd target_p = p.col(h) + mu_p.col(h) / rho;
                    Eigen::VectorXd target_q = q.col(h) + mu_q.col(h) / rho;
                    Eigen::VectorXd th, v;
                    pr.solver->solve(target_p, target_q, th, v);
                    cand.theta.col(h) = th;
                    cand.vmag.col(h) = v;
                }
                project_vars(pr, cand);
                const double cv = al_value(pr, cand, mu_p, mu_q, rho);
                if (cv < value) {
                    x = cand;
                    value = cv;
                    continue;
                }
            }

            // backtracking projected step
            bool moved = false;
            for (int bt = 0; bt < 60; ++bt) {
                Vars cand = axpy(pr, x, -eta, g);
                const double cv = al_value(pr, cand, mu_p, mu_q, rho);
                const double lin = dot_diff(cand, x, g);
                const double quad = dist2(cand, x) / (2.0 * eta);
                if (cv <= value + lin + quad + 1e-14 * (1.0 + std::abs(value))) {
                    const double step_inf = diff_norm_inf(cand, x);
                    x = cand;
                    value = cv;
                    moved = true;
                    stationary = step_inf / eta <= inner_tol;
                    break;
                }
                eta *= 0.5;
            }
            if (!moved) break;  // step collapsed; inner solve is as tight as it gets
            eta *= 1.8;
        }

        Eigen::MatrixXd cp, cq;
        residuals(pr, x, cp, cq);
        double cnorm = 0.0;
        for (int h = pr.t; h < pr.horizon; ++h)
            for (int b = 0; b < pr.n; ++b)
                cnorm = std::max({cnorm, std::abs(cp(b, h)), std::abs(cq(b, h))});

        mu_p += rho * cp;
        mu_q += rho * cq;
        mu_p.row(pr.slack).setZero();
        mu_q.row(pr.slack).setZero();

        if (cnorm <= opts.balance_tol) break;
        if (cnorm > 0.25 * prev_cnorm) rho *= 2.0;
        prev_cnorm = cnorm;
    }

    sol.appliance_profiles = x.e;
    sol.p_conv = x.p_conv;
    sol.q_conv = x.q_conv;
    sol.p_ren = x.p_ren;
    sol.theta = x.theta;
    sol.vmag = x.vmag;
    sol.lambda_p = -mu_p;  // multipliers in maximization sign convention
    sol.lambda_q = -mu_q;
    sol.objective = welfare(pr, x);
    sol.outer_iterations = outer;
    sol.confidence = Eigen::VectorXd::Zero(pr.n);
    for (size_t j = 0; j < view.gen_cfgs.size(); ++j) {
        const GeneratorConfig& g = view.gen_cfgs[j];
        if (!g.has_renewable()) continue;
        const int b = pr.gen_bus[j];
        Eigen::ArrayXd pren = x.p_ren.row(b).transpose().array();
        sol.confidence(b) = uncertainty_budget_used(g, pren, pr.t);
    }

    Eigen::MatrixXd cp, cq;
    residuals(pr, x, cp, cq);
    sol.balance_residual = 0.0;
    for (int h = pr.t; h < pr.horizon; ++h)
        for (int b = 0; b < pr.n; ++b)
            sol.balance_residual =
                std::max({sol.balance_residual, std::abs(cp(b, h)), std::abs(cq(b, h))});

    EquilibriumCandidate cand;
    cand.theta = sol.theta;
    cand.vmag = sol.vmag;
    cand.lambda_p = sol.lambda_p;
    cand.lambda_q = sol.lambda_q;
    cand.appliance_profiles = sol.appliance_profiles;
    cand.p_conv = sol.p_conv;
    cand.q_conv = sol.q_conv;
    cand.p_ren = sol.p_ren;
    sol.kkt_residual = kkt_check(s, view, cand).max_residual();
    sol.converged = sol.kkt_residual <= opts.tol * 10.0 && sol.balance_residual <= opts.balance_tol;
    return sol;
}

BruteForceResult brute_force(const Scenario& s, const WorldView& view, double resolution,
                             std::size_t max_points) {
    NetworkOps ops(s.network);
    NetworkProjector projector(s.network);
    AdmittanceBlocks blocks = assemble_lambda(s.network);
    FlowSolver solver(blocks, s.network.slack_index());
    Problem pr = make_problem(s, view, ops, projector, solver);

    struct Coord {
        int kind;  // 0=e, 1=p_conv, 2=q_conv, 3=p_ren
        int item;  // awake item or generator index
        int slot;
        double lo;
        int count;
    };
    std::vector<Coord> coords;
    auto add_range = [&](int kind, int item, int slot, double lo, double hi) {
        if (hi - lo < 1e-15) {
            coords.push_back({kind, item, slot, lo, 1});
            return;
        }
        const int count = static_cast<int>(std::floor((hi - lo) / resolution + 1e-9)) + 1;
        coords.push_back({kind, item, slot, lo, count});
    };
    for (size_t it = 0; it < pr.fs.size(); ++it)
        for (int h = pr.t; h < pr.horizon; ++h) {
            if (pr.fs[it].lo(h) == 0.0 && pr.fs[it].hi(h) == 0.0) continue;  // pinned off
            add_range(0, static_cast<int>(it), h, pr.fs[it].lo(h), pr.fs[it].hi(h));
        }
    for (size_t j = 0; j < pr.view->gen_cfgs.size(); ++j) {
        const GeneratorConfig& g = pr.view->gen_cfgs[j];
        for (int h = pr.t; h < pr.horizon; ++h) {
            add_range(1, static_cast<int>(j), h, g.p_conv_min, g.p_conv_max);
            add_range(2, static_cast<int>(j), h, g.q_conv_min, g.q_conv_max);
            if (g.has_renewable()) add_range(3, static_cast<int>(j), h, g.ren_min(h), g.ren_max(h));
        }
    }

    std::size_t total = 1;
    for (const Coord& c : coords) {
        if (c.count <= 0) throw std::runtime_error("brute_force: empty coordinate range");
        if (total > max_points / static_cast<std::size_t>(c.count))
            throw std::runtime_error("brute_force: grid exceeds the size cap");
        total *= static_cast<std::size_t>(c.count);
    }

    Vars x = start_point(pr, 0);
    BruteForceResult best;
    best.objective = -std::numeric_limits<double>::infinity();

    std::vector<int> odo(coords.size(), 0);
    auto apply = [&]() {
        for (size_t c = 0; c < coords.size(); ++c) {
            const Coord& co = coords[c];
            double val = co.lo + odo[c] * resolution;
            switch (co.kind) {
                case 0: x.e[co.item](co.slot) = val; break;
                case 1: x.p_conv(pr.gen_bus[co.item], co.slot) = val; break;
                case 2: x.q_conv(pr.gen_bus[co.item], co.slot) = val; break;
                case 3: x.p_ren(pr.gen_bus[co.item], co.slot) = val; break;
            }
        }
    };

    for (std::size_t point = 0; point < total; ++point) {
        apply();

        bool ok = true;
        for (size_t it = 0; it < pr.fs.size() && ok; ++it) {
            if (!pr.fs[it].has_band) continue;
            double sum = 0.0;
            for (int h : pr.fs[it].band_slots) sum += x.e[it](h);
            ok = sum >= pr.fs[it].band_lo - 1e-9 && sum <= pr.fs[it].band_hi + 1e-9;
        }
        if (ok) {
            Eigen::MatrixXd p, q;
            injections(pr, x, p, q);
            for (int h = pr.t; h < pr.horizon && ok; ++h) {
                Eigen::VectorXd th, v;
                pr.solver->solve(p.col(h), q.col(h), th, v);
                for (int b = 0; b < pr.n && ok; ++b) {
                    const Bus& bus = s.network.buses[b];
                    if (b != pr.slack &&
                        (v(b) < bus.v_min - 1e-9 || v(b) > bus.v_max + 1e-9))
                        ok = false;
                }
                for (const Branch& br : s.network.branches) {
                    if (!ok) break;
                    const int bi = s.network.index_of(br.from), bj = s.network.index_of(br.to);
                    const BranchFlow f = branch_flow(th(bi), th(bj), v(bi), v(bj), br);
                    for (const PolygonViolation& viol : polygon_violations(f.p, f.q, br))
                        if (viol.amount > 1e-9) {
                            ok = false;
                            break;
                        }
                }
            }
            if (ok) {
                const double obj = welfare(pr, x);
                if (obj > best.objective) {
                    best.objective = obj;
                    best.feasible_point_found = true;
                    best.appliance_profiles = x.e;
                    best.p_conv = x.p_conv;
                    best.q_conv = x.q_conv;
                    best.p_ren = x.p_ren;
                }
            }
        }

        // odometer
        for (size_t c = 0; c < coords.size(); ++c) {
            if (++odo[c] < coords[c].count) break;
            odo[c] = 0;
        }
    }
    return best;
}

KktReport kkt_check(const Scenario& s, const WorldView& view, const EquilibriumCandidate& cand) {
    NetworkOps ops(s.network);
    NetworkProjector projector(s.network);
    AdmittanceBlocks blocks = assemble_lambda(s.network);
    FlowSolver solver(blocks, s.network.slack_index());
    Problem pr = make_problem(s, view, ops, projector, solver);

    KktReport rep;

    // prices implied by the candidate multipliers
    Eigen::MatrixXd price = Eigen::MatrixXd::Zero(pr.n, pr.horizon);
    for (int b = 0; b < pr.n; ++b)
        for (int h = pr.t; h < pr.horizon; ++h)
            price(b, h) = cand.lambda_p(b, h) + cand.lambda_q(b, h) * pr.ratio[b];

    // appliance blocks
    for (size_t it = 0; it < pr.fs.size(); ++it) {
        const WorldView::AwakeItem& item = pr.view->awake[it];
        const Appliance& app =
            s.aggregators[item.agg_index].appliances[item.appliance_index];
        const Eigen::ArrayXd& e = cand.appliance_profiles[it];
        Eigen::ArrayXd g = utility_gradient(app, item.window, e, pr.t, item.energy_used);
        const int b = pr.item_bus[it];
        for (int h = pr.t; h < pr.horizon; ++h) g(h) -= price(b, h);
        Eigen::ArrayXd probe = e + g;
        project_feasible(pr.fs[it], probe);
        double gap = 0.0, infeas = 0.0;
        for (int h = pr.t; h < pr.horizon; ++h) {
            gap = std::max(gap, std::abs(probe(h) - e(h)));
            infeas = std::max({infeas, pr.fs[it].lo(h) - e(h), e(h) - pr.fs[it].hi(h)});
        }
        if (pr.fs[it].has_band) {
            double sum = 0.0;
            for (int h : pr.fs[it].band_slots) sum += e(h);
            infeas = std::max({infeas, pr.fs[it].band_lo - sum, sum - pr.fs[it].band_hi});
        }
        if (gap > rep.appliance_stationarity) {
            rep.appliance_stationarity = gap;
            rep.worst_appliance_bus = s.aggregators[item.agg_index].bus;
        }
        rep.decision_feasibility = std::max(rep.decision_feasibility, infeas);
    }

    // generator blocks
    for (size_t j = 0; j < view.gen_cfgs.size(); ++j) {
        const GeneratorConfig& g = view.gen_cfgs[j];
        const int b = pr.gen_bus[j];
        double gap = 0.0;
        for (int h = pr.t; h < pr.horizon; ++h) {
            const double rho_j = cand.lambda_p(b, h);
            const double gp = rho_j - g.marginal_cost(cand.p_conv(b, h));
            gap = std::max(gap, std::abs(cand.p_conv(b, h) -
                                         std::clamp(cand.p_conv(b, h) + gp, g.p_conv_min,
                                                    g.p_conv_max)));
            const double gq = cand.lambda_q(b, h);
            gap = std::max(gap, std::abs(cand.q_conv(b, h) -
                                         std::clamp(cand.q_conv(b, h) + gq, g.q_conv_min,
                                                    g.q_conv_max)));
            if (g.has_renewable()) {
                const double gr = rho_j - pr.beta(b);
                gap = std::max(gap, std::abs(cand.p_ren(b, h) -
                                             std::clamp(cand.p_ren(b, h) + gr, g.ren_min(h),
                                                        g.ren_max(h))));
            }
        }
        if (gap > rep.generator_stationarity) {
            rep.generator_stationarity = gap;
            rep.worst_generator_bus = g.bus;
        }
    }

    // network block: primal fixed-point gap and balance residuals
    Vars x;
    x.e = cand.appliance_profiles;
    x.p_conv = cand.p_conv;
    x.q_conv = cand.q_conv;
    x.p_ren = cand.p_ren;
    x.theta = cand.theta;
    x.vmag = cand.vmag;
    Eigen::MatrixXd cp, cq;
    residuals(pr, x, cp, cq);
    for (int h = pr.t; h < pr.horizon; ++h)
        for (int b = 0; b < pr.n; ++b)
            rep.balance_residual =
                std::max({rep.balance_residual, std::abs(cp(b, h)), std::abs(cq(b, h))});

    const double tau = 1.0 / (1.0 + ops.operator_inf_norm());
    for (int h = pr.t; h < pr.horizon; ++h) {
        Eigen::VectorXd dth, dv;
        ops.multiplier_pullback(cand.lambda_p.col(h), cand.lambda_q.col(h), dth, dv);
        Eigen::VectorXd th = cand.theta.col(h) - tau * dth;  // ascent on L: grad = -pullback
        Eigen::VectorXd v = cand.vmag.col(h) - tau * dv;
        projector.project(th, v);
        for (int b = 0; b < pr.n; ++b) {
            if (b == pr.slack) continue;
            rep.network_stationarity =
                std::max({rep.network_stationarity,
                          std::abs(th(b) - cand.theta(b, h)) / tau,
                          std::abs(v(b) - cand.vmag(b, h)) / tau});
        }
    }
    return rep;
}

SimulationResult oracle_run(const Scenario& s, const RunOptions& opts,
                            const CentralOptions& copts) {
    const int n = s.network.size(), H = s.market.horizon;
    const uint64_t seed = opts.seed.value_or(s.market.seed);

    AdmittanceBlocks blocks = assemble_lambda(s.network);
    FlowSolver solver(blocks, s.network.slack_index());
    const Eigen::VectorXd beta = shortage_penalties(solver.sensitivity(), s.market.risk_weight);

    std::vector<AggregatorState> states;
    for (const AggregatorConfig& a : s.aggregators) states.push_back(init_aggregator_state(a));

    SimulationResult result;
    result.load_p = Eigen::MatrixXd::Zero(n, H);
    result.load_q = Eigen::MatrixXd::Zero(n, H);
    result.gen_p_conv = Eigen::MatrixXd::Zero(n, H);
    result.gen_q_conv = Eigen::MatrixXd::Zero(n, H);
    result.gen_p_ren = Eigen::MatrixXd::Zero(n, H);
    result.price_active = Eigen::MatrixXd::Zero(n, H);
    result.price_reactive = Eigen::MatrixXd::Zero(n, H);
    result.shortage_penalty = beta;
    result.slot_profit_opt.resize(H);
    result.slot_profit_bench.resize(H);

    const auto start = std::chrono::steady_clock::now();
    for (int t = 0; t < H; ++t) {
        // same world randomness as a market run with this seed
        for (size_t i = 0; i < s.aggregators.size(); ++i) {
            const AggregatorConfig& cfg = s.aggregators[i];
            std::vector<int> events;
            for (int idx : states[i].asleep) {
                const double pw = wake_probability_now(cfg.appliances[idx], t);
                const double u = rng::uniform01(rng::key(seed, rng::tag_of("wake"),
                                                         uint64_t(cfg.bus), uint64_t(idx),
                                                         uint64_t(t)));
                if (u < pw) {
                    events.push_back(idx);
                    result.wake_events.push_back({t + 1, cfg.bus, cfg.appliances[idx].id});
                }
            }
            wake_step(states[i], cfg, t, events, H);
        }

        WorldView view;
        view.t = t;
        view.gen_cfgs = s.generators;
        for (size_t i = 0; i < s.aggregators.size(); ++i) {
            for (const AwakeAppliance& aa : states[i].active) {
                WorldView::AwakeItem item;
                item.agg_index = static_cast<int>(i);
                item.bus = s.aggregators[i].bus;
                item.appliance_index = aa.index;
                item.wake_slot = aa.wake_slot;
                item.window = aa.window;
                item.energy_used = aa.energy_used;
                view.awake.push_back(std::move(item));
            }
            Eigen::ArrayXd est = Eigen::ArrayXd::Zero(H);
            for (int h = t + 1; h < H; ++h)
                est(h) = sleeping_load_estimate(s.aggregators[i].appliances, states[i].asleep, h, t);
            view.sleeping_est.push_back(std::move(est));
        }

        CentralSolution sol = solve_central(s, view, copts);

        SlotSummary sum;
        sum.slot = t + 1;
        sum.iterations = sol.outer_iterations;
        sum.converged = sol.converged;
        sum.max_residual = sol.balance_residual;
        result.slots.push_back(sum);

        // commit slot t and push profiles back into the rolling state
        size_t item = 0;
        for (size_t i = 0; i < s.aggregators.size(); ++i) {
            const int b = s.network.index_of(s.aggregators[i].bus);
            double load = 0.0;
            for (AwakeAppliance& aa : states[i].active) {
                aa.profile = sol.appliance_profiles[item++];
                load += aa.profile(t);
                if (std::find(aa.window.begin(), aa.window.end(), t) != aa.window.end())
                    aa.energy_used += aa.profile(t);
            }
            result.load_p(b, t) = load;
            result.load_q(b, t) = load * s.aggregators[i].reactive_ratio();
        }
        for (size_t j = 0; j < s.generators.size(); ++j) {
            const int b = s.network.index_of(s.generators[j].bus);
            result.gen_p_conv(b, t) = sol.p_conv(b, t);
            result.gen_q_conv(b, t) = sol.q_conv(b, t);
            result.gen_p_ren(b, t) = sol.p_ren(b, t);
        }
        for (int b = 0; b < n; ++b) {
            double ratio = 0.0;
            if (const AggregatorConfig* a = s.aggregator_at(s.network.buses[b].id))
                ratio = a->reactive_ratio();
            result.price_active(b, t) = sol.lambda_p(b, t) + sol.lambda_q(b, t) * ratio;
            result.price_reactive(b, t) = sol.lambda_q(b, t);
        }
    }

    // day-level reports, same shape as market runs
    for (size_t i = 0; i < s.aggregators.size(); ++i) {
        const AggregatorConfig& cfg = s.aggregators[i];
        const int b = s.network.index_of(cfg.bus);
        AggregatorReport rep;
        rep.bus = cfg.bus;
        auto account = [&](const AwakeAppliance& aa) {
            rep.utility += utility(cfg.appliances[aa.index], aa.window, aa.profile, 0, 0.0);
        };
        for (const AwakeAppliance& aa : states[i].active) account(aa);
        for (const AwakeAppliance& aa : states[i].retired) account(aa);
        for (int t = 0; t < H; ++t) {
            rep.payment += result.load_p(b, t) * result.price_active(b, t);
            rep.peak_load = std::max(rep.peak_load, result.load_p(b, t));
        }
        rep.profit = rep.utility - rep.payment;
        result.aggregators.push_back(rep);
    }
    Eigen::ArrayXd total_gen = Eigen::ArrayXd::Zero(H);
    for (size_t j = 0; j < s.generators.size(); ++j) {
        const GeneratorConfig& cfg = s.generators[j];
        const int b = s.network.index_of(cfg.bus);
        GeneratorReport rep;
        rep.bus = cfg.bus;
        Eigen::ArrayXd prof(H);
        for (int t = 0; t < H; ++t) {
            const double p = result.gen_p_conv(b, t) + result.gen_p_ren(b, t);
            prof(t) = p;
            total_gen(t) += p;
            rep.revenue += p * result.price_active(b, t) +
                           result.gen_q_conv(b, t) * result.price_reactive(b, t);
            rep.cost += cfg.cost(result.gen_p_conv(b, t));
            if (cfg.has_renewable())
                rep.shortage += beta(b) * (result.gen_p_ren(b, t) - cfg.ren_min(t));
        }
        rep.profit = rep.revenue - rep.cost - rep.shortage;
        rep.par = peak_to_average(prof);
        rep.peak = prof.maxCoeff();
        result.generators.push_back(rep);
    }
    result.par_aggregate = peak_to_average(total_gen);
    double welfare_total = 0.0;
    for (const auto& rep : result.aggregators) welfare_total += rep.utility;
    for (const auto& rep : result.generators) welfare_total -= rep.cost + rep.shortage;
    result.welfare = welfare_total;
    result.all_converged = true;
    for (const SlotSummary& sum : result.slots) result.all_converged &= sum.converged;
    result.wall_ms_total =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
            .count();
    return result;
}

}  // namespace detrade
