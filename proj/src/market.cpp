#include "detrade/market.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "detrade/parallel.hpp"
#include "detrade/rng.hpp"

namespace detrade {

RunMode run_mode_from_name(const std::string& name) {
    if (name == "uncertainty") return RunMode::uncertainty;
    if (name == "complete") return RunMode::complete_info;
    if (name == "benchmark") return RunMode::benchmark;
    throw std::runtime_error("unknown mode: " + name);
}

std::string run_mode_name(RunMode m) {
    switch (m) {
        case RunMode::uncertainty: return "uncertainty";
        case RunMode::complete_info: return "complete";
        case RunMode::benchmark: return "benchmark";
    }
    return "?";
}

double peak_to_average(const Eigen::ArrayXd& profile) {
    const double peak = profile.maxCoeff();
    const double mean = profile.mean();
    if (mean <= 0.0) return 0.0;
    return peak / mean;
}

double wake_probability_now(const Appliance& app, int t) {
    double seen = 0.0;
    for (int h = 0; h < t; ++h) seen += app.wake_prob(h);
    const double denom = 1.0 - seen;
    if (denom <= 1e-12) return app.wake_prob(t) > 0.0 ? 1.0 : 0.0;
    return std::min(1.0, app.wake_prob(t) / denom);
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

struct World {
    const Scenario* scn = nullptr;
    RunMode mode = RunMode::uncertainty;
    uint64_t seed = 0;
    int horizon = 0;

    std::vector<AggregatorState> aggs;
    std::vector<int> agg_bus;  // internal bus index per aggregator
    std::vector<GeneratorConfig> gen_cfgs;  // complete-info mode pins renewables
    std::vector<GeneratorDecision> gens;
    std::vector<int> gen_bus;
    DnoState dno;

    // cached per-slot sleeping estimates
    std::vector<Eigen::ArrayXd> sleeping_est;
};

void init_profile_random(const AggregatorConfig& cfg, AwakeAppliance& aa, int t, int horizon,
                         uint64_t seed) {
    ApplianceFeasibleSet fs = awake_feasible_set(cfg, aa, t, horizon);
    for (int h = t; h < horizon; ++h) {
        const double u = rng::uniform01(
            rng::key(seed, rng::tag_of("init"), uint64_t(cfg.bus), uint64_t(aa.index), uint64_t(h)));
        aa.profile(h) = fs.lo(h) + u * (fs.hi(h) - fs.lo(h));
    }
    project_feasible(fs, aa.profile);
}

// One slot's wake events per aggregator, either sampled from the probability
// tables or replayed from an exogenous log.
std::vector<std::vector<int>> wake_events_for_slot(
    const World& w, int t, const std::map<std::pair<int, int>, std::vector<std::string>>* replay,
    std::vector<WakeEvent>& log) {
    const Scenario& scn = *w.scn;
    std::vector<std::vector<int>> events(scn.aggregators.size());
    for (size_t i = 0; i < scn.aggregators.size(); ++i) {
        const AggregatorConfig& cfg = scn.aggregators[i];
        for (int idx : w.aggs[i].asleep) {
            const Appliance& app = cfg.appliances[idx];
            bool wake = false;
            if (replay != nullptr) {
                auto it = replay->find({t + 1, cfg.bus});
                wake = it != replay->end() &&
                       std::find(it->second.begin(), it->second.end(), app.id) != it->second.end();
            } else {
                const double pw = wake_probability_now(app, t);
                const double u = rng::uniform01(rng::key(w.seed, rng::tag_of("wake"),
                                                         uint64_t(cfg.bus), uint64_t(idx),
                                                         uint64_t(t)));
                wake = u < pw;
            }
            if (wake) {
                events[i].push_back(idx);
                log.push_back({t + 1, cfg.bus, app.id});
            }
        }
    }
    return events;
}

InjectionSnapshot assemble_snapshot(const World& w, int t) {
    const Scenario& scn = *w.scn;
    const int n = scn.network.size(), H = w.horizon;
    InjectionSnapshot snap;
    snap.p = Eigen::MatrixXd::Zero(n, H);
    snap.q = Eigen::MatrixXd::Zero(n, H);
    snap.ren_offset = Eigen::MatrixXd::Zero(n, H);

    for (size_t i = 0; i < scn.aggregators.size(); ++i) {
        const AggregatorConfig& cfg = scn.aggregators[i];
        const AggregatorState& st = w.aggs[i];
        const int b = w.agg_bus[i];
        Eigen::ArrayXd load = w.sleeping_est[i];
        for (const AwakeAppliance& aa : st.active)
            for (int h = std::max(t, aa.wake_slot); h < H; ++h) load(h) += aa.profile(h);
        const double ratio = cfg.reactive_ratio();
        for (int h = t; h < H; ++h) {
            snap.p(b, h) = -load(h);
            snap.q(b, h) = -load(h) * ratio;
        }
        for (const AwakeAppliance& aa : st.active)
            snap.utility_total +=
                utility(cfg.appliances[aa.index], aa.window, aa.profile, t, aa.energy_used);
    }
    for (size_t j = 0; j < scn.generators.size(); ++j) {
        const GeneratorConfig& cfg = w.gen_cfgs[j];
        const GeneratorDecision& d = w.gens[j];
        const int b = w.gen_bus[j];
        for (int h = t; h < H; ++h) {
            const double ren = cfg.has_renewable() ? d.p_ren(h) : 0.0;
            snap.p(b, h) = d.p_conv(h) + ren;
            snap.q(b, h) = d.q_conv(h);
            if (cfg.has_renewable()) snap.ren_offset(b, h) = d.p_ren(h) - cfg.ren_min(h);
            snap.cost_total += cfg.cost(d.p_conv(h));
        }
    }
    return snap;
}

SlotSummary run_slot(World& w, const MarketContext& ctx, int t, const RunOptions& opts,
                     SimulationResult& result, std::vector<IterationSnapshot>* snapshots) {
    const auto start = Clock::now();
    const Scenario& scn = *ctx.scenario;
    const int n = scn.network.size(), H = w.horizon;
    const int max_iters = opts.max_iters > 0 ? opts.max_iters : scn.market.max_iters;
    const double xi1 = scn.market.tol_theta, xi2 = scn.market.tol_vmag;
    const int slack = ctx.ops->slack();

    // per-slot sleeping estimates are constant across iterations
    w.sleeping_est.assign(scn.aggregators.size(), Eigen::ArrayXd::Zero(H));
    for (size_t i = 0; i < scn.aggregators.size(); ++i)
        for (int h = t + 1; h < H; ++h)
            w.sleeping_est[i](h) =
                sleeping_load_estimate(scn.aggregators[i].appliances, w.aggs[i].asleep, h, t);

    const size_t n_agents = scn.aggregators.size() + scn.generators.size();
    Mailbox<AgentUpdate> inbox;
    Mailbox<SignalSlice> outbox;

    SlotSummary sum;
    sum.slot = t + 1;
    bool converged = false;
    double last_residual = 0.0;
    int iters_done = 0;

    for (int k = 1; k <= max_iters; ++k) {
        // (a) information exchange: every agent posts its current profiles
        inbox.open(k, static_cast<int>(n_agents));
        for (size_t i = 0; i < scn.aggregators.size(); ++i) {
            AgentUpdate msg;
            msg.iteration = k;
            msg.bus = scn.aggregators[i].bus;
            Eigen::ArrayXd load = w.sleeping_est[i];
            for (const AwakeAppliance& aa : w.aggs[i].active)
                for (int h = std::max(t, aa.wake_slot); h < H; ++h) load(h) += aa.profile(h);
            msg.active_power = load;
            msg.reactive_power = load * scn.aggregators[i].reactive_ratio();
            inbox.post(static_cast<int>(i), std::move(msg));
        }
        for (size_t j = 0; j < scn.generators.size(); ++j) {
            AgentUpdate msg;
            msg.iteration = k;
            msg.bus = w.gen_cfgs[j].bus;
            msg.is_generator = true;
            msg.p_conv = w.gens[j].p_conv;
            msg.q_conv = w.gens[j].q_conv;
            msg.p_ren = w.gens[j].p_ren;
            inbox.post(static_cast<int>(scn.aggregators.size() + j), std::move(msg));
        }
        if (!inbox.complete())
            throw std::logic_error("iteration barrier: missing agent messages");

        // (b) coordinator update
        const InjectionSnapshot snap = assemble_snapshot(w, t);
        const LagrangianEval ev =
            lagrangian_value_and_gradient(*ctx.ops, w.dno, snap, ctx.shortage_penalty, t);
        const Eigen::MatrixXd theta_prev = w.dno.theta, vmag_prev = w.dno.vmag;
        const double step_primal = scn.market.step.primal(k);
        const double step_dual = scn.market.step.dual(k);
        update_phi(w.dno, ev.grad, step_primal, step_dual, *ctx.projector, slack, t,
                   opts.threads);

        // (c) signal broadcast
        const SignalBundle sb = signals(w.dno, ctx.reactive_ratio, ctx.shortage_penalty, t);
        outbox.open(k, static_cast<int>(n_agents));
        for (size_t a = 0; a < n_agents; ++a) {
            const int bus = a < scn.aggregators.size()
                                ? scn.aggregators[a].bus
                                : w.gen_cfgs[a - scn.aggregators.size()].bus;
            const int b = scn.network.index_of(bus);
            SignalSlice slice;
            slice.iteration = k;
            slice.bus = bus;
            slice.price_active = sb.price_active.row(b).transpose().array();
            slice.price_reactive = sb.price_reactive.row(b).transpose().array();
            slice.shortage_penalty = sb.shortage_penalty(b);
            outbox.post(static_cast<int>(a), std::move(slice));
        }

        // trace rows for the current slot
        for (int b = 0; b < n; ++b) {
            TraceRow row;
            row.iter = k;
            row.slot = t + 1;
            row.bus = scn.network.buses[b].id;
            row.theta = w.dno.theta(b, t);
            row.vmag = w.dno.vmag(b, t);
            row.lambda = w.dno.lambda_p(b, t);
            row.gamma = w.dno.lambda_q(b, t);
            row.rho = sb.price_active(b, t);
            row.varrho = sb.price_reactive(b, t);
            row.residual =
                std::max(std::abs(ev.grad.lambda_p(b, t)), std::abs(ev.grad.lambda_q(b, t)));
            result.trace.push_back(row);
        }
        if (opts.dump_signals) {
            for (int h = t; h < H; ++h)
                for (int b = 0; b < n; ++b)
                    result.signal_rows.push_back({k, h + 1, scn.network.buses[b].id,
                                                  sb.price_active(b, h), sb.price_reactive(b, h),
                                                  sb.shortage_penalty(b)});
        }

        last_residual = 0.0;
        for (int h = t; h < H; ++h)
            for (int b = 0; b < n; ++b) {
                if (b == slack) continue;
                last_residual = std::max({last_residual, std::abs(ev.grad.lambda_p(b, h)),
                                          std::abs(ev.grad.lambda_q(b, h))});
            }

        if (snapshots != nullptr) {
            IterationSnapshot snapit;
            snapit.iteration = k;
            snapit.slot = t + 1;
            snapit.phi = w.dno;
            snapit.bundle = sb;
            snapit.residual_p = ev.grad.lambda_p;
            snapit.residual_q = ev.grad.lambda_q;
            snapit.step_primal = step_primal;
            snapit.step_dual = step_dual;
            snapit.lagrangian_value = ev.value;
            for (size_t i = 0; i < scn.aggregators.size(); ++i) {
                const auto& slice = outbox.at(static_cast<int>(i));
                snapit.aggregator_profit.push_back(aggregator_profit(
                    w.aggs[i], scn.aggregators[i], slice.price_active, t));
            }
            for (size_t j = 0; j < scn.generators.size(); ++j) {
                const auto& slice = outbox.at(static_cast<int>(scn.aggregators.size() + j));
                const Eigen::ArrayXd beta =
                    Eigen::ArrayXd::Constant(H, slice.shortage_penalty);
                snapit.generator_profit.push_back(generator_profit(
                    w.gen_cfgs[j], w.gens[j], slice.price_active, slice.price_reactive, beta, t));
            }
            snapshots->push_back(std::move(snapit));
        }

        // (d) aggregator updates (skipped in the no-demand-response world)
        if (w.mode != RunMode::benchmark) {
            parallel_for(static_cast<std::ptrdiff_t>(scn.aggregators.size()), opts.threads,
                         [&](std::ptrdiff_t i) {
                             const auto& slice = outbox.at(static_cast<int>(i));
                             aggregator_local_solve(w.aggs[i], scn.aggregators[i],
                                                    slice.price_active, t, scn.market.inner);
                         });
        }
        // (e) generator updates
        parallel_for(static_cast<std::ptrdiff_t>(scn.generators.size()), opts.threads,
                     [&](std::ptrdiff_t j) {
                         const auto& slice =
                             outbox.at(static_cast<int>(scn.aggregators.size() + j));
                         const Eigen::ArrayXd beta =
                             Eigen::ArrayXd::Constant(H, slice.shortage_penalty);
                         w.gens[j] = generator_local_solve(w.gen_cfgs[j], slice.price_active,
                                                           slice.price_reactive, beta, t,
                                                           &w.gens[j]);
                     });

        // (f) stopping test on successive network iterates
        double dth = 0.0, dv = 0.0;
        for (int h = t; h < H; ++h)
            for (int b = 0; b < n; ++b) {
                dth = std::max(dth, std::abs(w.dno.theta(b, h) - theta_prev(b, h)));
                dv = std::max(dv, std::abs(w.dno.vmag(b, h) - vmag_prev(b, h)));
            }
        iters_done = k;
        if (dth <= xi1 && dv <= xi2) {
            converged = true;
            break;
        }
    }

    sum.iterations = iters_done;
    sum.converged = converged;
    sum.max_residual = last_residual;
    sum.wall_ms = ms_since(start);
    return sum;
}

}  // namespace

SimulationResult run_horizon(const Scenario& s, const RunOptions& opts) {
    const auto start = Clock::now();
    const int n = s.network.size(), H = s.market.horizon;

    AdmittanceBlocks blocks = assemble_lambda(s.network);
    FlowSolver solver(blocks, s.network.slack_index());
    NetworkOps ops(s.network);
    NetworkProjector projector(s.network);

    MarketContext ctx;
    ctx.scenario = &s;
    ctx.blocks = blocks;
    ctx.solver = &solver;
    ctx.ops = &ops;
    ctx.projector = &projector;
    ctx.shortage_penalty = shortage_penalties(solver.sensitivity(), s.market.risk_weight);
    ctx.reactive_ratio.assign(n, 0.0);
    for (const AggregatorConfig& a : s.aggregators)
        ctx.reactive_ratio[s.network.index_of(a.bus)] = a.reactive_ratio();

    World w;
    w.scn = &s;
    w.mode = opts.mode;
    w.seed = opts.seed.value_or(s.market.seed);
    w.horizon = H;
    w.gen_cfgs = s.generators;
    w.dno = init_dno_state(n, H);
    for (const AggregatorConfig& a : s.aggregators) {
        w.aggs.push_back(init_aggregator_state(a));
        w.agg_bus.push_back(s.network.index_of(a.bus));
    }
    for (const GeneratorConfig& g : s.generators) w.gen_bus.push_back(s.network.index_of(g.bus));

    // complete information: renewables pinned to the realized trajectory
    if (w.mode == RunMode::complete_info) {
        for (size_t j = 0; j < w.gen_cfgs.size(); ++j) {
            GeneratorConfig& g = w.gen_cfgs[j];
            if (!g.has_renewable()) continue;
            for (int h = 0; h < H; ++h) {
                const double u = rng::uniform01(rng::key(w.seed, rng::tag_of("ren-actual"),
                                                         uint64_t(g.bus), uint64_t(h)));
                const double actual = g.ren_min(h) + u * (g.ren_max(h) - g.ren_min(h));
                g.ren_min(h) = g.ren_max(h) = actual;
            }
        }
    }

    // generators: random initial conventional profiles, renewables presumed
    // at their upper bounds with a zero uncertainty budget
    for (size_t j = 0; j < w.gen_cfgs.size(); ++j) {
        const GeneratorConfig& g = w.gen_cfgs[j];
        GeneratorDecision d;
        d.p_conv.resize(H);
        d.q_conv.resize(H);
        d.p_ren = Eigen::ArrayXd::Zero(H);
        for (int h = 0; h < H; ++h) {
            const double up = rng::uniform01(
                rng::key(w.seed, rng::tag_of("gen-init-p"), uint64_t(g.bus), uint64_t(h)));
            const double uq = rng::uniform01(
                rng::key(w.seed, rng::tag_of("gen-init-q"), uint64_t(g.bus), uint64_t(h)));
            d.p_conv(h) = g.p_conv_min + up * (g.p_conv_max - g.p_conv_min);
            d.q_conv(h) = g.q_conv_min + uq * (g.q_conv_max - g.q_conv_min);
            if (g.has_renewable()) d.p_ren(h) = g.ren_max(h);
        }
        d.confidence = 0.0;
        d.budget_used = 0.0;
        w.gens.push_back(std::move(d));
    }

    // exogenous wake log, if any
    std::map<std::pair<int, int>, std::vector<std::string>> replay;
    const bool replaying = !opts.wake_log.empty();
    if (replaying) {
        std::ifstream in(opts.wake_log);
        if (!in) throw std::runtime_error(opts.wake_log + ": cannot open wake log");
        std::string line;
        std::getline(in, line);  // header
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::stringstream ss(line);
            std::string slot_s, bus_s, id;
            std::getline(ss, slot_s, ',');
            std::getline(ss, bus_s, ',');
            std::getline(ss, id, ',');
            replay[{std::stoi(slot_s), std::stoi(bus_s)}].push_back(id);
        }
    }

    // complete information: reveal all wake slots up front by replaying the
    // same per-slot draws the uncertainty run would make
    std::vector<std::vector<std::pair<int, int>>> known_wakes(s.aggregators.size());
    if (w.mode == RunMode::complete_info && !replaying) {
        for (size_t i = 0; i < s.aggregators.size(); ++i) {
            const AggregatorConfig& cfg = s.aggregators[i];
            for (size_t idx = 0; idx < cfg.appliances.size(); ++idx) {
                const Appliance& app = cfg.appliances[idx];
                for (int t = 0; t < H; ++t) {
                    const double pw = wake_probability_now(app, t);
                    const double u = rng::uniform01(rng::key(w.seed, rng::tag_of("wake"),
                                                             uint64_t(cfg.bus), uint64_t(idx),
                                                             uint64_t(t)));
                    if (u < pw) {
                        known_wakes[i].push_back({static_cast<int>(idx), t});
                        break;
                    }
                }
            }
        }
    }

    SimulationResult result;
    result.load_p = Eigen::MatrixXd::Zero(n, H);
    result.load_q = Eigen::MatrixXd::Zero(n, H);
    result.gen_p_conv = Eigen::MatrixXd::Zero(n, H);
    result.gen_q_conv = Eigen::MatrixXd::Zero(n, H);
    result.gen_p_ren = Eigen::MatrixXd::Zero(n, H);
    result.price_active = Eigen::MatrixXd::Zero(n, H);
    result.price_reactive = Eigen::MatrixXd::Zero(n, H);
    result.shortage_penalty = ctx.shortage_penalty;
    result.slot_profit_opt.resize(H);
    result.slot_profit_bench.resize(H);

    if (w.mode == RunMode::complete_info) {
        // all known wakers become schedulable at t=0 with their true wake slot
        for (size_t i = 0; i < s.aggregators.size(); ++i) {
            const AggregatorConfig& cfg = s.aggregators[i];
            for (auto [idx, wake] : known_wakes[i]) {
                auto& asleep = w.aggs[i].asleep;
                asleep.erase(std::find(asleep.begin(), asleep.end(), idx));
                AwakeAppliance aa;
                aa.index = idx;
                aa.wake_slot = wake;
                aa.window = cfg.appliances[idx].materialize_window(wake, H);
                aa.profile = Eigen::ArrayXd::Zero(H);
                init_profile_random(cfg, aa, 0, H, w.seed);
                w.aggs[i].active.push_back(std::move(aa));
                result.wake_events.push_back({wake + 1, cfg.bus, cfg.appliances[idx].id});
            }
            // the asleep estimate must be empty-sum zero: nothing else wakes
            w.aggs[i].asleep.clear();
        }
    }

    for (int t = 0; t < H; ++t) {
        // world randomness: wake events at the start of the slot
        if (w.mode != RunMode::complete_info) {
            auto events =
                wake_events_for_slot(w, t, replaying ? &replay : nullptr, result.wake_events);
            for (size_t i = 0; i < s.aggregators.size(); ++i) {
                const AggregatorConfig& cfg = s.aggregators[i];
                // remember which appliances are new so their profiles get
                // initialized per mode
                const size_t before = w.aggs[i].active.size();
                wake_step(w.aggs[i], cfg, t, events[i], H);
                for (size_t a = 0; a < w.aggs[i].active.size(); ++a) {
                    AwakeAppliance& aa = w.aggs[i].active[a];
                    if (aa.wake_slot != t) continue;
                    (void)before;
                    if (w.mode == RunMode::benchmark)
                        aa.profile = nominal_profile(cfg.appliances[aa.index], t, H);
                    else
                        init_profile_random(cfg, aa, t, H, w.seed);
                }
            }
        } else {
            // retirement still advances with the rolling horizon
            for (size_t i = 0; i < s.aggregators.size(); ++i)
                wake_step(w.aggs[i], s.aggregators[i], t, {}, H);
        }

        SlotSummary sum = run_slot(w, ctx, t, opts, result,
                                   opts.keep_iteration_snapshots ? &result.snapshots : nullptr);
        result.slots.push_back(sum);

        // final signals of the slot settle the committed quantities
        const SignalBundle sb = signals(w.dno, ctx.reactive_ratio, ctx.shortage_penalty, t);

        // directional profit audit against the nominal-operation point
        if (w.mode != RunMode::benchmark) {
            result.slot_profit_opt[t].resize(s.aggregators.size());
            result.slot_profit_bench[t].resize(s.aggregators.size());
            for (size_t i = 0; i < s.aggregators.size(); ++i) {
                const int b = w.agg_bus[i];
                const Eigen::ArrayXd price = sb.price_active.row(b).transpose().array();
                result.slot_profit_opt[t][i] =
                    aggregator_profit(w.aggs[i], s.aggregators[i], price, t);
                const auto bench = benchmark_point(w.aggs[i], s.aggregators[i], t);
                result.slot_profit_bench[t][i] =
                    profiles_profit(w.aggs[i], s.aggregators[i], bench, price, t);
            }
        }

        if (opts.capture_equilibria) {
            SimulationResult::SlotEquilibrium eq;
            eq.view.t = t;
            eq.view.sleeping_est = w.sleeping_est;
            eq.view.gen_cfgs = w.gen_cfgs;
            eq.candidate.theta = w.dno.theta;
            eq.candidate.vmag = w.dno.vmag;
            eq.candidate.lambda_p = w.dno.lambda_p;
            eq.candidate.lambda_q = w.dno.lambda_q;
            for (size_t i = 0; i < s.aggregators.size(); ++i) {
                for (const AwakeAppliance& aa : w.aggs[i].active) {
                    WorldView::AwakeItem item;
                    item.agg_index = static_cast<int>(i);
                    item.bus = s.aggregators[i].bus;
                    item.appliance_index = aa.index;
                    item.wake_slot = aa.wake_slot;
                    item.window = aa.window;
                    item.energy_used = aa.energy_used;
                    eq.view.awake.push_back(std::move(item));
                    eq.candidate.appliance_profiles.push_back(aa.profile);
                }
            }
            eq.candidate.p_conv = Eigen::MatrixXd::Zero(n, H);
            eq.candidate.q_conv = Eigen::MatrixXd::Zero(n, H);
            eq.candidate.p_ren = Eigen::MatrixXd::Zero(n, H);
            for (size_t j = 0; j < s.generators.size(); ++j) {
                const int b = w.gen_bus[j];
                eq.candidate.p_conv.row(b) = w.gens[j].p_conv.transpose();
                eq.candidate.q_conv.row(b) = w.gens[j].q_conv.transpose();
                if (w.gen_cfgs[j].has_renewable())
                    eq.candidate.p_ren.row(b) = w.gens[j].p_ren.transpose();
            }
            result.equilibria.push_back(std::move(eq));
        }

        // commit the current slot
        for (size_t i = 0; i < s.aggregators.size(); ++i) {
            const int b = w.agg_bus[i];
            double load = 0.0;
            for (AwakeAppliance& aa : w.aggs[i].active) {
                if (t < aa.wake_slot) continue;
                load += aa.profile(t);
                if (std::find(aa.window.begin(), aa.window.end(), t) != aa.window.end())
                    aa.energy_used += aa.profile(t);
            }
            result.load_p(b, t) = load;
            result.load_q(b, t) = load * s.aggregators[i].reactive_ratio();
        }
        for (size_t j = 0; j < s.generators.size(); ++j) {
            const int b = w.gen_bus[j];
            result.gen_p_conv(b, t) = w.gens[j].p_conv(t);
            result.gen_q_conv(b, t) = w.gens[j].q_conv(t);
            if (w.gen_cfgs[j].has_renewable()) result.gen_p_ren(b, t) = w.gens[j].p_ren(t);
        }
        result.price_active.col(t) = sb.price_active.col(t);
        result.price_reactive.col(t) = sb.price_reactive.col(t);
    }

    // day-level reports
    for (size_t i = 0; i < s.aggregators.size(); ++i) {
        const AggregatorConfig& cfg = s.aggregators[i];
        const int b = w.agg_bus[i];
        AggregatorReport rep;
        rep.bus = cfg.bus;
        auto account = [&](const AwakeAppliance& aa) {
            rep.utility += utility(cfg.appliances[aa.index], aa.window, aa.profile, 0, 0.0);
            SimulationResult::ApplianceCommit ac;
            ac.bus = cfg.bus;
            ac.appliance_id = cfg.appliances[aa.index].id;
            ac.wake_slot = aa.wake_slot + 1;
            ac.profile = aa.profile;
            result.appliance_commits.push_back(std::move(ac));
        };
        for (const AwakeAppliance& aa : w.aggs[i].active) account(aa);
        for (const AwakeAppliance& aa : w.aggs[i].retired) account(aa);
        for (int t = 0; t < H; ++t) {
            rep.payment += result.load_p(b, t) * result.price_active(b, t);
            rep.peak_load = std::max(rep.peak_load, result.load_p(b, t));
        }
        rep.profit = rep.utility - rep.payment;
        result.aggregators.push_back(rep);
    }
    Eigen::ArrayXd total_gen = Eigen::ArrayXd::Zero(H);
    for (size_t j = 0; j < s.generators.size(); ++j) {
        const GeneratorConfig& cfg = w.gen_cfgs[j];
        const int b = w.gen_bus[j];
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
                rep.shortage +=
                    ctx.shortage_penalty(b) * (result.gen_p_ren(b, t) - cfg.ren_min(t));
        }
        rep.profit = rep.revenue - rep.cost - rep.shortage;
        rep.par = peak_to_average(prof);
        rep.peak = prof.maxCoeff();
        result.generators.push_back(rep);
    }
    result.par_aggregate = peak_to_average(total_gen);

    double welfare = 0.0;
    for (const auto& rep : result.aggregators) welfare += rep.utility;
    for (const auto& rep : result.generators) welfare -= rep.cost + rep.shortage;
    result.welfare = welfare;

    result.all_converged = true;
    for (const SlotSummary& sum : result.slots) result.all_converged &= sum.converged;
    result.wall_ms_total = ms_since(start);
    return result;
}

SimulationResult benchmark_run(const Scenario& s, RunOptions opts) {
    opts.mode = RunMode::benchmark;
    return run_horizon(s, opts);
}

}  // namespace detrade
