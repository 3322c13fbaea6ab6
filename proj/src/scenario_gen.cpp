#include "detrade/scenario_gen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "detrade/dno.hpp"
#include "detrade/linpf.hpp"
#include "detrade/rng.hpp"

namespace detrade {

namespace {

double draw(uint64_t seed, const char* what, int a, int b, double lo, double hi) {
    const double u =
        rng::uniform01(rng::key(seed, rng::tag_of(what), uint64_t(a), uint64_t(b)));
    return lo + u * (hi - lo);
}

// discretized bell over the horizon, normalized to the requested mass
Eigen::ArrayXd wake_bell(int horizon, double center, double sigma, double mass) {
    Eigen::ArrayXd p(horizon);
    for (int h = 0; h < horizon; ++h) {
        const double z = (h - center) / sigma;
        p(h) = std::exp(-0.5 * z * z);
    }
    p *= mass / p.sum();
    return p;
}

}  // namespace

Scenario generate_scenario(const SyntheticSpec& spec, uint64_t seed) {
    if (spec.generators > spec.buses)
        throw InfeasibleSpecError("infeasible spec: more generators (" +
                                  std::to_string(spec.generators) + ") than entity buses (" +
                                  std::to_string(spec.buses) + ")");
    if (spec.buses < 1) throw InfeasibleSpecError("infeasible spec: need at least one entity bus");

    const int H = spec.horizon;
    Scenario s;
    s.market.horizon = H;
    s.market.slot_hours = spec.slot_hours;
    s.market.risk_weight = spec.risk_weight;
    s.market.tol_theta = spec.tol;
    s.market.tol_vmag = spec.tol;
    s.market.seed = seed;
    s.market.max_iters = spec.max_iters;

    // --- topology: slack root plus a random radial tree over entity buses
    const int n = spec.buses + 1;
    std::vector<int> parent(n, -1);
    for (int k = 1; k < n; ++k) {
        if (k == 1) {
            parent[k] = 0;
            continue;
        }
        // attach to a recent bus most of the time: feeder-like depth with
        // occasional laterals near the root
        const double u = draw(seed, "topo", k, 0, 0.0, 1.0);
        const int lo = u < 0.75 ? std::max(0, k - 4) : 0;
        parent[k] = static_cast<int>(draw(seed, "topo-pick", k, 1, lo, k - 0.001));
    }

    for (int k = 0; k < n; ++k) {
        Bus b;
        b.id = k + 1;
        b.kind = k == 0 ? BusKind::slack : BusKind::aggregator;  // refined below
        b.v_min = k == 0 ? 1.0 : 0.94;
        b.v_max = k == 0 ? 1.0 : 1.06;
        if (k > 0 && draw(seed, "shunt", k, 0, 0.0, 1.0) < 0.2)
            b.shunt_b = draw(seed, "shunt-b", k, 0, 0.0, 0.01);
        if (k == n - 1) b.shunt_g = 0.002;
        s.network.buses.push_back(b);
    }

    // --- generator placement: spread along the bus ordering
    std::vector<bool> is_gen(n, false);
    for (int j = 0; j < spec.generators; ++j) {
        int pick = 1 + static_cast<int>(std::floor((j + 0.5) * spec.buses / spec.generators));
        pick = std::min(pick, n - 1);
        while (is_gen[pick]) pick = pick == n - 1 ? 1 : pick + 1;
        is_gen[pick] = true;
    }

    // --- aggregator sizing (drives impedances and capacities)
    const int n_aggs = spec.buses - spec.generators;
    std::vector<double> peak_estimate(n, 0.0);  // per bus, pu
    double total_peak = 0.0;
    for (int k = 1; k < n; ++k) {
        if (is_gen[k]) continue;
        const double users = draw(seed, "users", k, 0, spec.users_min, spec.users_max);
        peak_estimate[k] = (users / ((spec.users_min + spec.users_max) * 0.5)) /
                           std::max(1, n_aggs);
        total_peak += peak_estimate[k];
    }
    if (total_peak <= 0) total_peak = 1.0;

    // downstream peak per branch for impedance and thermal sizing
    std::vector<double> downstream(n, 0.0);
    for (int k = n - 1; k >= 1; --k) downstream[k] += peak_estimate[k];
    for (int k = n - 1; k >= 1; --k) downstream[parent[k]] += downstream[k];

    for (int k = 1; k < n; ++k) {
        Branch br;
        br.from = parent[k] + 1;
        br.to = k + 1;
        const double carried = std::max(downstream[k], 0.02 * total_peak);
        // per-branch drop of roughly half a percent at estimated peak
        br.resistance = std::min(0.25, spec.drop_scale * 0.005 / carried) *
                        draw(seed, "imp", k, 0, 0.8, 1.25);
        br.reactance = br.resistance / draw(seed, "imp-rx", k, 0, 1.2, 1.8);
        br.s_max = 2.5 * carried + 0.05 * total_peak;
        s.network.branches.push_back(br);
    }

    // --- generators
    const double capacity_total = spec.capacity_margin * total_peak;
    int gen_count = 0;
    for (int k = 1; k < n; ++k) {
        if (!is_gen[k]) continue;
        GeneratorConfig g;
        g.bus = k + 1;
        g.p_conv_min = 0.0;
        g.p_conv_max =
            capacity_total / spec.generators * draw(seed, "gen-cap", k, 0, 0.7, 1.3);
        g.q_conv_min = -0.35 * g.p_conv_max;
        g.q_conv_max = 0.35 * g.p_conv_max;
        g.cost_quadratic = draw(seed, "gen-a2", k, 0, 2.0, 8.0) / std::max(0.05, g.p_conv_max);
        g.cost_linear = draw(seed, "gen-a1", k, 0, 3.0, 8.0);
        g.cost_fixed = draw(seed, "gen-a0", k, 0, 0.0, 0.2);
        if (draw(seed, "gen-ren", k, 0, 0.0, 1.0) < spec.renewable_fraction) {
            const double cap = 0.5 * g.p_conv_max;
            const bool solar = draw(seed, "gen-ren-kind", k, 0, 0.0, 1.0) < 0.5;
            g.ren_min.resize(H);
            g.ren_max.resize(H);
            for (int h = 0; h < H; ++h) {
                double shape;
                if (solar) {
                    const double z = (h - 12.0) / 3.5;
                    shape = std::exp(-0.5 * z * z);
                } else {
                    shape = 0.4 + 0.6 * std::abs(std::sin(0.7 * h + k));
                }
                g.ren_max(h) = cap * shape * draw(seed, "gen-ren-max", k, h, 0.9, 1.1);
                g.ren_min(h) = g.ren_max(h) * draw(seed, "gen-ren-min", k, h, 0.45, 0.8);
            }
        }
        s.generators.push_back(g);
        ++gen_count;
    }
    (void)gen_count;

    // --- aggregators and their appliance populations
    for (int k = 1; k < n; ++k) {
        if (is_gen[k]) continue;
        AggregatorConfig a;
        a.bus = k + 1;
        a.power_factor = draw(seed, "pf", k, 0, 0.90, 0.98);
        const double users = draw(seed, "users", k, 0, spec.users_min, spec.users_max);
        const int n_app = std::max(2, static_cast<int>(std::lround(users / 60.0)));
        const double agg_peak = peak_estimate[k];

        for (int ai = 0; ai < n_app; ++ai) {
            Appliance app;
            app.id = "b" + std::to_string(k + 1) + "-a" + std::to_string(ai);
            const double tu = draw(seed, "app-type", k, ai, 0.0, 1.0);
            app.type = tu < 0.4 ? ApplianceType::window_only
                                : (tu < 0.7 ? ApplianceType::window_preferred
                                            : ApplianceType::flexible);
            app.kernel = draw(seed, "app-kernel", k, ai, 0.0, 1.0) < 0.9
                             ? UtilityKernel::log1p
                             : UtilityKernel::sqrt_shift;

            const double e_nom =
                agg_peak / n_app * draw(seed, "app-enom", k, ai, 0.7, 1.4);
            const int dur = 1 + static_cast<int>(draw(seed, "app-dur", k, ai, 0.0, 3.999));
            app.power_nominal = e_nom;
            app.energy_nominal = e_nom * dur;
            app.power_min = Eigen::ArrayXd::Zero(H);
            app.power_max =
                Eigen::ArrayXd::Constant(H, e_nom * draw(seed, "app-emax", k, ai, 1.2, 1.8));
            if (app.type != ApplianceType::flexible) {
                app.energy_min = app.energy_nominal * draw(seed, "app-Emin", k, ai, 0.6, 0.9);
                app.energy_max = app.energy_nominal * draw(seed, "app-Emax", k, ai, 1.0, 1.25);
            }

            // morning chores or evening peak; bells give the load profile its
            // double-hump day shape
            const bool evening = draw(seed, "app-when", k, ai, 0.0, 1.0) < 0.65;
            const double center = evening ? draw(seed, "app-center", k, ai, 16.0, 20.0)
                                          : draw(seed, "app-center", k, ai, 6.0, 10.0);
            const double sigma = draw(seed, "app-sigma", k, ai, 1.2, 3.0);
            const double mass = draw(seed, "app-mass", k, ai, 0.9, 1.0);
            app.wake_prob = wake_bell(H, center, sigma, mass);

            if (app.type == ApplianceType::window_only) {
                app.horizon.wake_relative = true;
                app.horizon.length =
                    dur + 1 + static_cast<int>(draw(seed, "app-wlen", k, ai, 0.0, 3.999));
            } else {
                app.horizon.wake_relative = false;
                app.horizon.start =
                    std::min(H - 3, static_cast<int>(center) - 1 +
                                        static_cast<int>(draw(seed, "app-woff", k, ai, 0.0, 1.999)));
                app.horizon.start = std::max(0, app.horizon.start);
                app.horizon.length =
                    std::max(dur + 1, 4 + static_cast<int>(draw(seed, "app-wlen", k, ai, 0.0, 2.999)));
            }

            const double slope = 1.0 + (app.type == ApplianceType::window_only
                                            ? app.energy_nominal - app.energy_min
                                            : 0.0);
            app.utility_scale = draw(seed, "app-kappa", k, ai, 8.0, 18.0) * slope;
            app.utility_scale_out = 0.05 * app.utility_scale;
            a.appliances.push_back(std::move(app));
        }
        s.aggregators.push_back(std::move(a));
    }

    s.base_mva = std::max(1.0, std::round(0.003 * 0.5 * (spec.users_min + spec.users_max) *
                                          std::max(1, n_aggs)));
    s.base_kv = 4.16;

    // step sizes scaled to the network operator; the dual step is the price
    // learning rate
    NetworkOps ops(s.network);
    const double opnorm = ops.operator_inf_norm();
    s.market.step.base = spec.step_base;
    s.market.step.primal_scale =
        spec.primal_scale > 0.0 ? spec.primal_scale : 0.5 / std::max(1.0, opnorm);
    s.market.step.dual_scale = spec.dual_scale;

    validate_scenario(s);
    return s;
}

}  // namespace detrade
