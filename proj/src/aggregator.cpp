#include "detrade/aggregator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace detrade {

AggregatorState init_aggregator_state(const AggregatorConfig& cfg) {
    AggregatorState st;
    st.bus = cfg.bus;
    st.asleep.resize(cfg.appliances.size());
    for (size_t i = 0; i < cfg.appliances.size(); ++i) st.asleep[i] = static_cast<int>(i);
    return st;
}

void wake_step(AggregatorState& st, const AggregatorConfig& cfg, int t,
               const std::vector<int>& events, int horizon_len) {
    for (int idx : events) {
        auto it = std::find(st.asleep.begin(), st.asleep.end(), idx);
        if (it == st.asleep.end())
            throw std::runtime_error("aggregator at bus " + std::to_string(st.bus) +
                                     ": wake event for unknown or already-awake appliance index " +
                                     std::to_string(idx));
        st.asleep.erase(it);
        AwakeAppliance aa;
        aa.index = idx;
        aa.wake_slot = t;
        aa.window = cfg.appliances[idx].materialize_window(t, horizon_len);
        aa.profile = Eigen::ArrayXd::Zero(horizon_len);
        st.active.push_back(std::move(aa));
    }
    // retire appliances whose window has fully elapsed
    for (auto it = st.active.begin(); it != st.active.end();) {
        const bool elapsed = it->window.empty() || it->window.back() < t;
        if (elapsed) {
            st.retired.push_back(std::move(*it));
            it = st.active.erase(it);
        } else {
            ++it;
        }
    }
}

DemandProfile demand_profile(const AggregatorState& st, const AggregatorConfig& cfg, int t,
                             int horizon_len) {
    const int horizon = horizon_len;
    DemandProfile d;
    d.active_power = Eigen::ArrayXd::Zero(horizon);
    d.reactive_power = Eigen::ArrayXd::Zero(horizon);
    d.sleeping_part = Eigen::ArrayXd::Zero(horizon);

    for (int h = t + 1; h < horizon; ++h)
        d.sleeping_part(h) = sleeping_load_estimate(cfg.appliances, st.asleep, h, t);
    for (const AwakeAppliance& aa : st.active)
        for (int h = std::max(t, aa.wake_slot); h < horizon; ++h)
            d.active_power(h) += aa.profile(h);
    d.active_power += d.sleeping_part;
    d.reactive_power = d.active_power * cfg.reactive_ratio();
    return d;
}

ApplianceFeasibleSet awake_feasible_set(const AggregatorConfig& cfg, const AwakeAppliance& aa,
                                        int t, int horizon_len) {
    const Appliance& app = cfg.appliances[aa.index];
    ApplianceFeasibleSet fs = feasible_set(app, aa.window, t, aa.energy_used, horizon_len);
    // under complete information an appliance can be scheduled before it is
    // awake-known; it still cannot consume before its wake slot
    for (int h = t; h < std::min(aa.wake_slot, horizon_len); ++h) {
        fs.lo(h) = 0.0;
        fs.hi(h) = 0.0;
    }
    if (fs.has_band) {
        std::erase_if(fs.band_slots, [&](int h) { return h < aa.wake_slot; });
    }
    return fs;
}

namespace {

// One appliance's concave objective: utility minus payment.
struct ApplianceProblem {
    const Appliance* app;
    const std::vector<int>* window;
    int t;
    double energy_used;
    const Eigen::ArrayXd* price;

    double value(const Eigen::ArrayXd& x) const {
        double pay = 0.0;
        for (int h = t; h < x.size(); ++h) pay += (*price)(h)*x(h);
        return utility(*app, *window, x, t, energy_used) - pay;
    }
    Eigen::ArrayXd gradient(const Eigen::ArrayXd& x) const {
        Eigen::ArrayXd g = utility_gradient(*app, *window, x, t, energy_used);
        for (int h = t; h < x.size(); ++h) g(h) -= (*price)(h);
        return g;
    }
    // local curvature bound used to scale the step
    double curvature(const Eigen::ArrayXd& x) const {
        double L = 1e-9;
        for (int h = t; h < x.size(); ++h) {
            double arg;
            double scale;
            if (app->type == ApplianceType::window_only) {
                continue;  // handled below via the total
            }
            const bool in_w =
                std::find(window->begin(), window->end(), h) != window->end();
            if (in_w) {
                arg = x(h) - app->power_min(h);
                scale = (app->type == ApplianceType::window_preferred &&
                         app->utility_scale_slots.size() == x.size())
                            ? app->utility_scale_slots(h)
                            : app->utility_scale;
            } else {
                arg = x(h);
                scale = app->utility_scale_out;
            }
            L = std::max(L, scale * kernel_curvature(arg));
        }
        if (app->type == ApplianceType::window_only) {
            double total = energy_used;
            for (int h : *window)
                if (h >= t) total += x(h);
            const double n = static_cast<double>(window->size());
            L = std::max(L, app->utility_scale * kernel_curvature(total - app->energy_min) * n);
        }
        return L;
    }

  private:
    double kernel_curvature(double arg) const {
        switch (app->kernel) {
            case UtilityKernel::log1p: {
                const double d = 1.0 + std::max(arg, 0.0);
                return 1.0 / (d * d);
            }
            case UtilityKernel::sqrt_shift: {
                const double d = std::max(arg, 0.0) + kSqrtShiftEps;
                return 0.25 / (d * std::sqrt(d));
            }
        }
        return 1.0;
    }
};

}  // namespace

SolveStats aggregator_local_solve(AggregatorState& st, const AggregatorConfig& cfg,
                                  const Eigen::ArrayXd& price_active, int t,
                                  const InnerSolverConfig& inner) {
    SolveStats stats;
    const int horizon = static_cast<int>(price_active.size());

    for (AwakeAppliance& aa : st.active) {
        const Appliance& app = cfg.appliances[aa.index];
        ApplianceFeasibleSet fs = awake_feasible_set(cfg, aa, t, horizon);
        ApplianceProblem prob{&app, &aa.window, t, aa.energy_used, &price_active};

        Eigen::ArrayXd x = aa.profile;
        project_feasible(fs, x);

        const double base =
            inner.step_base > 0.0 ? inner.step_base : 1.0 / std::max(1.0, prob.curvature(x));

        Eigen::ArrayXd best = x;
        double best_value = prob.value(x);
        double residual = 0.0;
        int k = 1;
        for (; k <= inner.max_iters; ++k) {
            const Eigen::ArrayXd g = prob.gradient(x);

            // fixed-point gap with the base step, normalized back to a
            // gradient scale; doubles as the stopping test
            Eigen::ArrayXd probe = x + base * g;
            project_feasible(fs, probe);
            residual = 0.0;
            for (int h = t; h < horizon; ++h)
                residual = std::max(residual, std::abs(probe(h) - x(h)));
            residual /= base;
            if (residual <= inner.tol) break;

            const double step = base / std::sqrt(static_cast<double>(k));
            x += step * g;
            project_feasible(fs, x);

            const double v = prob.value(x);
            if (v > best_value) {
                best_value = v;
                best = x;
            }
        }
        if (prob.value(x) >= best_value) best = x;
        aa.profile = best;
        stats.iterations = std::max(stats.iterations, std::min(k, inner.max_iters));
        stats.residual = std::max(stats.residual, residual);
        if (residual > inner.tol) stats.converged = false;
    }
    return stats;
}

double aggregator_profit(const AggregatorState& st, const AggregatorConfig& cfg,
                         const Eigen::ArrayXd& price_active, int t) {
    const DemandProfile d =
        demand_profile(st, cfg, t, static_cast<int>(price_active.size()));
    double u = 0.0;
    for (const AwakeAppliance& aa : st.active)
        u += utility(cfg.appliances[aa.index], aa.window, aa.profile, t, aa.energy_used);
    double pay = 0.0;
    for (int h = t; h < d.active_power.size(); ++h) pay += d.active_power(h) * price_active(h);
    return u - pay;
}

std::vector<Eigen::ArrayXd> benchmark_point(const AggregatorState& st,
                                            const AggregatorConfig& cfg, int t) {
    std::vector<Eigen::ArrayXd> out;
    out.reserve(st.active.size());
    for (const AwakeAppliance& aa : st.active) {
        const Appliance& app = cfg.appliances[aa.index];
        const int horizon = static_cast<int>(app.power_max.size());
        Eigen::ArrayXd x = Eigen::ArrayXd::Zero(horizon);
        // run at nominal power from the wake slot; remaining energy only
        double remaining = app.has_energy_band()
                               ? std::max(0.0, app.energy_nominal - aa.energy_used)
                               : app.power_nominal * app.duration_slots();
        for (int h = std::max(t, aa.wake_slot); h < horizon && remaining > 1e-15; ++h) {
            const double e = std::min(app.power_nominal, remaining);
            x(h) = e;
            remaining -= e;
        }
        ApplianceFeasibleSet fs = awake_feasible_set(cfg, aa, t, horizon);
        project_feasible(fs, x);
        out.push_back(std::move(x));
    }
    return out;
}

double profiles_profit(const AggregatorState& st, const AggregatorConfig& cfg,
                       const std::vector<Eigen::ArrayXd>& profiles,
                       const Eigen::ArrayXd& price_active, int t) {
    const int horizon = static_cast<int>(price_active.size());
    double u = 0.0;
    Eigen::ArrayXd load = Eigen::ArrayXd::Zero(horizon);
    for (size_t i = 0; i < st.active.size(); ++i) {
        const AwakeAppliance& aa = st.active[i];
        u += utility(cfg.appliances[aa.index], aa.window, profiles[i], t, aa.energy_used);
        for (int h = t; h < horizon; ++h) load(h) += profiles[i](h);
    }
    for (int h = t + 1; h < horizon; ++h)
        load(h) += sleeping_load_estimate(cfg.appliances, st.asleep, h, t);
    double pay = 0.0;
    for (int h = t; h < horizon; ++h) pay += load(h) * price_active(h);
    return u - pay;
}

}  // namespace detrade
