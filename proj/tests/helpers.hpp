#pragma once

#include <Eigen/Dense>
#include <string>

#include "detrade/grid.hpp"

namespace detrade::testing {

inline Bus make_bus(int id, BusKind kind, double v_min = 0.9, double v_max = 1.1) {
    Bus b;
    b.id = id;
    b.kind = kind;
    b.v_min = kind == BusKind::slack ? 1.0 : v_min;
    b.v_max = kind == BusKind::slack ? 1.0 : v_max;
    return b;
}

inline Branch make_branch(int from, int to, double r, double x, double s_max = 10.0) {
    Branch br;
    br.from = from;
    br.to = to;
    br.resistance = r;
    br.reactance = x;
    br.s_max = s_max;
    return br;
}

inline Appliance make_appliance(const std::string& id, ApplianceType type, int horizon,
                                int win_start, int win_len, double e_max, double e_min_total,
                                double e_max_total, double kappa) {
    Appliance a;
    a.id = id;
    a.type = type;
    a.horizon.start = win_start;
    a.horizon.length = win_len;
    a.power_min = Eigen::ArrayXd::Zero(horizon);
    a.power_max = Eigen::ArrayXd::Constant(horizon, e_max);
    a.power_nominal = e_max * 0.8;
    a.energy_nominal = a.power_nominal * std::min(2, win_len);
    if (type != ApplianceType::flexible) {
        a.energy_min = e_min_total;
        a.energy_max = e_max_total;
    }
    a.utility_scale = kappa;
    a.utility_scale_out = 0.05 * kappa;
    a.wake_prob = Eigen::ArrayXd::Zero(horizon);
    a.wake_prob(0) = 1.0;
    return a;
}

// slack -- aggregator over one line; the smallest legal network
inline Scenario two_bus_scenario(double r = 0.0, double x = 0.1, int horizon = 2) {
    Scenario s;
    s.network.buses = {make_bus(1, BusKind::slack), make_bus(2, BusKind::aggregator)};
    s.network.branches = {make_branch(1, 2, r, x)};
    AggregatorConfig a;
    a.bus = 2;
    a.power_factor = 1.0;
    a.appliances.push_back(
        make_appliance("a0", ApplianceType::window_only, horizon, 0, horizon, 0.5, 0.2, 0.8, 10.0));
    s.aggregators.push_back(a);
    s.market.horizon = horizon;
    s.market.seed = 1;
    return s;
}

}  // namespace detrade::testing
