#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "detrade/appliance.hpp"

namespace detrade {

enum class BusKind { aggregator, generator, slack, virtual_aggregator };

std::string bus_kind_name(BusKind k);
BusKind bus_kind_from_name(const std::string& name);

struct Bus {
    int id = 0;  // external id, unique, arbitrary
    BusKind kind = BusKind::virtual_aggregator;
    double shunt_g = 0.0;  // shunt conductance, pu
    double shunt_b = 0.0;  // shunt susceptance, pu
    double v_min = 0.95, v_max = 1.05;
};

struct Branch {
    int from = 0, to = 0;  // external bus ids
    double resistance = 0.0, reactance = 0.0;  // pu
    double s_max = 1.0;                        // apparent-power limit, pu
    double polygon_angle = kDefaultPolygonAngle;  // central angle of the polygon cut

    static constexpr double kDefaultPolygonAngle = 0.5235987755982988;  // pi/6, 12-gon
    int polygon_sides() const;
};

// Zero-impedance split branches get this reactance so the admittance matrix
// stays finite; documented in the scenario format.
constexpr double kSplitBranchReactance = 1e-6;

struct NetworkModel {
    std::vector<Bus> buses;
    std::vector<Branch> branches;

    int size() const { return static_cast<int>(buses.size()); }
    int index_of(int bus_id) const;  // dense 0-based index
    int slack_index() const;
    bool connected() const;
};

struct AggregatorConfig {
    int bus = 0;
    double power_factor = 1.0;
    std::vector<Appliance> appliances;

    double reactive_ratio() const;  // sqrt((1-PF^2)/PF^2)
};

struct GeneratorConfig {
    int bus = 0;
    double cost_quadratic = 0.0, cost_linear = 0.0, cost_fixed = 0.0;
    double p_conv_min = 0.0, p_conv_max = 0.0;
    double q_conv_min = 0.0, q_conv_max = 0.0;
    Eigen::ArrayXd ren_min, ren_max;  // per-slot renewable bounds; empty = none

    bool has_renewable() const { return ren_max.size() > 0 && ren_max.maxCoeff() > 0.0; }
    double cost(double p) const {
        return cost_quadratic * p * p + cost_linear * p + cost_fixed;
    }
    double marginal_cost(double p) const { return 2.0 * cost_quadratic * p + cost_linear; }
};

struct StepSchedule {
    std::string schedule = "inv_sqrt";  // step(k) = base * scale / sqrt(k)
    double base = 1.0;
    double primal_scale = 1e-4;  // multiplies the (theta, v) step
    double dual_scale = 1.0;     // multiplies the multiplier step

    double primal(int k) const { return base * primal_scale / std::sqrt(double(k)); }
    double dual(int k) const { return base * dual_scale / std::sqrt(double(k)); }
};

struct InnerSolverConfig {
    int max_iters = 5000;
    double tol = 1e-6;
    double step_base = 0.0;  // 0 = per-appliance automatic scaling
};

struct MarketConfig {
    int horizon = 24;
    double slot_hours = 1.0;
    double risk_weight = 0.0;  // DNO weight on renewable shortage risk
    double tol_theta = 1e-2, tol_vmag = 1e-2;
    StepSchedule step;
    uint64_t seed = 1;
    int max_iters = 2000;
    InnerSolverConfig inner;
};

struct Scenario {
    double base_mva = 10.0, base_kv = 4.16;
    NetworkModel network;
    std::vector<AggregatorConfig> aggregators;
    std::vector<GeneratorConfig> generators;
    MarketConfig market;

    int entity_count() const {
        return static_cast<int>(aggregators.size() + generators.size());
    }
    const AggregatorConfig* aggregator_at(int bus_id) const;
    const GeneratorConfig* generator_at(int bus_id) const;
};

class ScenarioError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct BusRemap {
    // old bus id -> bus id now hosting the generator after a split;
    // identity entries are omitted.
    std::map<int, int> generator_moves;
    bool identity() const { return generator_moves.empty(); }
};

struct NormalizeResult {
    Scenario scenario;
    BusRemap remap;
};

// Enforces exactly one entity per non-slack bus: co-located
// aggregator+generator buses are split through a near-zero-impedance branch,
// empty buses gain a virtual aggregator with no appliances. Idempotent.
NormalizeResult normalize_buses(const Scenario& raw);

// Parse + validate + normalize. Throws ScenarioError with a field locus.
Scenario load_scenario(const std::string& path);
Scenario parse_scenario(const std::string& json_text, const std::string& origin = "<string>");

std::string scenario_to_json(const Scenario& s);
void save_scenario(const Scenario& s, const std::string& path);

// Validation of everything except the one-entity-per-bus rule (which
// normalize_buses establishes); called by load_scenario after normalizing.
void validate_scenario(const Scenario& s);

}  // namespace detrade
