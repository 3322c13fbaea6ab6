#include "detrade/grid.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <queue>
#include <set>
#include <sstream>

#include <json.hpp>

namespace detrade {

using nlohmann::json;

std::string bus_kind_name(BusKind k) {
    switch (k) {
        case BusKind::aggregator: return "aggregator";
        case BusKind::generator: return "generator";
        case BusKind::slack: return "slack";
        case BusKind::virtual_aggregator: return "virtual_aggregator";
    }
    return "?";
}

BusKind bus_kind_from_name(const std::string& name) {
    if (name == "aggregator") return BusKind::aggregator;
    if (name == "generator") return BusKind::generator;
    if (name == "slack") return BusKind::slack;
    if (name == "virtual_aggregator") return BusKind::virtual_aggregator;
    throw ScenarioError("unknown bus kind: " + name);
}

int Branch::polygon_sides() const {
    const double sides = 2.0 * std::numbers::pi / polygon_angle;
    return static_cast<int>(std::lround(sides));
}

int NetworkModel::index_of(int bus_id) const {
    for (int i = 0; i < size(); ++i)
        if (buses[i].id == bus_id) return i;
    throw ScenarioError("unknown bus id " + std::to_string(bus_id));
}

int NetworkModel::slack_index() const {
    for (int i = 0; i < size(); ++i)
        if (buses[i].kind == BusKind::slack) return i;
    throw ScenarioError("network has no slack bus");
}

bool NetworkModel::connected() const {
    if (buses.empty()) return true;
    std::vector<std::vector<int>> adj(buses.size());
    for (const Branch& br : branches) {
        const int a = index_of(br.from), b = index_of(br.to);
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    std::vector<bool> seen(buses.size(), false);
    std::queue<int> q;
    q.push(0);
    seen[0] = true;
    int count = 1;
    while (!q.empty()) {
        const int u = q.front();
        q.pop();
        for (int v : adj[u])
            if (!seen[v]) {
                seen[v] = true;
                ++count;
                q.push(v);
            }
    }
    return count == size();
}

double AggregatorConfig::reactive_ratio() const {
    const double pf2 = power_factor * power_factor;
    return std::sqrt(std::max(0.0, (1.0 - pf2) / pf2));
}

const AggregatorConfig* Scenario::aggregator_at(int bus_id) const {
    for (const auto& a : aggregators)
        if (a.bus == bus_id) return &a;
    return nullptr;
}

const GeneratorConfig* Scenario::generator_at(int bus_id) const {
    for (const auto& g : generators)
        if (g.bus == bus_id) return &g;
    return nullptr;
}

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
    throw ScenarioError(where + ": " + what);
}

const json& require(const json& j, const char* key, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) fail(where, std::string("missing field '") + key + "'");
    return *it;
}

double num(const json& j, const char* key, const std::string& where) {
    const json& v = require(j, key, where);
    if (!v.is_number()) fail(where, std::string("field '") + key + "' must be a number");
    return v.get<double>();
}

double num_or(const json& j, const char* key, double fallback) {
    auto it = j.find(key);
    return it == j.end() ? fallback : it->get<double>();
}

int integer(const json& j, const char* key, const std::string& where) {
    const json& v = require(j, key, where);
    if (!v.is_number_integer()) fail(where, std::string("field '") + key + "' must be an integer");
    return v.get<int>();
}

// Per-slot fields accept either a scalar (broadcast) or a length-H array.
Eigen::ArrayXd slot_array(const json& j, const char* key, int horizon, const std::string& where,
                          double fallback, bool required) {
    auto it = j.find(key);
    if (it == j.end()) {
        if (required) fail(where, std::string("missing field '") + key + "'");
        return Eigen::ArrayXd::Constant(horizon, fallback);
    }
    if (it->is_number()) return Eigen::ArrayXd::Constant(horizon, it->get<double>());
    if (!it->is_array() || static_cast<int>(it->size()) != horizon)
        fail(where, std::string("field '") + key + "' must be a number or an array of length " +
                        std::to_string(horizon));
    Eigen::ArrayXd out(horizon);
    for (int h = 0; h < horizon; ++h) out(h) = (*it)[h].get<double>();
    return out;
}

json to_json(const Eigen::ArrayXd& a) {
    json out = json::array();
    for (int i = 0; i < a.size(); ++i) out.push_back(a(i));
    return out;
}

Appliance parse_appliance(const json& j, int horizon, const std::string& where) {
    Appliance a;
    a.id = require(j, "id", where).get<std::string>();
    const std::string locus = where + ".appliance '" + a.id + "'";
    const int type = integer(j, "type", locus);
    if (type < 1 || type > 3) fail(locus, "type must be 1, 2 or 3");
    a.type = static_cast<ApplianceType>(type);

    const json& w = require(j, "window", locus);
    a.horizon.wake_relative = w.value("wake_relative", false);
    a.horizon.length = integer(w, "length", locus + ".window");
    a.horizon.start = a.horizon.wake_relative ? 0 : integer(w, "start", locus + ".window") - 1;
    if (a.horizon.length < 1) fail(locus, "window length must be >= 1");

    a.power_min = slot_array(j, "power_min", horizon, locus, 0.0, false);
    a.power_max = slot_array(j, "power_max", horizon, locus, 0.0, true);
    a.power_nominal = num(j, "power_nominal", locus);
    a.energy_nominal = num(j, "energy_nominal", locus);
    if (a.type != ApplianceType::flexible) {
        a.energy_min = num(j, "energy_min", locus);
        a.energy_max = num(j, "energy_max", locus);
    } else if (j.contains("energy_min") || j.contains("energy_max")) {
        fail(locus, "type 3 appliances carry no total-energy bounds");
    }
    a.utility_scale = num(j, "utility_scale", locus);
    a.utility_scale_out = num_or(j, "utility_scale_out", 0.0);
    if (j.contains("utility_scale_slots"))
        a.utility_scale_slots = slot_array(j, "utility_scale_slots", horizon, locus, 0.0, true);
    a.kernel = kernel_from_name(j.value("kernel", std::string("log1p")));

    const json& p = require(j, "wake_prob", locus);
    if (!p.is_array() || static_cast<int>(p.size()) != horizon)
        fail(locus, "wake_prob must be an array of length " + std::to_string(horizon));
    a.wake_prob.resize(horizon);
    for (int h = 0; h < horizon; ++h) a.wake_prob(h) = p[h].get<double>();
    return a;
}

json appliance_to_json(const Appliance& a) {
    json j;
    j["id"] = a.id;
    j["type"] = static_cast<int>(a.type);
    json w;
    w["length"] = a.horizon.length;
    w["wake_relative"] = a.horizon.wake_relative;
    if (!a.horizon.wake_relative) w["start"] = a.horizon.start + 1;
    j["window"] = w;
    j["power_min"] = to_json(a.power_min);
    j["power_max"] = to_json(a.power_max);
    j["power_nominal"] = a.power_nominal;
    j["energy_nominal"] = a.energy_nominal;
    if (a.type != ApplianceType::flexible) {
        j["energy_min"] = a.energy_min;
        j["energy_max"] = a.energy_max;
    }
    j["utility_scale"] = a.utility_scale;
    j["utility_scale_out"] = a.utility_scale_out;
    if (a.utility_scale_slots.size() > 0)
        j["utility_scale_slots"] = to_json(a.utility_scale_slots);
    j["kernel"] = kernel_name(a.kernel);
    j["wake_prob"] = to_json(a.wake_prob);
    return j;
}

}  // namespace

Scenario parse_scenario(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ScenarioError(origin + ": " + e.what());
    }

    Scenario s;
    const json& base = require(j, "base", origin);
    s.base_mva = num(base, "mva", origin + ".base");
    s.base_kv = num(base, "kv", origin + ".base");

    const json& market = require(j, "market", origin);
    s.market.horizon = integer(market, "horizon", origin + ".market");
    s.market.slot_hours = num_or(market, "slot_hours", 1.0);
    s.market.risk_weight = num(market, "risk_weight", origin + ".market");
    s.market.tol_theta = num(market, "tol_theta", origin + ".market");
    s.market.tol_vmag = num(market, "tol_vmag", origin + ".market");
    s.market.seed = require(market, "seed", origin + ".market").get<uint64_t>();
    s.market.max_iters = market.value("max_iters", 2000);
    if (market.contains("step")) {
        const json& st = market["step"];
        s.market.step.schedule = st.value("schedule", std::string("inv_sqrt"));
        if (s.market.step.schedule != "inv_sqrt")
            fail(origin + ".market.step", "unknown schedule '" + s.market.step.schedule + "'");
        s.market.step.base = num_or(st, "base", 1.0);
        s.market.step.primal_scale = num_or(st, "primal_scale", 1e-4);
        s.market.step.dual_scale = num_or(st, "dual_scale", 1.0);
    }
    if (market.contains("inner")) {
        const json& in = market["inner"];
        s.market.inner.max_iters = in.value("max_iters", 5000);
        s.market.inner.tol = num_or(in, "tol", 1e-6);
        s.market.inner.step_base = num_or(in, "step_base", 0.0);
    }

    const json& net = require(j, "network", origin);
    for (const json& bj : require(net, "buses", origin + ".network")) {
        Bus b;
        b.id = integer(bj, "id", origin + ".bus");
        const std::string locus = origin + ".bus " + std::to_string(b.id);
        b.kind = bus_kind_from_name(require(bj, "kind", locus).get<std::string>());
        b.shunt_g = num_or(bj, "shunt_g", 0.0);
        b.shunt_b = num_or(bj, "shunt_b", 0.0);
        b.v_min = num(bj, "v_min", locus);
        b.v_max = num(bj, "v_max", locus);
        s.network.buses.push_back(b);
    }
    for (const json& bj : require(net, "branches", origin + ".network")) {
        Branch br;
        br.from = integer(bj, "from", origin + ".branch");
        br.to = integer(bj, "to", origin + ".branch");
        const std::string locus = origin + ".branch " + std::to_string(br.from) + "-" +
                                  std::to_string(br.to);
        br.resistance = num(bj, "resistance", locus);
        br.reactance = num(bj, "reactance", locus);
        br.s_max = num(bj, "s_max", locus);
        br.polygon_angle = num_or(bj, "polygon_angle", Branch::kDefaultPolygonAngle);
        s.network.branches.push_back(br);
    }

    for (const json& aj : require(j, "aggregators", origin)) {
        AggregatorConfig a;
        a.bus = integer(aj, "bus", origin + ".aggregator");
        const std::string locus = origin + ".aggregator at bus " + std::to_string(a.bus);
        a.power_factor = num(aj, "power_factor", locus);
        if (aj.contains("appliances"))
            for (const json& ap : aj["appliances"])
                a.appliances.push_back(parse_appliance(ap, s.market.horizon, locus));
        s.aggregators.push_back(a);
    }
    for (const json& gj : require(j, "generators", origin)) {
        GeneratorConfig g;
        g.bus = integer(gj, "bus", origin + ".generator");
        const std::string locus = origin + ".generator at bus " + std::to_string(g.bus);
        g.cost_quadratic = num(gj, "cost_quadratic", locus);
        g.cost_linear = num(gj, "cost_linear", locus);
        g.cost_fixed = num_or(gj, "cost_fixed", 0.0);
        g.p_conv_min = num(gj, "p_conv_min", locus);
        g.p_conv_max = num(gj, "p_conv_max", locus);
        g.q_conv_min = num(gj, "q_conv_min", locus);
        g.q_conv_max = num(gj, "q_conv_max", locus);
        if (gj.contains("ren_min") || gj.contains("ren_max")) {
            g.ren_min = slot_array(gj, "ren_min", s.market.horizon, locus, 0.0, true);
            g.ren_max = slot_array(gj, "ren_max", s.market.horizon, locus, 0.0, true);
        }
        s.generators.push_back(g);
    }
    return s;
}

namespace {

void validate_structure(const Scenario& s) {
    const MarketConfig& m = s.market;
    if (m.horizon < 1) fail("market", "horizon must be >= 1");
    if (m.tol_theta <= 0 || m.tol_vmag <= 0) fail("market", "tolerances must be positive");
    if (m.risk_weight < 0) fail("market", "risk_weight must be nonnegative");

    int slack_count = 0;
    std::set<int> ids;
    for (const Bus& b : s.network.buses) {
        const std::string locus = "bus " + std::to_string(b.id);
        if (!ids.insert(b.id).second) fail(locus, "duplicate bus id");
        if (b.kind == BusKind::slack) ++slack_count;
        if (b.v_min <= 0) fail(locus, "v_min must be positive");
        if (b.v_min > b.v_max) fail(locus, "v_min must not exceed v_max");
    }
    if (slack_count != 1)
        fail("network", "exactly one slack bus required, found " + std::to_string(slack_count));

    for (const Branch& br : s.network.branches) {
        const std::string locus =
            "branch " + std::to_string(br.from) + "-" + std::to_string(br.to);
        if (!ids.count(br.from) || !ids.count(br.to)) fail(locus, "endpoint bus does not exist");
        if (br.resistance < 0) fail(locus, "resistance must be nonnegative");
        const bool zero_split = br.resistance == 0.0 && br.reactance == 0.0;
        if (!zero_split && br.reactance <= 0) fail(locus, "reactance must be positive");
        if (br.s_max <= 0) fail(locus, "s_max must be positive");
        const double sides = 2.0 * std::numbers::pi / br.polygon_angle;
        if (std::abs(sides - std::lround(sides)) > 1e-9 || std::lround(sides) < 4)
            fail(locus, "polygon_angle must divide 2*pi into an integer >= 4 number of sides");
    }

    // one entity per bus, same-kind duplicates are an error
    std::set<int> agg_buses, gen_buses;
    for (const AggregatorConfig& a : s.aggregators) {
        const std::string locus = "aggregator at bus " + std::to_string(a.bus);
        if (!ids.count(a.bus)) fail(locus, "bus does not exist");
        if (!agg_buses.insert(a.bus).second) fail(locus, "duplicate aggregator on one bus");
        if (a.power_factor <= 0 || a.power_factor > 1)
            fail(locus, "power_factor must be in (0, 1]");
        for (const Appliance& ap : a.appliances) {
            const std::string al = locus + ", appliance '" + ap.id + "'";
            for (int h = 0; h < ap.power_min.size(); ++h)
                if (ap.power_min(h) > ap.power_max(h) + 1e-12)
                    fail(al, "power_min exceeds power_max at slot " + std::to_string(h + 1));
            if (ap.has_energy_band() && ap.energy_min > ap.energy_max + 1e-12)
                fail(al, "energy_min exceeds energy_max");
            double mass = 0.0;
            for (int h = 0; h < ap.wake_prob.size(); ++h) {
                if (ap.wake_prob(h) < 0) fail(al, "wake_prob must be nonnegative");
                mass += ap.wake_prob(h);
            }
            if (mass > 1.0 + 1e-9) fail(al, "wake_prob mass exceeds 1");
            if (ap.utility_scale_out > 0.1 * ap.utility_scale + 1e-12)
                std::cerr << "warning: " << al
                          << ": out-of-window utility coefficient is not small relative to "
                             "the in-window one\n";
        }
    }
    for (const GeneratorConfig& g : s.generators) {
        const std::string locus = "generator at bus " + std::to_string(g.bus);
        if (!ids.count(g.bus)) fail(locus, "bus does not exist");
        if (!gen_buses.insert(g.bus).second) fail(locus, "duplicate generator on one bus");
        if (g.cost_quadratic < 0) fail(locus, "cost_quadratic must be nonnegative");
        if (g.p_conv_min > g.p_conv_max) fail(locus, "p_conv_min exceeds p_conv_max");
        if (g.q_conv_min > g.q_conv_max) fail(locus, "q_conv_min exceeds q_conv_max");
        if (g.ren_min.size() > 0) {
            for (int h = 0; h < g.ren_min.size(); ++h) {
                if (g.ren_min(h) < 0) fail(locus, "renewable bounds must be nonnegative");
                if (g.ren_min(h) > g.ren_max(h) + 1e-12)
                    fail(locus, "ren_min exceeds ren_max at slot " + std::to_string(h + 1));
            }
        }
    }

    const int slack_id = s.network.buses[s.network.slack_index()].id;
    if (agg_buses.count(slack_id) || gen_buses.count(slack_id))
        fail("bus " + std::to_string(slack_id), "slack bus cannot host an entity");
}

}  // namespace

void validate_scenario(const Scenario& s) {
    validate_structure(s);
    // post-normalization invariant: every non-slack bus hosts exactly one entity
    for (const Bus& b : s.network.buses) {
        if (b.kind == BusKind::slack) continue;
        const bool agg = s.aggregator_at(b.id) != nullptr;
        const bool gen = s.generator_at(b.id) != nullptr;
        if (agg == gen)
            fail("bus " + std::to_string(b.id),
                 agg ? "hosts both an aggregator and a generator" : "hosts no entity");
    }
}

NormalizeResult normalize_buses(const Scenario& raw) {
    if (!raw.network.connected()) throw ScenarioError("network: disconnected");

    NormalizeResult out;
    out.scenario = raw;
    Scenario& s = out.scenario;

    int next_id = 0;
    for (const Bus& b : s.network.buses) next_id = std::max(next_id, b.id);
    ++next_id;

    // split co-located aggregator+generator buses; the generator moves to a
    // new bus tied through a near-zero-impedance branch
    const size_t original_count = s.network.buses.size();
    for (size_t i = 0; i < original_count; ++i) {
        Bus& b = s.network.buses[i];
        if (b.kind == BusKind::slack) continue;
        if (s.aggregator_at(b.id) == nullptr || s.generator_at(b.id) == nullptr) continue;
        Bus gb = b;
        gb.id = next_id++;
        gb.kind = BusKind::generator;
        gb.shunt_g = gb.shunt_b = 0.0;
        for (GeneratorConfig& g : s.generators)
            if (g.bus == b.id) g.bus = gb.id;
        Branch split;
        split.from = b.id;
        split.to = gb.id;
        split.resistance = 0.0;
        split.reactance = kSplitBranchReactance;
        split.s_max = 1e3;
        s.network.branches.push_back(split);
        out.remap.generator_moves[b.id] = gb.id;
        s.network.buses.push_back(gb);  // invalidates b; loop bound is fixed above
    }

    for (Bus& b : s.network.buses) {
        if (b.kind == BusKind::slack) continue;
        const AggregatorConfig* agg = s.aggregator_at(b.id);
        const bool gen = s.generator_at(b.id) != nullptr;
        if (gen) {
            b.kind = BusKind::generator;
        } else if (agg == nullptr) {
            b.kind = BusKind::virtual_aggregator;
            AggregatorConfig va;
            va.bus = b.id;
            va.power_factor = 1.0;
            s.aggregators.push_back(va);
        } else {
            b.kind = agg->appliances.empty() ? BusKind::virtual_aggregator : BusKind::aggregator;
        }
    }
    return out;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError(path + ": cannot open file");
    std::stringstream ss;
    ss << in.rdbuf();
    Scenario raw = parse_scenario(ss.str(), path);
    validate_structure(raw);
    Scenario s = normalize_buses(raw).scenario;
    validate_scenario(s);
    return s;
}

std::string scenario_to_json(const Scenario& s) {
    json j;
    j["base"]["mva"] = s.base_mva;
    j["base"]["kv"] = s.base_kv;

    json buses = json::array();
    for (const Bus& b : s.network.buses) {
        json bj;
        bj["id"] = b.id;
        bj["kind"] = bus_kind_name(b.kind);
        bj["shunt_g"] = b.shunt_g;
        bj["shunt_b"] = b.shunt_b;
        bj["v_min"] = b.v_min;
        bj["v_max"] = b.v_max;
        buses.push_back(bj);
    }
    json branches = json::array();
    for (const Branch& br : s.network.branches) {
        json bj;
        bj["from"] = br.from;
        bj["to"] = br.to;
        bj["resistance"] = br.resistance;
        bj["reactance"] = br.reactance;
        bj["s_max"] = br.s_max;
        bj["polygon_angle"] = br.polygon_angle;
        branches.push_back(bj);
    }
    j["network"]["buses"] = buses;
    j["network"]["branches"] = branches;

    json aggs = json::array();
    for (const AggregatorConfig& a : s.aggregators) {
        json aj;
        aj["bus"] = a.bus;
        aj["power_factor"] = a.power_factor;
        json aps = json::array();
        for (const Appliance& ap : a.appliances) aps.push_back(appliance_to_json(ap));
        aj["appliances"] = aps;
        aggs.push_back(aj);
    }
    j["aggregators"] = aggs;

    json gens = json::array();
    for (const GeneratorConfig& g : s.generators) {
        json gj;
        gj["bus"] = g.bus;
        gj["cost_quadratic"] = g.cost_quadratic;
        gj["cost_linear"] = g.cost_linear;
        gj["cost_fixed"] = g.cost_fixed;
        gj["p_conv_min"] = g.p_conv_min;
        gj["p_conv_max"] = g.p_conv_max;
        gj["q_conv_min"] = g.q_conv_min;
        gj["q_conv_max"] = g.q_conv_max;
        if (g.ren_min.size() > 0) {
            gj["ren_min"] = to_json(g.ren_min);
            gj["ren_max"] = to_json(g.ren_max);
        }
        gens.push_back(gj);
    }
    j["generators"] = gens;

    json m;
    m["horizon"] = s.market.horizon;
    m["slot_hours"] = s.market.slot_hours;
    m["risk_weight"] = s.market.risk_weight;
    m["tol_theta"] = s.market.tol_theta;
    m["tol_vmag"] = s.market.tol_vmag;
    m["seed"] = s.market.seed;
    m["max_iters"] = s.market.max_iters;
    m["step"]["schedule"] = s.market.step.schedule;
    m["step"]["base"] = s.market.step.base;
    m["step"]["primal_scale"] = s.market.step.primal_scale;
    m["step"]["dual_scale"] = s.market.step.dual_scale;
    m["inner"]["max_iters"] = s.market.inner.max_iters;
    m["inner"]["tol"] = s.market.inner.tol;
    m["inner"]["step_base"] = s.market.inner.step_base;
    j["market"] = m;

    return j.dump(2) + "\n";
}

void save_scenario(const Scenario& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ScenarioError(path + ": cannot open for writing");
    out << scenario_to_json(s);
}

}  // namespace detrade
