#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "detrade/grid.hpp"
#include "detrade/linpf.hpp"
#include "helpers.hpp"

using namespace detrade;
using detrade::testing::make_appliance;
using detrade::testing::make_branch;
using detrade::testing::make_bus;

namespace {

const char* kMinimalScenario = R"({
  "base": {"mva": 10.0, "kv": 4.16},
  "network": {
    "buses": [
      {"id": 1, "kind": "slack", "v_min": 1.0, "v_max": 1.0},
      {"id": 2, "kind": "aggregator", "v_min": 0.95, "v_max": 1.05}
    ],
    "branches": [
      {"from": 1, "to": 2, "resistance": 0.01, "reactance": 0.05, "s_max": 1.0}
    ]
  },
  "aggregators": [
    {"bus": 2, "power_factor": 0.95, "appliances": [
      {"id": "ev", "type": 1, "window": {"start": 1, "length": 2},
       "power_min": 0.0, "power_max": 0.4, "power_nominal": 0.3, "energy_nominal": 0.6,
       "energy_min": 0.3, "energy_max": 0.6, "utility_scale": 10.0,
       "wake_prob": [1.0, 0.0]}
    ]}
  ],
  "generators": [],
  "market": {"horizon": 2, "risk_weight": 1.0, "tol_theta": 0.01, "tol_vmag": 0.01, "seed": 7}
})";

std::string write_temp(const std::string& text) {
    static int counter = 0;
    const std::string path =
        (std::filesystem::temp_directory_path() / ("detrade_grid_" + std::to_string(counter++) +
                                                   ".json"))
            .string();
    std::ofstream out(path);
    out << text;
    return path;
}

Scenario co_located_scenario() {
    Scenario s;
    s.network.buses = {make_bus(1, BusKind::slack), make_bus(2, BusKind::aggregator),
                       make_bus(3, BusKind::generator)};
    s.network.branches = {make_branch(1, 2, 0.01, 0.05), make_branch(2, 3, 0.02, 0.04)};
    AggregatorConfig a;
    a.bus = 2;
    a.power_factor = 0.95;
    s.aggregators.push_back(a);
    GeneratorConfig g;
    g.bus = 2;  // same bus as the aggregator
    g.p_conv_max = 0.5;
    g.cost_quadratic = 1.0;
    g.cost_linear = 2.0;
    s.generators.push_back(g);
    s.market.horizon = 2;
    return s;
}

}  // namespace

TEST_CASE("minimal scenario loads and validates") {
    const std::string path = write_temp(kMinimalScenario);
    Scenario s = load_scenario(path);
    CHECK(s.aggregators.size() == 1);
    CHECK(s.generators.empty());
    CHECK(s.network.size() == 2);
    CHECK(s.market.horizon == 2);
    CHECK(s.network.buses[s.network.slack_index()].id == 1);
    std::filesystem::remove(path);
}

TEST_CASE("parse and validation errors carry a locus") {
    SUBCASE("broken json") {
        const std::string path = write_temp("{ not json");
        CHECK_THROWS_AS(load_scenario(path), ScenarioError);
        std::filesystem::remove(path);
    }
    SUBCASE("two generators on one bus") {
        std::string text = kMinimalScenario;
        const std::string gens =
            R"("generators": [{"bus": 2, "cost_quadratic": 1, "cost_linear": 1,
                 "p_conv_min": 0, "p_conv_max": 1, "q_conv_min": 0, "q_conv_max": 0},
                {"bus": 2, "cost_quadratic": 1, "cost_linear": 1,
                 "p_conv_min": 0, "p_conv_max": 1, "q_conv_min": 0, "q_conv_max": 0}])";
        text.replace(text.find("\"generators\": []"), 17, gens);
        const std::string path = write_temp(text);
        CHECK_THROWS_WITH_AS(load_scenario(path),
                             doctest::Contains("duplicate generator on one bus"), ScenarioError);
        std::filesystem::remove(path);
    }
    SUBCASE("bad voltage bounds") {
        std::string text = kMinimalScenario;
        auto pos = text.find("\"v_min\": 0.95");
        text.replace(pos, 13, "\"v_min\": 1.95");
        const std::string path = write_temp(text);
        CHECK_THROWS_WITH_AS(load_scenario(path), doctest::Contains("v_min"), ScenarioError);
        std::filesystem::remove(path);
    }
}

TEST_CASE("normalize splits co-located entities through a tiny impedance") {
    Scenario raw = co_located_scenario();
    NormalizeResult norm = normalize_buses(raw);
    const Scenario& s = norm.scenario;

    CHECK(s.network.size() == 4);
    REQUIRE(norm.remap.generator_moves.count(2) == 1);
    const int new_bus = norm.remap.generator_moves.at(2);
    CHECK(s.generator_at(new_bus) != nullptr);
    CHECK(s.aggregator_at(2) != nullptr);

    bool found_split = false;
    for (const Branch& br : s.network.branches)
        if (br.to == new_bus || br.from == new_bus) {
            found_split = true;
            CHECK(br.resistance == 0.0);
            CHECK(br.reactance == doctest::Approx(kSplitBranchReactance));
        }
    CHECK(found_split);
    CHECK_NOTHROW(validate_scenario(s));
}

TEST_CASE("normalize adds virtual aggregators to empty buses") {
    Scenario raw = co_located_scenario();
    raw.network.buses.push_back(make_bus(4, BusKind::aggregator));
    raw.network.branches.push_back(make_branch(3, 4, 0.01, 0.02));
    NormalizeResult norm = normalize_buses(raw);
    const AggregatorConfig* va = norm.scenario.aggregator_at(4);
    REQUIRE(va != nullptr);
    CHECK(va->appliances.empty());
    for (const Bus& b : norm.scenario.network.buses)
        if (b.id == 4) CHECK(b.kind == BusKind::virtual_aggregator);
}

TEST_CASE("normalize is idempotent") {
    NormalizeResult once = normalize_buses(co_located_scenario());
    NormalizeResult twice = normalize_buses(once.scenario);
    CHECK(twice.remap.identity());
    CHECK(twice.scenario.network.size() == once.scenario.network.size());
    CHECK(scenario_to_json(twice.scenario) == scenario_to_json(once.scenario));
}

TEST_CASE("normalize rejects disconnected networks") {
    Scenario raw = co_located_scenario();
    raw.network.buses.push_back(make_bus(9, BusKind::aggregator));  // no branch to it
    CHECK_THROWS_WITH_AS(normalize_buses(raw), doctest::Contains("disconnected"), ScenarioError);
}

TEST_CASE("split network behaves like the merged bus") {
    // identical injections: the split pair must carry the same voltages as a
    // single merged bus, to within the tiny split impedance
    Scenario raw = co_located_scenario();
    Scenario split = normalize_buses(raw).scenario;

    // merged model: treat bus 2 as one bus with the combined injection
    NetworkModel merged;
    merged.buses = {make_bus(1, BusKind::slack), make_bus(2, BusKind::aggregator),
                    make_bus(3, BusKind::generator)};
    merged.branches = {make_branch(1, 2, 0.01, 0.05), make_branch(2, 3, 0.02, 0.04)};

    AdmittanceBlocks mb = assemble_lambda(merged);
    FlowSolver msolve(mb, 0);
    Eigen::VectorXd p = Eigen::VectorXd::Zero(3), q = Eigen::VectorXd::Zero(3);
    p(1) = -0.08 + 0.05;  // load plus co-located generation
    q(1) = -0.02;
    p(2) = 0.03;
    Eigen::VectorXd th_m, v_m;
    msolve.solve(p, q, th_m, v_m);

    AdmittanceBlocks sb = assemble_lambda(split.network);
    FlowSolver ssolve(sb, split.network.slack_index());
    const int nb = split.network.size();
    Eigen::VectorXd ps = Eigen::VectorXd::Zero(nb), qs = Eigen::VectorXd::Zero(nb);
    ps(split.network.index_of(2)) = -0.08;
    qs(split.network.index_of(2)) = -0.02;
    const int moved = normalize_buses(raw).remap.generator_moves.at(2);
    ps(split.network.index_of(moved)) = 0.05;
    ps(split.network.index_of(3)) = 0.03;
    Eigen::VectorXd th_s, v_s;
    ssolve.solve(ps, qs, th_s, v_s);

    CHECK(std::abs(v_s(split.network.index_of(2)) - v_m(1)) < 1e-6);
    CHECK(std::abs(v_s(split.network.index_of(3)) - v_m(2)) < 1e-6);
    CHECK(std::abs(th_s(split.network.index_of(2)) - th_m(1)) < 1e-6);
}

TEST_CASE("scenario json round trip is exact") {
    const std::string path = write_temp(kMinimalScenario);
    Scenario s = load_scenario(path);
    std::filesystem::remove(path);

    const std::string path2 = write_temp(scenario_to_json(s));
    Scenario s2 = load_scenario(path2);
    std::filesystem::remove(path2);
    CHECK(scenario_to_json(s) == scenario_to_json(s2));
    CHECK(s2.market.seed == s.market.seed);
    CHECK(s2.aggregators[0].appliances[0].power_max(0) ==
          s.aggregators[0].appliances[0].power_max(0));
}

TEST_CASE("polygon angle must divide the full circle") {
    Scenario raw = co_located_scenario();
    raw.network.branches[0].polygon_angle = 1.0;  // 2*pi not a multiple
    CHECK_THROWS_WITH_AS(validate_scenario(normalize_buses(raw).scenario),
                         doctest::Contains("polygon_angle"), ScenarioError);
}
