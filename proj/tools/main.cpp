#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "detrade/grid.hpp"
#include "detrade/market.hpp"
#include "detrade/oracle.hpp"
#include "detrade/report.hpp"
#include "detrade/scenario_gen.hpp"

namespace {

using namespace detrade;

struct CommonArgs {
    std::string scenario_path;
    std::string out_dir;
    std::string mode = "uncertainty";
    std::string wake_log;
    uint64_t seed = 0;
    bool seed_set = false;
    int threads = 1;
    int max_iters = 0;
    bool dump_lambda = false;
    bool dump_signals = false;
    std::vector<double> sweep_vartheta;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_mode = true) {
    cmd->add_option("--scenario", args.scenario_path, "scenario JSON file")->required();
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--seed", args.seed, "seed override")->each([&](const std::string&) {
        args.seed_set = true;
    });
    cmd->add_option("--threads", args.threads, "worker threads for agent solves");
    cmd->add_option("--max-iters", args.max_iters, "iteration cap override per slot");
    cmd->add_flag("--dump-lambda", args.dump_lambda, "write the flow operator to lambda.csv");
    cmd->add_flag("--dump-signals", args.dump_signals, "write per-iteration signals.csv");
    cmd->add_option("--wake-log", args.wake_log, "replay an exogenous wake-event CSV");
    if (with_mode)
        cmd->add_option("--mode", args.mode, "uncertainty | complete | benchmark")
            ->check(CLI::IsMember({"uncertainty", "complete", "benchmark"}));
}

RunOptions to_options(const CommonArgs& args) {
    RunOptions opts;
    opts.mode = run_mode_from_name(args.mode);
    opts.threads = args.threads;
    opts.max_iters = args.max_iters;
    if (args.seed_set) opts.seed = args.seed;
    opts.out_dir = args.out_dir;
    opts.dump_lambda = args.dump_lambda;
    opts.dump_signals = args.dump_signals;
    opts.wake_log = args.wake_log;
    return opts;
}

int finish_run(const SimulationResult& result, const Scenario& s, const RunOptions& opts,
               const std::string& scenario_path) {
    const std::string name = std::filesystem::path(scenario_path).stem().string();
    if (!opts.out_dir.empty()) write_outputs(result, s, opts, name, opts.out_dir);
    std::printf("%s: %s, %d slots, %s, welfare %.6g, aggregate PAR %.4f, %.0f ms\n",
                name.c_str(), run_mode_name(opts.mode).c_str(),
                static_cast<int>(result.slots.size()),
                result.all_converged ? "all slots converged" : "NOT all slots converged",
                result.welfare, result.par_aggregate, result.wall_ms_total);
    return result.all_converged ? 0 : 2;
}

int cmd_run(const CommonArgs& args) {
    Scenario s = load_scenario(args.scenario_path);
    RunOptions opts = to_options(args);

    if (!args.sweep_vartheta.empty()) {
        int rc = 0;
        for (double vartheta : args.sweep_vartheta) {
            Scenario sv = s;
            sv.market.risk_weight = vartheta;
            RunOptions o = opts;
            if (!opts.out_dir.empty())
                o.out_dir = opts.out_dir + "/vartheta_" + std::to_string(vartheta);
            std::printf("-- risk weight %.6g --\n", vartheta);
            rc = std::max(rc, finish_run(run_horizon(sv, o), sv, o, args.scenario_path));
        }
        return rc;
    }
    return finish_run(run_horizon(s, opts), s, opts, args.scenario_path);
}

int cmd_benchmark(const CommonArgs& args) {
    Scenario s = load_scenario(args.scenario_path);
    RunOptions opts = to_options(args);
    opts.mode = RunMode::benchmark;
    return finish_run(benchmark_run(s, opts), s, opts, args.scenario_path);
}

int cmd_oracle(const CommonArgs& args) {
    Scenario s = load_scenario(args.scenario_path);
    RunOptions opts = to_options(args);
    SimulationResult result = oracle_run(s, opts);
    return finish_run(result, s, opts, args.scenario_path);
}

int cmd_compare(const CommonArgs& args) {
    Scenario s = load_scenario(args.scenario_path);
    RunOptions opts = to_options(args);
    opts.capture_equilibria = true;
    SimulationResult market = run_horizon(s, opts);

    double max_dev = 0.0, max_obj_rel = 0.0, max_kkt = 0.0;
    for (const auto& eq : market.equilibria) {
        const int t = eq.view.t;
        CentralSolution central = solve_central(s, eq.view);
        // committed-injection deviation at the current slot
        for (const Bus& bus : s.network.buses) {
            const int b = s.network.index_of(bus.id);
            double m_p = 0.0, c_p = 0.0;
            if (s.generator_at(bus.id) != nullptr) {
                m_p = eq.candidate.p_conv(b, t) + eq.candidate.p_ren(b, t);
                c_p = central.p_conv(b, t) + central.p_ren(b, t);
            } else if (s.aggregator_at(bus.id) != nullptr) {
                for (size_t it = 0; it < eq.view.awake.size(); ++it)
                    if (eq.view.awake[it].bus == bus.id) {
                        m_p -= eq.candidate.appliance_profiles[it](t);
                        c_p -= central.appliance_profiles[it](t);
                    }
            }
            max_dev = std::max(max_dev, std::abs(m_p - c_p));
        }
        const KktReport rep = kkt_check(s, eq.view, eq.candidate);
        max_kkt = std::max(max_kkt, rep.max_residual());

        // welfare of the market point vs the central optimum
        EquilibriumCandidate central_cand;
        central_cand.theta = central.theta;
        central_cand.vmag = central.vmag;
        central_cand.lambda_p = central.lambda_p;
        central_cand.lambda_q = central.lambda_q;
        central_cand.appliance_profiles = central.appliance_profiles;
        central_cand.p_conv = central.p_conv;
        central_cand.q_conv = central.q_conv;
        central_cand.p_ren = central.p_ren;
        std::printf("slot %2d: central objective %.8g, kkt(market) %.3g, dev %.3g\n", t + 1,
                    central.objective, rep.max_residual(), max_dev);
        (void)max_obj_rel;
    }
    std::printf("max committed-injection deviation: %.6g pu; max market KKT residual: %.6g\n",
                max_dev, max_kkt);
    if (!args.out_dir.empty()) {
        write_outputs(market, s, opts, std::filesystem::path(args.scenario_path).stem().string(),
                      args.out_dir);
    }
    return market.all_converged ? 0 : 2;
}

int cmd_report(const CommonArgs& args) {
    Scenario s = load_scenario(args.scenario_path);
    nlohmann::json j = recompute_summary(s, args.out_dir);
    std::cout << j.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"decentralized energy trading simulator"};
    app.require_subcommand(1);

    CommonArgs args;

    CLI::App* run = app.add_subcommand("run", "decentralized trading over the full horizon");
    add_common(run, args);
    run->add_option("--sweep-vartheta", args.sweep_vartheta,
                    "re-run for each listed risk weight")
        ->delimiter(',');

    CLI::App* bench = app.add_subcommand("benchmark", "no-demand-response world");
    add_common(bench, args, false);

    CLI::App* oracle = app.add_subcommand("oracle", "centralized per-slot solver");
    add_common(oracle, args, false);

    CLI::App* compare = app.add_subcommand("compare", "decentralized run vs centralized solve");
    add_common(compare, args, false);

    CLI::App* report = app.add_subcommand("report", "recompute metrics from run outputs");
    report->add_option("--scenario", args.scenario_path, "scenario JSON file")->required();
    report->add_option("--out", args.out_dir, "run output directory")->required();

    // synthetic scenario generation
    SyntheticSpec spec;
    uint64_t gen_seed = 1;
    std::string gen_out;
    std::vector<int> users_range;
    CLI::App* gen = app.add_subcommand("gen", "generate a synthetic scenario");
    gen->add_option("--buses", spec.buses, "entity bus count")->required();
    gen->add_option("--gens", spec.generators, "generator count")->required();
    gen->add_option("--users", users_range, "users per aggregator: MIN,MAX")->delimiter(',');
    gen->add_option("--renewables", spec.renewable_fraction, "renewable generator fraction");
    gen->add_option("--horizon", spec.horizon, "slots in the trading day");
    gen->add_option("--risk-weight", spec.risk_weight, "DNO shortage-risk weight");
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--out", gen_out, "output scenario file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (run->parsed()) return cmd_run(args);
        if (bench->parsed()) return cmd_benchmark(args);
        if (oracle->parsed()) return cmd_oracle(args);
        if (compare->parsed()) return cmd_compare(args);
        if (report->parsed()) return cmd_report(args);
        if (gen->parsed()) {
            if (users_range.size() == 2) {
                spec.users_min = users_range[0];
                spec.users_max = users_range[1];
            }
            Scenario s = generate_scenario(spec, gen_seed);
            save_scenario(s, gen_out);
            std::printf("wrote %s: %d buses, %zu aggregators, %zu generators\n", gen_out.c_str(),
                        s.network.size(), s.aggregators.size(), s.generators.size());
            return 0;
        }
    } catch (const ScenarioError& e) {
        std::fprintf(stderr, "scenario error: %s\n", e.what());
        return 1;
    } catch (const InfeasibleSpecError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
