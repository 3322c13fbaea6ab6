#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "detrade/aggregator.hpp"
#include "detrade/dno.hpp"
#include "detrade/generator.hpp"
#include "detrade/grid.hpp"
#include "detrade/linpf.hpp"

namespace detrade {

enum class RunMode { uncertainty, complete_info, benchmark };

RunMode run_mode_from_name(const std::string& name);
std::string run_mode_name(RunMode m);

struct RunOptions {
    RunMode mode = RunMode::uncertainty;
    int threads = 1;
    int max_iters = 0;  // 0 = scenario default
    std::optional<uint64_t> seed;
    std::string out_dir;  // empty = no files
    bool dump_signals = false;
    bool dump_lambda = false;
    std::string wake_log;  // replay an exogenous wake-event log
    bool keep_iteration_snapshots = false;  // in-memory phi/signal history
    bool capture_equilibria = false;  // per-slot world views + converged state
};

// Everything the centralized solver needs to pose the same slot-t problem the
// market just cleared: awake appliances with their remaining feasible data,
// sleeping-load estimates, and the effective generator configs.
struct WorldView {
    int t = 0;
    struct AwakeItem {
        int agg_index = 0;
        int bus = 0;
        int appliance_index = 0;
        int wake_slot = 0;
        std::vector<int> window;
        double energy_used = 0.0;
    };
    std::vector<AwakeItem> awake;
    std::vector<Eigen::ArrayXd> sleeping_est;  // per aggregator, length H
    std::vector<GeneratorConfig> gen_cfgs;     // mode-effective configs
};

// A candidate equilibrium: network state, multipliers, and agent decisions
// (appliance profiles aligned with WorldView::awake).
struct EquilibriumCandidate {
    Eigen::MatrixXd theta, vmag, lambda_p, lambda_q;
    std::vector<Eigen::ArrayXd> appliance_profiles;
    Eigen::MatrixXd p_conv, q_conv, p_ren;  // bus-indexed rows
};

// Message envelopes exchanged through the per-iteration mailboxes. The
// transport is in-process; the contract is the barrier: the coordinator
// consumes every agent's iteration-k message before any iteration-k+1
// signal exists.
struct AgentUpdate {
    int iteration = 0;
    int bus = 0;
    Eigen::ArrayXd active_power, reactive_power;          // aggregators
    Eigen::ArrayXd p_conv, q_conv, p_ren;                 // generators
    bool is_generator = false;
};

struct SignalSlice {
    int iteration = 0;
    int bus = 0;
    Eigen::ArrayXd price_active, price_reactive;
    double shortage_penalty = 0.0;
};

template <typename T>
class Mailbox {
  public:
    void open(int iteration, int count) {
        iteration_ = iteration;
        slots_.assign(count, std::nullopt);
    }
    void post(int idx, T msg) {
        if (msg.iteration != iteration_)
            throw std::logic_error("mailbox barrier violated: message iteration " +
                                   std::to_string(msg.iteration) + " != " +
                                   std::to_string(iteration_));
        slots_[idx] = std::move(msg);
    }
    bool complete() const {
        for (const auto& s : slots_)
            if (!s) return false;
        return true;
    }
    const T& at(int idx) const { return *slots_[idx]; }
    int iteration() const { return iteration_; }

  private:
    int iteration_ = 0;
    std::vector<std::optional<T>> slots_;
};

struct SlotSummary {
    int slot = 0;  // 1-based
    int iterations = 0;
    bool converged = false;
    double max_residual = 0.0;
    double wall_ms = 0.0;
};

// Full snapshot of one market iteration; kept only when requested.
struct IterationSnapshot {
    int iteration = 0;
    int slot = 0;  // 1-based current slot
    DnoState phi;
    SignalBundle bundle;
    Eigen::MatrixXd residual_p, residual_q;
    std::vector<double> aggregator_profit, generator_profit;
    double step_primal = 0.0, step_dual = 0.0;
    double lagrangian_value = 0.0;
};

struct WakeEvent {
    int slot = 0;  // 1-based
    int bus = 0;
    std::string appliance_id;
};

// One row of the per-iteration trace, for the current slot of each slot run.
struct TraceRow {
    int iter = 0, slot = 0, bus = 0;
    double theta = 0, vmag = 0, lambda = 0, gamma = 0, rho = 0, varrho = 0, residual = 0;
};

struct SignalRow {
    int iter = 0, slot = 0, bus = 0;
    double rho = 0, varrho = 0, beta = 0;
};

struct AggregatorReport {
    int bus = 0;
    double utility = 0.0, payment = 0.0, profit = 0.0, peak_load = 0.0;
};

struct GeneratorReport {
    int bus = 0;
    double revenue = 0.0, cost = 0.0, shortage = 0.0, profit = 0.0;
    double par = 0.0, peak = 0.0;
};

struct SimulationResult {
    // committed day-long quantities, bus x slot
    Eigen::MatrixXd load_p, load_q;
    Eigen::MatrixXd gen_p_conv, gen_q_conv, gen_p_ren;
    Eigen::MatrixXd price_active, price_reactive;
    Eigen::VectorXd shortage_penalty;

    std::vector<SlotSummary> slots;
    std::vector<AggregatorReport> aggregators;
    std::vector<GeneratorReport> generators;
    double par_aggregate = 0.0;
    double welfare = 0.0;
    bool all_converged = false;
    double wall_ms_total = 0.0;

    std::vector<WakeEvent> wake_events;
    // per-slot audit used by the directional profit property: optimized
    // profit vs the nominal-operation point at the same prices
    std::vector<std::vector<double>> slot_profit_opt;    // [slot][aggregator]
    std::vector<std::vector<double>> slot_profit_bench;  // [slot][aggregator]

    std::vector<IterationSnapshot> snapshots;  // optional
    std::vector<TraceRow> trace;               // current-slot rows, every iteration
    std::vector<SignalRow> signal_rows;        // full bundle rows when dumping

    struct SlotEquilibrium {
        WorldView view;
        EquilibriumCandidate candidate;
    };
    std::vector<SlotEquilibrium> equilibria;  // when capture_equilibria

    // per-appliance committed consumption, for reporting
    struct ApplianceCommit {
        int bus = 0;
        std::string appliance_id;
        int wake_slot = 0;  // 1-based
        Eigen::ArrayXd profile;
    };
    std::vector<ApplianceCommit> appliance_commits;
};

// Shared immutable per-run context: factorizations, penalties, projector.
struct MarketContext {
    const Scenario* scenario = nullptr;
    AdmittanceBlocks blocks;
    FlowSolver* solver = nullptr;  // owned elsewhere
    NetworkOps* ops = nullptr;
    NetworkProjector* projector = nullptr;
    Eigen::VectorXd shortage_penalty;       // per bus
    std::vector<double> reactive_ratio;     // per bus
};

// Rolling-horizon simulation of the trading algorithm.
SimulationResult run_horizon(const Scenario& s, const RunOptions& opts);

// The no-demand-response world: appliances run at nominal power as soon as
// they wake; generators and the coordinator still clear the market.
SimulationResult benchmark_run(const Scenario& s, RunOptions opts);

// Peak-to-average ratio of a day profile; 0 when the profile is identically 0.
double peak_to_average(const Eigen::ArrayXd& profile);

// Probability that a still-sleeping appliance wakes at slot t, conditioned on
// the elapsed slots; the simulation draws with exactly this probability.
double wake_probability_now(const Appliance& app, int t);

}  // namespace detrade
