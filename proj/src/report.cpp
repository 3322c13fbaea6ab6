#include "detrade/report.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "detrade/linpf.hpp"

namespace detrade {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

struct CsvReader {
    std::ifstream in;
    std::vector<std::string> header;

    explicit CsvReader(const std::string& path) : in(path) {
        if (!in) throw std::runtime_error(path + ": cannot open");
        std::string line;
        std::getline(in, line);
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, ',')) header.push_back(col);
    }
    bool next(std::vector<std::string>& fields) {
        std::string line;
        if (!std::getline(in, line)) return false;
        fields.clear();
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, ',')) fields.push_back(col);
        return !fields.empty();
    }
    int col(const std::string& name) const {
        for (size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        throw std::runtime_error("missing csv column " + name);
    }
};

json entity_metrics(const SimulationResult& r) {
    json aggs = json::array();
    for (const AggregatorReport& a : r.aggregators) {
        json j;
        j["bus"] = a.bus;
        j["utility"] = a.utility;
        j["payment"] = a.payment;
        j["profit"] = a.profit;
        j["peak_load"] = a.peak_load;
        aggs.push_back(j);
    }
    json gens = json::array();
    for (const GeneratorReport& g : r.generators) {
        json j;
        j["bus"] = g.bus;
        j["revenue"] = g.revenue;
        j["cost"] = g.cost;
        j["shortage"] = g.shortage;
        j["profit"] = g.profit;
        j["par"] = g.par;
        j["peak"] = g.peak;
        gens.push_back(j);
    }
    json m;
    m["aggregators"] = aggs;
    m["generators"] = gens;
    m["par_aggregate"] = r.par_aggregate;
    m["welfare"] = r.welfare;
    return m;
}

}  // namespace

json summary_json(const SimulationResult& r, const Scenario& s, const std::string& scenario_name,
                  const std::string& mode, uint64_t seed, int threads) {
    json j;
    j["scenario"] = scenario_name;
    j["mode"] = mode;
    j["seed"] = seed;
    j["horizon"] = s.market.horizon;
    j["metrics"] = entity_metrics(r);
    json slots = json::array();
    for (const SlotSummary& sl : r.slots) {
        json sj;
        sj["slot"] = sl.slot;
        sj["iterations"] = sl.iterations;
        sj["converged"] = sl.converged;
        sj["max_residual"] = sl.max_residual;
        sj["wall_ms"] = sl.wall_ms;
        slots.push_back(sj);
    }
    json runtime;
    runtime["threads"] = threads;
    runtime["slots"] = slots;
    runtime["wall_ms_total"] = r.wall_ms_total;
    runtime["all_converged"] = r.all_converged;
    j["runtime"] = runtime;
    return j;
}

void write_lambda_csv(const Scenario& s, const std::string& path) {
    const AdmittanceBlocks blocks = assemble_lambda(s.network);
    const Eigen::MatrixXd m = blocks.flow_matrix();
    std::ofstream out(path);
    for (int i = 0; i < m.rows(); ++i) {
        for (int j = 0; j < m.cols(); ++j) {
            if (j) out << ',';
            out << fmt(m(i, j));
        }
        out << '\n';
    }
}

void write_outputs(const SimulationResult& r, const Scenario& s, const RunOptions& opts,
                   const std::string& scenario_name, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const int n = s.network.size(), H = s.market.horizon;

    {
        std::ofstream out(out_dir + "/trace.csv");
        out << "iter,slot,bus,theta,vmag,lambda,gamma,rho,varrho,residual\n";
        for (const TraceRow& row : r.trace)
            out << row.iter << ',' << row.slot << ',' << row.bus << ',' << fmt(row.theta) << ','
                << fmt(row.vmag) << ',' << fmt(row.lambda) << ',' << fmt(row.gamma) << ','
                << fmt(row.rho) << ',' << fmt(row.varrho) << ',' << fmt(row.residual) << '\n';
    }
    {
        std::ofstream out(out_dir + "/commits.csv");
        out << "slot,bus,kind,l,q,p_conv,q_conv,p_ren,rho,varrho,beta\n";
        for (int t = 0; t < H; ++t)
            for (int b = 0; b < n; ++b) {
                const Bus& bus = s.network.buses[b];
                out << (t + 1) << ',' << bus.id << ',' << bus_kind_name(bus.kind) << ','
                    << fmt(r.load_p(b, t)) << ',' << fmt(r.load_q(b, t)) << ','
                    << fmt(r.gen_p_conv(b, t)) << ',' << fmt(r.gen_q_conv(b, t)) << ','
                    << fmt(r.gen_p_ren(b, t)) << ',' << fmt(r.price_active(b, t)) << ','
                    << fmt(r.price_reactive(b, t)) << ',' << fmt(r.shortage_penalty(b)) << '\n';
            }
    }
    {
        std::ofstream out(out_dir + "/entities.csv");
        out << "bus,kind,utility,payment,revenue,cost,shortage,profit,peak,par\n";
        for (const AggregatorReport& a : r.aggregators)
            out << a.bus << ",aggregator," << fmt(a.utility) << ',' << fmt(a.payment)
                << ",0,0,0," << fmt(a.profit) << ',' << fmt(a.peak_load) << ",0\n";
        for (const GeneratorReport& g : r.generators)
            out << g.bus << ",generator,0,0," << fmt(g.revenue) << ',' << fmt(g.cost) << ','
                << fmt(g.shortage) << ',' << fmt(g.profit) << ',' << fmt(g.peak) << ','
                << fmt(g.par) << '\n';
    }
    {
        std::ofstream out(out_dir + "/appliances.csv");
        out << "bus,appliance_id,wake_slot,slot,consumption\n";
        for (const auto& ac : r.appliance_commits)
            for (int t = 0; t < H; ++t)
                out << ac.bus << ',' << ac.appliance_id << ',' << ac.wake_slot << ',' << (t + 1)
                    << ',' << fmt(ac.profile(t)) << '\n';
    }
    {
        std::ofstream out(out_dir + "/wakes.csv");
        out << "slot,aggregator_bus,appliance_id\n";
        for (const WakeEvent& ev : r.wake_events)
            out << ev.slot << ',' << ev.bus << ',' << ev.appliance_id << '\n';
    }
    if (opts.dump_signals) {
        std::ofstream out(out_dir + "/signals.csv");
        out << "iter,slot,bus,rho,varrho,beta\n";
        for (const SignalRow& row : r.signal_rows)
            out << row.iter << ',' << row.slot << ',' << row.bus << ',' << fmt(row.rho) << ','
                << fmt(row.varrho) << ',' << fmt(row.beta) << '\n';
    }
    if (opts.dump_lambda) write_lambda_csv(s, out_dir + "/lambda.csv");
    {
        std::ofstream out(out_dir + "/summary.json");
        out << summary_json(r, s, scenario_name, run_mode_name(opts.mode),
                            opts.seed.value_or(s.market.seed), opts.threads)
                   .dump(2)
            << '\n';
    }
}

json recompute_summary(const Scenario& s, const std::string& out_dir) {
    const int H = s.market.horizon;

    // committed quantities and prices
    std::map<int, Eigen::ArrayXd> load, price, p_conv, q_conv, p_ren, varrho;
    std::map<int, double> beta;
    std::map<int, std::string> kind;
    {
        CsvReader commits(out_dir + "/commits.csv");
        const int c_slot = commits.col("slot"), c_bus = commits.col("bus"),
                  c_kind = commits.col("kind"), c_l = commits.col("l"),
                  c_pc = commits.col("p_conv"), c_qc = commits.col("q_conv"),
                  c_pr = commits.col("p_ren"), c_rho = commits.col("rho"),
                  c_vr = commits.col("varrho"), c_beta = commits.col("beta");
        std::vector<std::string> f;
        while (commits.next(f)) {
            const int t = std::stoi(f[c_slot]) - 1;
            const int bus = std::stoi(f[c_bus]);
            auto ensure = [&](std::map<int, Eigen::ArrayXd>& m) {
                if (!m.count(bus)) m[bus] = Eigen::ArrayXd::Zero(H);
            };
            ensure(load);
            ensure(price);
            ensure(p_conv);
            ensure(q_conv);
            ensure(p_ren);
            ensure(varrho);
            kind[bus] = f[c_kind];
            load[bus](t) = std::stod(f[c_l]);
            price[bus](t) = std::stod(f[c_rho]);
            p_conv[bus](t) = std::stod(f[c_pc]);
            q_conv[bus](t) = std::stod(f[c_qc]);
            p_ren[bus](t) = std::stod(f[c_pr]);
            varrho[bus](t) = std::stod(f[c_vr]);
            beta[bus] = std::stod(f[c_beta]);
        }
    }

    // wake slots per (bus, appliance)
    std::map<std::pair<int, std::string>, int> wake;
    {
        CsvReader wakes(out_dir + "/wakes.csv");
        const int c_slot = wakes.col("slot"), c_bus = wakes.col("aggregator_bus"),
                  c_id = wakes.col("appliance_id");
        std::vector<std::string> f;
        while (wakes.next(f))
            wake[{std::stoi(f[c_bus]), f[c_id]}] = std::stoi(f[c_slot]) - 1;
    }

    // per-appliance committed profiles -> utilities
    std::map<int, double> utility_by_bus;
    {
        CsvReader apps(out_dir + "/appliances.csv");
        const int c_bus = apps.col("bus"), c_id = apps.col("appliance_id"),
                  c_slot = apps.col("slot"), c_e = apps.col("consumption");
        std::map<std::pair<int, std::string>, Eigen::ArrayXd> profiles;
        std::vector<std::string> f;
        while (apps.next(f)) {
            auto key = std::make_pair(std::stoi(f[c_bus]), f[c_id]);
            if (!profiles.count(key)) profiles[key] = Eigen::ArrayXd::Zero(H);
            profiles[key](std::stoi(f[c_slot]) - 1) = std::stod(f[c_e]);
        }
        for (const auto& [key, profile] : profiles) {
            const AggregatorConfig* cfg = s.aggregator_at(key.first);
            if (cfg == nullptr) continue;
            const Appliance* app = nullptr;
            for (const Appliance& a : cfg->appliances)
                if (a.id == key.second) app = &a;
            if (app == nullptr) continue;
            const int w = wake.count(key) ? wake.at(key) : 0;
            const std::vector<int> window = app->materialize_window(w, H);
            utility_by_bus[key.first] += utility(*app, window, profile, 0, 0.0);
        }
    }

    SimulationResult r;
    Eigen::ArrayXd total_gen = Eigen::ArrayXd::Zero(H);
    for (const AggregatorConfig& cfg : s.aggregators) {
        AggregatorReport rep;
        rep.bus = cfg.bus;
        rep.utility = utility_by_bus.count(cfg.bus) ? utility_by_bus[cfg.bus] : 0.0;
        if (load.count(cfg.bus)) {
            rep.payment = (load[cfg.bus] * price[cfg.bus]).sum();
            rep.peak_load = load[cfg.bus].maxCoeff();
        }
        rep.profit = rep.utility - rep.payment;
        r.aggregators.push_back(rep);
    }
    for (const GeneratorConfig& cfg : s.generators) {
        GeneratorReport rep;
        rep.bus = cfg.bus;
        const Eigen::ArrayXd prof = p_conv[cfg.bus] + p_ren[cfg.bus];
        total_gen += prof;
        rep.revenue = (prof * price[cfg.bus]).sum() + (q_conv[cfg.bus] * varrho[cfg.bus]).sum();
        for (int t = 0; t < H; ++t) rep.cost += cfg.cost(p_conv[cfg.bus](t));
        if (cfg.has_renewable())
            for (int t = 0; t < H; ++t)
                rep.shortage += beta[cfg.bus] * (p_ren[cfg.bus](t) - cfg.ren_min(t));
        rep.profit = rep.revenue - rep.cost - rep.shortage;
        rep.par = peak_to_average(prof);
        rep.peak = prof.maxCoeff();
        r.generators.push_back(rep);
    }
    r.par_aggregate = peak_to_average(total_gen);
    for (const auto& rep : r.aggregators) r.welfare += rep.utility;
    for (const auto& rep : r.generators) r.welfare -= rep.cost + rep.shortage;

    json j;
    j["metrics"] = entity_metrics(r);
    return j;
}

}  // namespace detrade
