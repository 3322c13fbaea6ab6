// Timing harness for the parallel kernels against their serial reference:
// the per-iteration agent solves and the per-slot network update.
#include <chrono>
#include <cstdio>
#include <string>

#include "detrade/dno.hpp"
#include "detrade/market.hpp"
#include "detrade/scenario_gen.hpp"

using namespace detrade;
using Clock = std::chrono::steady_clock;

namespace {

double time_run(const Scenario& s, int threads, int max_iters) {
    RunOptions opts;
    opts.threads = threads;
    opts.max_iters = max_iters;
    const auto start = Clock::now();
    SimulationResult r = run_horizon(s, opts);
    (void)r;
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

}  // namespace

int main(int argc, char** argv) {
    int buses = 37, gens = 4, iters = 50;
    if (argc > 1) buses = std::stoi(argv[1]);
    if (argc > 2) gens = std::stoi(argv[2]);
    if (argc > 3) iters = std::stoi(argv[3]);

    SyntheticSpec spec;
    spec.buses = buses;
    spec.generators = gens;
    spec.users_min = 100;
    spec.users_max = 300;
    spec.horizon = 12;
    Scenario s = generate_scenario(spec, 7);

    std::printf("benchmark: %d entity buses, %d generators, horizon %d, cap %d iters/slot\n",
                buses, gens, s.market.horizon, iters);
    const double serial = time_run(s, 1, iters);
    std::printf("  serial reference: %10.1f ms\n", serial);
    for (int threads : {2, 4}) {
        const double par = time_run(s, threads, iters);
        std::printf("  %d threads:       %10.1f ms  (x%.2f)\n", threads, par, serial / par);
    }
    return 0;
}
