#pragma once

#include <string>

#include <json.hpp>

#include "detrade/grid.hpp"
#include "detrade/market.hpp"

namespace detrade {

// Writes the run artifacts into out_dir: trace.csv, commits.csv,
// entities.csv, appliances.csv, wakes.csv, summary.json, and the optional
// signals.csv / lambda.csv dumps. Numbers are printed with 17 significant
// digits so parsing them back is exact.
void write_outputs(const SimulationResult& result, const Scenario& s, const RunOptions& opts,
                   const std::string& scenario_name, const std::string& out_dir);

nlohmann::json summary_json(const SimulationResult& result, const Scenario& s,
                            const std::string& scenario_name, const std::string& mode,
                            uint64_t seed, int threads);

// Rebuilds the metrics subtree of summary.json from the CSV outputs alone
// (plus the scenario for cost/utility coefficients).
nlohmann::json recompute_summary(const Scenario& s, const std::string& out_dir);

void write_lambda_csv(const Scenario& s, const std::string& path);

}  // namespace detrade
