#pragma once

#include <Eigen/Dense>

#include "detrade/grid.hpp"

namespace detrade {

// Decision of one generator over the remaining horizon [t, H). Vectors are
// full length H; entries before t are kept from committed slots.
struct GeneratorDecision {
    Eigen::ArrayXd p_conv, q_conv, p_ren;
    double confidence = 0.0;   // attained uncertainty-budget value
    double budget_used = 0.0;  // same quantity; kept for report symmetry
};

// Worst-case shortage exposure charged by the DNO.
double shortage_cost(const GeneratorConfig& g, const GeneratorDecision& d,
                     const Eigen::ArrayXd& penalty, int t);

double generator_profit(const GeneratorConfig& g, const GeneratorDecision& d,
                        const Eigen::ArrayXd& price_active, const Eigen::ArrayXd& price_reactive,
                        const Eigen::ArrayXd& penalty, int t);

// Slot-separable closed forms: conventional active power at the clamped
// marginal-cost crossing, reactive power bang-bang on the sign of its price,
// renewable offer at the upper bound when price exceeds penalty and at the
// lower bound otherwise (ties resolve to the lower bound, and a degenerate
// slot with ren_min == ren_max contributes zero to the budget).
GeneratorDecision generator_local_solve(const GeneratorConfig& g,
                                        const Eigen::ArrayXd& price_active,
                                        const Eigen::ArrayXd& price_reactive,
                                        const Eigen::ArrayXd& penalty, int t,
                                        const GeneratorDecision* previous = nullptr);

// Budget constraint left-hand side of the adaptive uncertainty set.
double uncertainty_budget_used(const GeneratorConfig& g, const Eigen::ArrayXd& p_ren, int t);

}  // namespace detrade
