#include "detrade/generator.hpp"

#include <algorithm>

namespace detrade {

double shortage_cost(const GeneratorConfig& g, const GeneratorDecision& d,
                     const Eigen::ArrayXd& penalty, int t) {
    if (!g.has_renewable()) return 0.0;
    double c = 0.0;
    for (int h = t; h < d.p_ren.size(); ++h) c += penalty(h) * (d.p_ren(h) - g.ren_min(h));
    return c;
}

double generator_profit(const GeneratorConfig& g, const GeneratorDecision& d,
                        const Eigen::ArrayXd& price_active, const Eigen::ArrayXd& price_reactive,
                        const Eigen::ArrayXd& penalty, int t) {
    double profit = 0.0;
    for (int h = t; h < d.p_conv.size(); ++h) {
        const double p_ren = g.has_renewable() ? d.p_ren(h) : 0.0;
        profit += (d.p_conv(h) + p_ren) * price_active(h) + d.q_conv(h) * price_reactive(h) -
                  g.cost(d.p_conv(h));
    }
    return profit - shortage_cost(g, d, penalty, t);
}

double uncertainty_budget_used(const GeneratorConfig& g, const Eigen::ArrayXd& p_ren, int t) {
    if (!g.has_renewable()) return 0.0;
    double used = 0.0;
    for (int h = t; h < p_ren.size(); ++h) {
        const double width = g.ren_max(h) - g.ren_min(h);
        if (width <= 0.0) continue;  // degenerate slot carries no uncertainty
        used += (g.ren_max(h) - p_ren(h)) / width;
    }
    return used;
}

GeneratorDecision generator_local_solve(const GeneratorConfig& g,
                                        const Eigen::ArrayXd& price_active,
                                        const Eigen::ArrayXd& price_reactive,
                                        const Eigen::ArrayXd& penalty, int t,
                                        const GeneratorDecision* previous) {
    const int horizon = static_cast<int>(price_active.size());
    GeneratorDecision d;
    if (previous != nullptr) {
        d = *previous;
    } else {
        d.p_conv = Eigen::ArrayXd::Zero(horizon);
        d.q_conv = Eigen::ArrayXd::Zero(horizon);
        d.p_ren = Eigen::ArrayXd::Zero(horizon);
    }

    for (int h = t; h < horizon; ++h) {
        const double rho = price_active(h);
        if (g.cost_quadratic > 0.0) {
            d.p_conv(h) = std::clamp((rho - g.cost_linear) / (2.0 * g.cost_quadratic),
                                     g.p_conv_min, g.p_conv_max);
        } else {
            // linear cost: bang-bang on the margin, tie to the lower bound
            d.p_conv(h) = rho > g.cost_linear ? g.p_conv_max : g.p_conv_min;
        }
        d.q_conv(h) = price_reactive(h) > 0.0 ? g.q_conv_max : g.q_conv_min;
        if (g.has_renewable()) {
            const double width = g.ren_max(h) - g.ren_min(h);
            if (width <= 0.0)
                d.p_ren(h) = g.ren_min(h);
            else
                d.p_ren(h) = rho > penalty(h) ? g.ren_max(h) : g.ren_min(h);
        }
    }
    d.budget_used = uncertainty_budget_used(g, d.p_ren, t);
    d.confidence = d.budget_used;
    return d;
}

}  // namespace detrade
