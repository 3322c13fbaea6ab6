#include "detrade/appliance.hpp"

#include <algorithm>
#include <cmath>

namespace detrade {

double kernel_value(UtilityKernel k, double x) {
    switch (k) {
        case UtilityKernel::log1p:
            return x >= 0.0 ? std::log1p(x) : x;
        case UtilityKernel::sqrt_shift:
            return x >= 0.0 ? std::sqrt(x + kSqrtShiftEps) - std::sqrt(kSqrtShiftEps)
                            : x / (2.0 * std::sqrt(kSqrtShiftEps));
    }
    return 0.0;
}

double kernel_deriv(UtilityKernel k, double x) {
    switch (k) {
        case UtilityKernel::log1p:
            return x >= 0.0 ? 1.0 / (1.0 + x) : 1.0;
        case UtilityKernel::sqrt_shift:
            return x >= 0.0 ? 0.5 / std::sqrt(x + kSqrtShiftEps)
                            : 0.5 / std::sqrt(kSqrtShiftEps);
    }
    return 0.0;
}

UtilityKernel kernel_from_name(const std::string& name) {
    if (name == "log1p") return UtilityKernel::log1p;
    if (name == "sqrt_shift") return UtilityKernel::sqrt_shift;
    throw std::runtime_error("unknown utility kernel: " + name);
}

std::string kernel_name(UtilityKernel k) {
    return k == UtilityKernel::log1p ? "log1p" : "sqrt_shift";
}

int Appliance::duration_slots() const {
    if (power_nominal <= 0.0) return 1;
    return std::max(1, static_cast<int>(std::ceil(energy_nominal / power_nominal - 1e-12)));
}

std::vector<int> Appliance::materialize_window(int wake_slot, int horizon_len) const {
    int first = horizon.wake_relative ? wake_slot : horizon.start;
    int last = first + horizon.length - 1;
    first = std::max(first, wake_slot);
    last = std::min(last, horizon_len - 1);
    std::vector<int> w;
    for (int h = first; h <= last; ++h) w.push_back(h);
    return w;
}

double conditional_wake_prob(const Appliance& a, int h, int conditioned) {
    double seen = 0.0;
    for (int k = 0; k < conditioned && k < a.wake_prob.size(); ++k) seen += a.wake_prob(k);
    const double denom = 1.0 - seen;
    if (denom <= 1e-12) {
        throw CertaintyExhaustedError("appliance " + a.id +
                                      ": wake mass exhausted, it must already be awake");
    }
    if (h < conditioned || h >= a.wake_prob.size()) return 0.0;
    return a.wake_prob(h) / denom;
}

double sleeping_load_estimate(const std::vector<Appliance>& appliances,
                              const std::vector<int>& asleep, int h, int current_slot) {
    double total = 0.0;
    for (int idx : asleep) {
        const Appliance& a = appliances[idx];
        const int dur = a.duration_slots();
        // wake slots that would leave the appliance running at slot h
        const int lo = std::max(current_slot + 1, h - dur + 1);
        double operating = 0.0;
        for (int w = lo; w <= h; ++w)
            operating += conditional_wake_prob(a, w, current_slot + 1);
        total += a.power_nominal * operating;
    }
    return total;
}

ApplianceFeasibleSet feasible_set(const Appliance& a, const std::vector<int>& window,
                                  int t, double energy_used, int horizon_len) {
    ApplianceFeasibleSet fs;
    fs.start = t;
    fs.lo = Eigen::ArrayXd::Zero(horizon_len);
    fs.hi = Eigen::ArrayXd::Zero(horizon_len);

    std::vector<bool> in_window(horizon_len, false);
    for (int h : window)
        if (h >= 0 && h < horizon_len) in_window[h] = true;

    for (int h = t; h < horizon_len; ++h) {
        if (in_window[h]) {
            fs.lo(h) = a.power_min(h);
            fs.hi(h) = a.power_max(h);
        } else if (a.type != ApplianceType::window_only) {
            // Out-of-window consumption is allowed for types 2-3; the model
            // only lower-bounds it at zero, so the per-slot cap keeps the
            // local problem compact.
            fs.lo(h) = 0.0;
            fs.hi(h) = a.power_max(h);
        }
        if (fs.lo(h) > fs.hi(h) + 1e-12)
            throw InfeasibleApplianceError("appliance " + a.id + ": power_min > power_max at slot " +
                                           std::to_string(h + 1));
    }

    if (a.has_energy_band()) {
        fs.has_band = true;
        for (int h : window)
            if (h >= t && h < horizon_len) fs.band_slots.push_back(h);
        fs.band_lo = std::max(0.0, a.energy_min - energy_used);
        fs.band_hi = a.energy_max - energy_used;
        double lo_sum = 0.0, hi_sum = 0.0;
        for (int h : fs.band_slots) {
            lo_sum += fs.lo(h);
            hi_sum += fs.hi(h);
        }
        if (fs.band_lo > hi_sum + 1e-12 || fs.band_hi < lo_sum - 1e-12)
            throw InfeasibleApplianceError("appliance " + a.id +
                                           ": empty feasible set, energy band [" +
                                           std::to_string(fs.band_lo) + ", " +
                                           std::to_string(fs.band_hi) +
                                           "] unreachable within per-slot bounds");
        fs.band_lo = std::min(fs.band_lo, hi_sum);
        fs.band_hi = std::max(std::min(fs.band_hi, hi_sum), lo_sum);
    }
    return fs;
}

bool ApplianceFeasibleSet::contains(const Eigen::ArrayXd& x, double tol) const {
    for (int h = start; h < lo.size(); ++h)
        if (x(h) < lo(h) - tol || x(h) > hi(h) + tol) return false;
    if (has_band) {
        double s = 0.0;
        for (int h : band_slots) s += x(h);
        if (s < band_lo - tol || s > band_hi + tol) return false;
    }
    return true;
}

namespace {

double clipped_band_sum(const ApplianceFeasibleSet& fs, const Eigen::ArrayXd& y, double mu) {
    double s = 0.0;
    for (int h : fs.band_slots) s += std::clamp(y(h) + mu, fs.lo(h), fs.hi(h));
    return s;
}

}  // namespace

void project_feasible(const ApplianceFeasibleSet& fs, Eigen::ArrayXd& x) {
    const Eigen::ArrayXd y = x;
    for (int h = 0; h < x.size(); ++h) {
        if (h < fs.start)
            continue;  // past slots are not part of the decision
        x(h) = std::clamp(y(h), fs.lo(h), fs.hi(h));
    }
    if (!fs.has_band || fs.band_slots.empty()) return;

    double s = 0.0;
    for (int h : fs.band_slots) s += x(h);
    double target;
    if (s < fs.band_lo - 1e-14)
        target = fs.band_lo;
    else if (s > fs.band_hi + 1e-14)
        target = fs.band_hi;
    else
        return;

    // Bisection on the band multiplier: sum of clamp(y + mu) is monotone in mu.
    double span = 0.0;
    for (int h : fs.band_slots)
        span = std::max({span, std::abs(y(h)), std::abs(fs.lo(h)), std::abs(fs.hi(h))});
    double lo = -2.0 * span - 1.0, hi = 2.0 * span + 1.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (clipped_band_sum(fs, y, mid) < target)
            lo = mid;
        else
            hi = mid;
        if (hi - lo < 1e-15 * (1.0 + span)) break;
    }
    const double mu = 0.5 * (lo + hi);
    for (int h : fs.band_slots) x(h) = std::clamp(y(h) + mu, fs.lo(h), fs.hi(h));
}

double utility(const Appliance& a, const std::vector<int>& window,
               const Eigen::ArrayXd& profile, int t, double energy_used) {
    std::vector<bool> in_window(profile.size(), false);
    for (int h : window)
        if (h >= 0 && h < profile.size()) in_window[h] = true;

    if (a.type == ApplianceType::window_only) {
        double total = energy_used;
        for (int h : window)
            if (h >= t) total += profile(h);
        return a.utility_scale * kernel_value(a.kernel, total - a.energy_min);
    }

    double u = 0.0;
    for (int h = t; h < profile.size(); ++h) {
        if (in_window[h]) {
            const double scale = (a.type == ApplianceType::window_preferred &&
                                  a.utility_scale_slots.size() == profile.size())
                                     ? a.utility_scale_slots(h)
                                     : a.utility_scale;
            u += scale * kernel_value(a.kernel, profile(h) - a.power_min(h));
        } else {
            u += a.utility_scale_out * kernel_value(a.kernel, profile(h));
        }
    }
    return u;
}

Eigen::ArrayXd utility_gradient(const Appliance& a, const std::vector<int>& window,
                                const Eigen::ArrayXd& profile, int t, double energy_used) {
    Eigen::ArrayXd g = Eigen::ArrayXd::Zero(profile.size());
    std::vector<bool> in_window(profile.size(), false);
    for (int h : window)
        if (h >= 0 && h < profile.size()) in_window[h] = true;

    if (a.type == ApplianceType::window_only) {
        double total = energy_used;
        for (int h : window)
            if (h >= t) total += profile(h);
        const double d = a.utility_scale * kernel_deriv(a.kernel, total - a.energy_min);
        for (int h : window)
            if (h >= t) g(h) = d;
        return g;
    }

    for (int h = t; h < profile.size(); ++h) {
        if (in_window[h]) {
            const double scale = (a.type == ApplianceType::window_preferred &&
                                  a.utility_scale_slots.size() == profile.size())
                                     ? a.utility_scale_slots(h)
                                     : a.utility_scale;
            g(h) = scale * kernel_deriv(a.kernel, profile(h) - a.power_min(h));
        } else {
            g(h) = a.utility_scale_out * kernel_deriv(a.kernel, profile(h));
        }
    }
    return g;
}

Eigen::ArrayXd nominal_profile(const Appliance& a, int wake_slot, int horizon_len) {
    Eigen::ArrayXd e = Eigen::ArrayXd::Zero(horizon_len);
    const int dur = a.duration_slots();
    for (int h = wake_slot; h < std::min(wake_slot + dur, horizon_len); ++h)
        e(h) = a.power_nominal;
    return e;
}

}  // namespace detrade
