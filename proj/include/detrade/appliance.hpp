#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace detrade {

// Concave utility kernels. Arguments may go slightly negative at intermediate
// solver iterates; below zero the kernel continues linearly with slope f'(0),
// which keeps it concave and differentiable.
enum class UtilityKernel { log1p, sqrt_shift };

constexpr double kSqrtShiftEps = 1e-6;

double kernel_value(UtilityKernel k, double x);
double kernel_deriv(UtilityKernel k, double x);

UtilityKernel kernel_from_name(const std::string& name);
std::string kernel_name(UtilityKernel k);

// Household appliance classes:
//   type 1: runs only inside its scheduling window, with per-slot and total
//           energy bounds (EV, dishwasher);
//   type 2: may also run outside the window at a much lower, time-dependent
//           utility, total energy still bounded (TV, PC);
//   type 3: window-preference only, no total-energy bound (lighting, fridge).
enum class ApplianceType { window_only = 1, window_preferred = 2, flexible = 3 };

struct HorizonSpec {
    int start = 0;       // 0-based first slot (ignored when wake_relative)
    int length = 1;      // number of slots in the scheduling window
    bool wake_relative = false;  // window starts at the realized wake slot
};

struct Appliance {
    std::string id;
    ApplianceType type = ApplianceType::window_only;
    HorizonSpec horizon;

    Eigen::ArrayXd power_min, power_max;  // per-slot bounds, length H
    double energy_min = 0.0, energy_max = 0.0;  // types 1-2 only
    double power_nominal = 0.0, energy_nominal = 0.0;

    double utility_scale = 1.0;      // in-window coefficient
    double utility_scale_out = 0.0;  // out-of-window coefficient (types 2-3)
    Eigen::ArrayXd utility_scale_slots;  // optional per-slot in-window (type 2)
    UtilityKernel kernel = UtilityKernel::log1p;

    Eigen::ArrayXd wake_prob;  // mass per slot, sum <= 1; residual = never wakes

    bool has_energy_band() const { return type != ApplianceType::flexible; }

    // Operation duration in whole slots once awake in worst-case (nominal) mode.
    int duration_slots() const;

    // In-window slots given the realized wake slot, clipped to [wake, H).
    std::vector<int> materialize_window(int wake_slot, int horizon_len) const;
};

class CertaintyExhaustedError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class InfeasibleApplianceError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// P(wake at slot h | still asleep after the first conditioned slots).
// `conditioned` counts leading slots known to have passed without a wake;
// 0 means no conditioning.
double conditional_wake_prob(const Appliance& a, int h, int conditioned);

// Worst-case expected demand of a set of still-sleeping appliances at an
// upcoming slot h (> current slot), assuming each runs at nominal power for
// its full duration as soon as it wakes.
double sleeping_load_estimate(const std::vector<Appliance>& appliances,
                              const std::vector<int>& asleep, int h, int current_slot);

// Box bounds per slot plus (types 1-2) a two-sided total-energy constraint
// over the in-window slots, restricted to slots >= start.
struct ApplianceFeasibleSet {
    int start = 0;
    Eigen::ArrayXd lo, hi;  // full length H; slots < start are pinned to 0
    bool has_band = false;
    double band_lo = 0.0, band_hi = 0.0;
    std::vector<int> band_slots;

    bool contains(const Eigen::ArrayXd& x, double tol = 1e-9) const;
};

// energy_used: energy already committed in past slots (shrinks the band).
ApplianceFeasibleSet feasible_set(const Appliance& a, const std::vector<int>& window,
                                  int t, double energy_used, int horizon_len);

// Euclidean projection onto box + energy band (bisection on the band
// multiplier). Exact for the box-only case; band solved to ~1e-12.
void project_feasible(const ApplianceFeasibleSet& fs, Eigen::ArrayXd& x);

// Utility of a consumption profile over slots >= t. For type 1 the value
// depends on total energy including what was already committed.
double utility(const Appliance& a, const std::vector<int>& window,
               const Eigen::ArrayXd& profile, int t, double energy_used);

// dU/de(h) for h >= t, zero elsewhere.
Eigen::ArrayXd utility_gradient(const Appliance& a, const std::vector<int>& window,
                                const Eigen::ArrayXd& profile, int t, double energy_used);

// Uncontrolled profile: nominal power from the wake slot for the operation
// duration (the no-demand-response behavior).
Eigen::ArrayXd nominal_profile(const Appliance& a, int wake_slot, int horizon_len);

}  // namespace detrade
