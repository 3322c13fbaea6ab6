#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "detrade/appliance.hpp"
#include "helpers.hpp"

using namespace detrade;
using detrade::testing::make_appliance;

namespace {

Appliance uniform_wake_appliance(int horizon = 4) {
    Appliance a = make_appliance("u0", ApplianceType::window_only, horizon, 0, horizon, 1.0,
                                 0.0, 4.0, 5.0);
    a.wake_prob = Eigen::ArrayXd::Constant(horizon, 1.0 / horizon);
    a.power_nominal = 1.0;
    a.energy_nominal = 1.0;
    return a;
}

}  // namespace

TEST_CASE("utility kernels and their linear extension") {
    CHECK(kernel_value(UtilityKernel::log1p, 0.0) == doctest::Approx(0.0));
    CHECK(kernel_value(UtilityKernel::log1p, 1.0) == doctest::Approx(std::log(2.0)));
    CHECK(kernel_deriv(UtilityKernel::log1p, 0.0) == doctest::Approx(1.0));
    CHECK(kernel_value(UtilityKernel::log1p, -0.5) == doctest::Approx(-0.5));
    CHECK(kernel_deriv(UtilityKernel::log1p, -0.5) == doctest::Approx(1.0));

    const double eps = kSqrtShiftEps;
    CHECK(kernel_value(UtilityKernel::sqrt_shift, 0.0) == doctest::Approx(0.0));
    CHECK(kernel_value(UtilityKernel::sqrt_shift, 1.0) ==
          doctest::Approx(std::sqrt(1.0 + eps) - std::sqrt(eps)));
    CHECK(kernel_deriv(UtilityKernel::sqrt_shift, -1e-3) ==
          doctest::Approx(0.5 / std::sqrt(eps)));
}

TEST_CASE("conditional wake probability") {
    Appliance a = uniform_wake_appliance();

    SUBCASE("uniform mass, one slot conditioned") {
        CHECK(conditional_wake_prob(a, 2, 1) == doctest::Approx(1.0 / 3.0));
    }
    SUBCASE("no conditioning leaves the mass unchanged") {
        CHECK(conditional_wake_prob(a, 2, 0) == doctest::Approx(0.25));
    }
    SUBCASE("exhausted mass raises") {
        Appliance b = a;
        b.wake_prob.setZero();
        b.wake_prob(1) = 1.0;
        CHECK_THROWS_AS(conditional_wake_prob(b, 3, 2), CertaintyExhaustedError);
    }
    SUBCASE("law of total probability") {
        for (int t = 0; t < 3; ++t) {
            double lhs = 0.0;
            for (int h = t + 1; h < 4; ++h) lhs += conditional_wake_prob(a, h, t + 1);
            double num = 0.0, den = 0.0;
            for (int h = t + 1; h < 4; ++h) num += a.wake_prob(h);
            for (int h = 0; h <= t; ++h) den += a.wake_prob(h);
            CHECK(lhs == doctest::Approx(num / (1.0 - den)));
            CHECK(lhs <= 1.0 + 1e-12);
        }
        // full mass before the horizon end: the tail conditional sums to one
        CHECK(conditional_wake_prob(a, 3, 3) == doctest::Approx(1.0));
    }
}

TEST_CASE("sleeping-load estimate") {
    std::vector<Appliance> apps = {uniform_wake_appliance()};

    SUBCASE("empty set contributes nothing") {
        CHECK(sleeping_load_estimate(apps, {}, 3, 1) == doctest::Approx(0.0));
    }
    SUBCASE("single-slot appliance window") {
        // duration 1: operating at h=2 iff it wakes there; conditioned on one
        // elapsed slot the mass is 0.25/0.75
        CHECK(sleeping_load_estimate(apps, {0}, 2, 0) == doctest::Approx(1.0 / 3.0));
    }
    SUBCASE("two-slot duration widens the operating window") {
        apps[0].energy_nominal = 2.0;  // T = 2
        CHECK(sleeping_load_estimate(apps, {0}, 2, 0) == doctest::Approx(2.0 / 3.0));
    }
    SUBCASE("matches a Monte-Carlo wake-time simulation") {
        Appliance a = uniform_wake_appliance(6);
        a.wake_prob << 0.1, 0.2, 0.15, 0.25, 0.1, 0.1;  // residual 0.1 never wakes
        a.energy_nominal = 2.0;                         // runs two slots
        std::vector<Appliance> set = {a};
        const int t = 1, h = 4;
        const double predicted = sleeping_load_estimate(set, {0}, h, t);

        std::mt19937_64 gen(123);
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        const int samples = 100000;
        double mean = 0.0, m2 = 0.0;
        for (int s = 1; s <= samples; ++s) {
            // draw a wake slot > t from the conditional distribution
            double mass_seen = 0.0;
            for (int k = 0; k <= t; ++k) mass_seen += a.wake_prob(k);
            double draw = u01(gen) * (1.0 - mass_seen);
            int wake = -1;
            double acc = 0.0;
            for (int k = t + 1; k < 6; ++k) {
                acc += a.wake_prob(k);
                if (draw < acc) {
                    wake = k;
                    break;
                }
            }
            const bool operating = wake >= 0 && wake <= h && h < wake + 2;
            const double x = operating ? a.power_nominal : 0.0;
            const double delta = x - mean;
            mean += delta / s;
            m2 += delta * (x - mean);
        }
        const double sigma = std::sqrt(m2 / (samples - 1.0) / samples);
        CHECK(std::abs(mean - predicted) < 3.0 * sigma + 1e-12);
    }
}

TEST_CASE("utility values") {
    const int H = 4;

    SUBCASE("type 1 at its minimum energy") {
        Appliance a = make_appliance("t1", ApplianceType::window_only, H, 1, 2, 1.0, 1.0, 2.0, 3.0);
        Eigen::ArrayXd e = Eigen::ArrayXd::Zero(H);
        e(1) = 0.4;
        e(2) = 0.6;  // total = energy_min
        CHECK(utility(a, {1, 2}, e, 0, 0.0) == doctest::Approx(0.0));
    }
    SUBCASE("type 3 with no consumption") {
        Appliance a = make_appliance("t3", ApplianceType::flexible, H, 0, 2, 1.0, 0, 0, 3.0);
        CHECK(utility(a, {0, 1}, Eigen::ArrayXd::Zero(H), 0, 0.0) == doctest::Approx(0.0));
    }
    SUBCASE("type 2 single in-window slot") {
        Appliance a =
            make_appliance("t2", ApplianceType::window_preferred, H, 1, 1, 2.0, 0.0, 2.0, 2.0);
        Eigen::ArrayXd e = Eigen::ArrayXd::Zero(H);
        e(1) = 1.0;
        CHECK(utility(a, {1}, e, 0, 0.0) == doctest::Approx(2.0 * std::log(2.0)));
    }
    SUBCASE("committed energy counts toward the type-1 total") {
        Appliance a = make_appliance("t1", ApplianceType::window_only, H, 0, 4, 1.0, 0.5, 3.0, 4.0);
        Eigen::ArrayXd e = Eigen::ArrayXd::Zero(H);
        e(2) = 0.5;
        const double with_commit = utility(a, {0, 1, 2, 3}, e, 2, 0.7);
        CHECK(with_commit == doctest::Approx(4.0 * std::log1p(0.5 + 0.7 - 0.5)));
    }
}

TEST_CASE("feasible sets") {
    const int H = 8;

    SUBCASE("type 1 window transcription") {
        Appliance a = make_appliance("t1", ApplianceType::window_only, H, 4, 2, 1.0, 1.0, 2.0, 1.0);
        const auto fs = feasible_set(a, {4, 5}, 3, 0.0, H);
        CHECK(fs.lo(3) == 0.0);
        CHECK(fs.hi(3) == 0.0);  // outside the window: forced off
        CHECK(fs.hi(4) == doctest::Approx(1.0));
        CHECK(fs.has_band);
        CHECK(fs.band_lo == doctest::Approx(1.0));
        CHECK(fs.band_hi == doctest::Approx(2.0));
    }
    SUBCASE("empty feasible set is a named error") {
        Appliance a = make_appliance("bad", ApplianceType::window_only, H, 4, 2, 1.0, 3.0, 4.0, 1.0);
        CHECK_THROWS_AS((void)feasible_set(a, {4, 5}, 3, 0.0, H), InfeasibleApplianceError);
        try {
            (void)feasible_set(a, {4, 5}, 3, 0.0, H);
        } catch (const InfeasibleApplianceError& e) {
            CHECK(std::string(e.what()).find("bad") != std::string::npos);
        }
    }
    SUBCASE("worst-case singleton set") {
        Appliance a = make_appliance("wc", ApplianceType::window_only, H, 2, 2, 1.0, 0, 0, 1.0);
        a.power_min = Eigen::ArrayXd::Constant(H, 0.8);
        a.power_max = Eigen::ArrayXd::Constant(H, 0.8);
        a.energy_min = a.energy_max = 1.6;
        const auto fs = feasible_set(a, {2, 3}, 2, 0.0, H);
        Eigen::ArrayXd x = Eigen::ArrayXd::Constant(H, 0.3);
        project_feasible(fs, x);
        CHECK(x(2) == doctest::Approx(0.8));
        CHECK(x(3) == doctest::Approx(0.8));
    }
    SUBCASE("types 2 and 3 allow capped consumption outside the window") {
        Appliance a =
            make_appliance("t3", ApplianceType::flexible, H, 2, 2, 1.5, 0, 0, 1.0);
        const auto fs = feasible_set(a, {2, 3}, 0, 0.0, H);
        CHECK(fs.lo(0) == 0.0);
        CHECK(fs.hi(0) == doctest::Approx(1.5));
        CHECK(!fs.has_band);
    }
}

TEST_CASE("projection onto box plus energy band") {
    const int H = 4;
    Appliance a = make_appliance("p", ApplianceType::window_only, H, 0, 4, 1.0, 1.0, 2.0, 1.0);
    const auto fs = feasible_set(a, {0, 1, 2, 3}, 0, 0.0, H);

    SUBCASE("idempotent") {
        Eigen::ArrayXd x = Eigen::ArrayXd::Constant(H, 2.0);
        project_feasible(fs, x);
        Eigen::ArrayXd y = x;
        project_feasible(fs, y);
        CHECK((x - y).abs().maxCoeff() < 1e-12);
        CHECK(fs.contains(x));
    }
    SUBCASE("projection is the closest feasible point") {
        std::mt19937_64 gen(5);
        std::uniform_real_distribution<double> dist(-1.0, 2.0);
        for (int trial = 0; trial < 50; ++trial) {
            Eigen::ArrayXd y(H);
            for (int h = 0; h < H; ++h) y(h) = dist(gen);
            Eigen::ArrayXd x = y;
            project_feasible(fs, x);
            REQUIRE(fs.contains(x, 1e-9));
            const double dx = (x - y).square().sum();
            for (int probe = 0; probe < 40; ++probe) {
                Eigen::ArrayXd z(H);
                for (int h = 0; h < H; ++h) z(h) = dist(gen);
                project_feasible(fs, z);  // a feasible comparison point
                CHECK(dx <= (z - y).square().sum() + 1e-9);
            }
        }
    }
}

TEST_CASE("utility monotonicity and concavity") {
    const int H = 6;
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (ApplianceType type :
         {ApplianceType::window_only, ApplianceType::window_preferred, ApplianceType::flexible}) {
        Appliance a = make_appliance("m", type, H, 1, 3, 1.0, 0.2, 2.5, 3.0);
        const std::vector<int> window = {1, 2, 3};
        for (int trial = 0; trial < 30; ++trial) {
            Eigen::ArrayXd e(H), f(H);
            for (int h = 0; h < H; ++h) {
                e(h) = dist(gen);
                f(h) = dist(gen);
            }
            // monotone: increasing one in-window coordinate cannot hurt
            Eigen::ArrayXd e2 = e;
            e2(2) += 0.25;
            CHECK(utility(a, window, e2, 0, 0.0) >= utility(a, window, e, 0, 0.0) - 1e-12);
            // concave along segments: midpoint above the chord
            const Eigen::ArrayXd mid = 0.5 * (e + f);
            CHECK(utility(a, window, mid, 0, 0.0) >=
                  0.5 * utility(a, window, e, 0, 0.0) + 0.5 * utility(a, window, f, 0, 0.0) -
                      1e-12);
        }
    }
}

TEST_CASE("nominal profile runs at nominal power for the operation duration") {
    Appliance a = uniform_wake_appliance(8);
    a.power_nominal = 0.7;
    a.energy_nominal = 1.4;  // two slots
    const Eigen::ArrayXd e = nominal_profile(a, 2, 8);
    CHECK(e(2) == doctest::Approx(0.7));
    CHECK(e(3) == doctest::Approx(0.7));
    CHECK(e(4) == doctest::Approx(0.0));
    CHECK(e(1) == doctest::Approx(0.0));
}
