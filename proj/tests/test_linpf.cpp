#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>

#include "detrade/linpf.hpp"
#include "helpers.hpp"

using namespace detrade;
using detrade::testing::make_branch;
using detrade::testing::make_bus;

namespace {

NetworkModel two_bus_net(double r = 0.0, double x = 0.1) {
    NetworkModel net;
    net.buses = {make_bus(1, BusKind::slack), make_bus(2, BusKind::aggregator)};
    net.branches = {make_branch(1, 2, r, x)};
    return net;
}

}  // namespace

TEST_CASE("single line admittance blocks match the hand-computed operator") {
    // one branch R=0, X=0.1: series admittance y = -10j, so the bus
    // susceptance matrix is [[-10, 10], [10, -10]] and G vanishes
    AdmittanceBlocks blocks = assemble_lambda(two_bus_net());
    Eigen::Matrix2d B_expect;
    B_expect << -10.0, 10.0, 10.0, -10.0;
    CHECK((blocks.B - B_expect).norm() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(blocks.G.norm() == doctest::Approx(0.0));
    CHECK((blocks.B - blocks.Bp).norm() == doctest::Approx(0.0));  // no shunts
    CHECK((blocks.G - blocks.Gp).norm() == doctest::Approx(0.0));

    const Eigen::MatrixXd lam = blocks.flow_matrix();
    Eigen::MatrixXd expect(4, 4);
    expect << 10, -10, 0, 0,  //
        -10, 10, 0, 0,        //
        0, 0, 10, -10,        //
        0, 0, -10, 10;
    CHECK((lam - expect).norm() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("shunt susceptance shifts only the unprimed diagonal") {
    NetworkModel net = two_bus_net();
    net.buses[1].shunt_b = 0.3;
    net.buses[1].shunt_g = 0.05;
    AdmittanceBlocks blocks = assemble_lambda(net);
    CHECK(blocks.B(1, 1) - blocks.Bp(1, 1) == doctest::Approx(0.3));
    CHECK(blocks.G(1, 1) - blocks.Gp(1, 1) == doctest::Approx(0.05));
    CHECK(blocks.B(0, 1) == doctest::Approx(blocks.Bp(0, 1)));
}

TEST_CASE("unreduced operator is singular, reduced one inverts") {
    AdmittanceBlocks blocks = assemble_lambda(two_bus_net());
    Eigen::FullPivLU<Eigen::MatrixXd> lu(blocks.flow_matrix());
    CHECK(!lu.isInvertible());  // constant angle shift is in the null space

    SensitivityMatrix sens = reduced_inverse(blocks, 0);
    // reduced system is diag(10, 10); slack rows/cols re-embedded as zero
    CHECK(sens.inv(1, 1) == doctest::Approx(0.1));
    CHECK(sens.inv(3, 3) == doctest::Approx(0.1));
    CHECK(sens.inv(0, 0) == doctest::Approx(0.0));
    CHECK(sens.inv(2, 2) == doctest::Approx(0.0));
    CHECK(sens.inv(3, 1) == doctest::Approx(0.0));  // lossless: no P-V coupling
}

TEST_CASE("islanded bus produces a singularity diagnostic") {
    NetworkModel net;
    net.buses = {make_bus(1, BusKind::slack), make_bus(2, BusKind::aggregator),
                 make_bus(3, BusKind::aggregator)};
    net.branches = {make_branch(1, 2, 0.0, 0.1)};  // bus 3 disconnected
    AdmittanceBlocks blocks = assemble_lambda(net);
    CHECK_THROWS_AS(reduced_inverse(blocks, 0), SingularNetworkError);
}

TEST_CASE("voltage sensitivity is positive with resistive lines") {
    AdmittanceBlocks blocks = assemble_lambda(two_bus_net(0.03, 0.1));
    SensitivityMatrix sens = reduced_inverse(blocks, 0);
    CHECK(sens.dv_dp(1, 1) > 0.0);  // injecting power raises the local voltage

    // finite-difference check of the column sum against the solver
    FlowSolver solver(blocks, 0);
    Eigen::VectorXd p = Eigen::VectorXd::Zero(2), q = Eigen::VectorXd::Zero(2);
    p(1) = 0.05;
    q(1) = -0.02;
    Eigen::VectorXd th0, v0, th1, v1;
    solver.solve(p, q, th0, v0);
    const double delta = 1e-6;
    p(1) += delta;
    solver.solve(p, q, th1, v1);
    const double fd = (v1.sum() - v0.sum()) / delta;
    CHECK(fd == doctest::Approx(sens.voltage_shift_per_injection(1)).epsilon(1e-6));
}

TEST_CASE("flat start is exact for zero injections") {
    AdmittanceBlocks blocks = assemble_lambda(two_bus_net());
    FlowSolver solver(blocks, 0);
    Eigen::VectorXd p = Eigen::VectorXd::Zero(2), q = Eigen::VectorXd::Zero(2);
    Eigen::VectorXd theta, vmag;
    solver.solve(p, q, theta, vmag);
    CHECK(theta.cwiseAbs().maxCoeff() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK((vmag - Eigen::VectorXd::Ones(2)).cwiseAbs().maxCoeff() ==
          doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("two-bus load solve matches the hand elimination") {
    // lossless line, p2 = -0.1: reduced solve gives theta2 = -0.01, v2 = 1
    AdmittanceBlocks blocks = assemble_lambda(two_bus_net());
    FlowSolver solver(blocks, 0);
    Eigen::VectorXd p = Eigen::VectorXd::Zero(2), q = Eigen::VectorXd::Zero(2);
    p(1) = -0.1;
    Eigen::VectorXd theta, vmag;
    solver.solve(p, q, theta, vmag);
    CHECK(theta(1) == doctest::Approx(-0.01).epsilon(1e-12));
    CHECK(vmag(1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("solve recovers random anchored states and superposes") {
    NetworkModel net;
    net.buses = {make_bus(1, BusKind::slack), make_bus(2, BusKind::aggregator),
                 make_bus(3, BusKind::generator), make_bus(4, BusKind::aggregator)};
    net.buses[2].shunt_b = 0.02;
    net.branches = {make_branch(1, 2, 0.02, 0.06), make_branch(2, 3, 0.03, 0.05),
                    make_branch(2, 4, 0.05, 0.08)};
    AdmittanceBlocks blocks = assemble_lambda(net);
    FlowSolver solver(blocks, 0);
    const Eigen::MatrixXd lam = blocks.flow_matrix();

    std::mt19937_64 gen(42);
    std::uniform_real_distribution<double> dist(-0.05, 0.05);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd theta(4), vmag(4);
        for (int b = 0; b < 4; ++b) {
            theta(b) = dist(gen);
            vmag(b) = 1.0 + dist(gen);
        }
        theta(0) = 0.0;
        vmag(0) = 1.0;
        Eigen::VectorXd x(8);
        x << theta, vmag;
        const Eigen::VectorXd inj = lam * x;
        Eigen::VectorXd th2, v2;
        solver.solve(inj.head(4), inj.tail(4), th2, v2);
        CHECK((th2 - theta).cwiseAbs().maxCoeff() < 1e-9);
        CHECK((v2 - vmag).cwiseAbs().maxCoeff() < 1e-9);
    }

    // linearity: flow(p1 + p2) = flow(p1) + flow(p2) - flat offset
    Eigen::VectorXd p1 = Eigen::VectorXd::Zero(4), p2 = Eigen::VectorXd::Zero(4),
                    q0 = Eigen::VectorXd::Zero(4);
    p1(1) = -0.04;
    p2(3) = 0.03;
    Eigen::VectorXd ta, va, tb, vb, tc, vc;
    solver.solve(p1, q0, ta, va);
    solver.solve(p2, q0, tb, vb);
    solver.solve(p1 + p2, q0, tc, vc);
    CHECK((tc - (ta + tb)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((vc - (va + vb - Eigen::VectorXd::Ones(4))).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("branch flow formulas") {
    Branch br = make_branch(1, 2, 0.0, 0.1);

    SUBCASE("no angle or magnitude difference means no flow") {
        const BranchFlow f = branch_flow(0.02, 0.02, 1.01, 1.01, br);
        CHECK(f.p == doctest::Approx(0.0));
        CHECK(f.q == doctest::Approx(0.0));
    }
    SUBCASE("pure angle difference over a reactive line carries active power") {
        const BranchFlow f = branch_flow(0.01, 0.0, 1.0, 1.0, br);
        CHECK(f.p == doctest::Approx(0.1).epsilon(1e-12));
        CHECK(f.q == doctest::Approx(0.0));
    }
    SUBCASE("swapping endpoints negates the lossless flow") {
        const BranchFlow f = branch_flow(0.01, 0.0, 1.0, 1.0, br);
        const BranchFlow g = branch_flow(0.0, 0.01, 1.0, 1.0, br);
        CHECK(f.p == doctest::Approx(-g.p));
        CHECK(f.q == doctest::Approx(-g.q));
    }
    SUBCASE("zero-impedance branch falls back to the split reactance") {
        Branch zero = make_branch(1, 2, 0.0, 0.0);
        const BranchFlow f = branch_flow(1e-8, 0.0, 1.0, 1.0, zero);
        CHECK(f.p == doctest::Approx(1e-8 / kSplitBranchReactance));
    }
}

TEST_CASE("polygon constraint evaluation") {
    Branch br = make_branch(1, 2, 0.01, 0.05, 1.0);

    SUBCASE("origin is always feasible") {
        CHECK(polygon_violations(0.0, 0.0, br).empty());
    }
    SUBCASE("boundary point is active with zero slack") {
        br.polygon_angle = std::numbers::pi / 2.0;  // square
        auto v = polygon_violations(1.0, 0.0, br);
        CHECK(v.empty());  // lhs == s_max exactly, not a violation
        auto v2 = polygon_violations(1.0 + 1e-9, 0.0, br);
        REQUIRE(v2.size() == 1);
        CHECK(v2[0].side == 0);
    }
    SUBCASE("point beyond the circumcircle at a face midpoint angle violates") {
        br.polygon_angle = std::numbers::pi / 6.0;
        const double a = br.polygon_angle / 2.0;
        const double radius = 1.05;
        auto v = polygon_violations(radius * std::cos(a), radius * std::sin(a), br);
        CHECK(!v.empty());
    }
    SUBCASE("incircle passes, outside the circumcircle fails") {
        br.polygon_angle = std::numbers::pi / 6.0;
        std::mt19937_64 gen(7);
        std::uniform_real_distribution<double> ang(0.0, 2.0 * std::numbers::pi);
        const double inradius = std::cos(br.polygon_angle / 2.0);
        for (int i = 0; i < 200; ++i) {
            const double a = ang(gen);
            CHECK(polygon_violations(0.999 * inradius * std::cos(a),
                                     0.999 * inradius * std::sin(a), br)
                      .empty());
            CHECK(!polygon_violations(1.001 * std::cos(a), 1.001 * std::sin(a), br).empty());
        }
    }
}

TEST_CASE("worst-case voltage pins renewables to their lower bound") {
    AdmittanceBlocks blocks = assemble_lambda(two_bus_net(0.03, 0.1));
    FlowSolver solver(blocks, 0);
    Eigen::VectorXd p = Eigen::VectorXd::Zero(2), q = Eigen::VectorXd::Zero(2);
    p(1) = 0.1;  // renewable scheduled at its maximum

    SUBCASE("no renewables: unchanged") {
        Eigen::VectorXd th, v;
        solver.solve(p, q, th, v);
        const Eigen::VectorXd vhat =
            worst_case_voltage(solver, p, q, Eigen::VectorXd::Zero(2));
        CHECK((vhat - v).cwiseAbs().maxCoeff() < 1e-15);
    }
    SUBCASE("scheduled above the bound: worst case is lower") {
        Eigen::VectorXd offset = Eigen::VectorXd::Zero(2);
        offset(1) = 0.1;  // p_ren - p_min_ren
        Eigen::VectorXd th, v;
        solver.solve(p, q, th, v);
        const Eigen::VectorXd vhat = worst_case_voltage(solver, p, q, offset);
        CHECK(vhat(1) < v(1));
    }
}
