#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "powernet/scenarios.hpp"
#include "test_support.hpp"

using namespace powernet;
using Catch::Approx;

TEST_CASE("longitudinal discretization matches the exponential-hold formulas") {
    VehicleParams p;
    p.m = 13400;
    p.m_e = 13400;
    p.delta_s = 5.0;

    SECTION("drag constant recovered from the published transition value") {
        // c_g chosen so that A_d lands on 0.9981; round-trip through B_d.
        p.c_g = -p.m_e * std::log(0.9981) / p.delta_s;
        const Discretization d = discretize_longitudinal(p);
        CHECK(d.A_d == Approx(0.9981).epsilon(1e-12));
        CHECK(d.B_d == Approx((p.m_e / p.c_g) * (1.0 - d.A_d)));
        // In SI metres B_d sits near delta_s, not near 5e-3.
        CHECK(d.B_d == Approx(4.995).epsilon(1e-3));
    }
    SECTION("default drag lands on the same transition value") {
        const Discretization d = discretize_longitudinal(p);
        CHECK(d.A_d == Approx(0.9981).epsilon(1e-4));
    }
    SECTION("zero drag degrades to the integrator limit") {
        p.c_g = 0.0;
        const Discretization d = discretize_longitudinal(p);
        CHECK(d.A_d == 1.0);
        CHECK(d.B_d == Approx(p.delta_s));
        CHECK(d.drag_free_limit);
    }
}

TEST_CASE("synthetic routes close their altitude profile") {
    const Route r = synth_route(12500.0, {2000.0, 3000.0, 0.03}, 5.0);
    CHECK(r.samples() == 2500);
    const std::vector<double> alt = r.altitude();
    // climb tops out above zero, descent mirrors it back down
    const double peak = *std::max_element(alt.begin(), alt.end());
    CHECK(peak > 10.0);
    CHECK(std::abs(alt.back()) < 1e-6 * peak + 0.5);

    SECTION("zero-grade request gives a flat profile") {
        const Route f = flat_route(100.0, 5.0);
        CHECK(f.samples() == 20);
        for (double g : f.grade) CHECK(g == 0.0);
    }
    SECTION("degenerate hills are rejected") {
        CHECK_THROWS_MATCHES(synth_route(1000.0, {500.0, 400.0, 0.03}, 5.0), Error,
                             testing::error_code_is(ErrorCode::InvalidParameter));
        CHECK_THROWS_MATCHES(synth_route(1000.0, {100.0, 400.0, 0.5}, 5.0), Error,
                             testing::error_code_is(ErrorCode::InvalidParameter));
    }
}

TEST_CASE("eco-driving builder reproduces the study-case network shape") {
    VehicleParams vp;
    EcoHandles h;
    const Route route = synth_route(12500.0, {2000.0, 3000.0, 0.03}, 5.0);
    const NetworkProblem p = build_eco_driving(vp, route, 700.0, {}, &h);

    CHECK(p.horizon() == 2500);
    CHECK(p.buffers().size() == 2);
    CHECK(p.num_converters() == 3);
    CHECK(p.num_nodes() == 3);
    CHECK(p.num_states() == 2);
    CHECK(p.num_inputs() == 4);

    // The speed and kinetic-link rows carry the published coupling pattern:
    // unit G entries on the lethargy and velocity outputs, the velocity
    // input in F, and the kinetic state in E.
    const Matrix F = Matrix(p.node_F());
    const Matrix G = Matrix(p.node_G());
    const Matrix E = Matrix(p.node_E());
    CHECK(G(h.speed_node, h.leth_converter) == 1.0);
    CHECK(std::abs(F(h.speed_node, 3)) == 1.0);
    CHECK(G(h.kin_node, h.vel_converter) == 1.0);
    CHECK(E(h.kin_node, 0) == -1.0);
    CHECK(G.row(h.brake_node).cwiseAbs().sum() == 0.0);
    CHECK(p.nodes()[h.brake_node].kind == NodeKind::Dissipative);
    CHECK(p.nodes()[h.speed_node].kind == NodeKind::Conservative);

    // gradient forces enter the kinetic disturbance
    const Discretization d = discretize_longitudinal(vp);
    const double expect =
        -d.B_d * vp.m * vp.g * (std::sin(route.grade[300]) + vp.c_r * std::cos(route.grade[300]));
    CHECK(p.disturbance(300)[0] == Approx(expect));

    SECTION("degenerate inputs are rejected") {
        CHECK_THROWS_AS(build_eco_driving(vp, route, -5.0), Error);
        EcoBounds bad;
        bad.v_min = 0.0;
        CHECK_THROWS_MATCHES(build_eco_driving(vp, route, 700.0, bad), Error,
                             testing::error_code_is(ErrorCode::InfeasibleBounds));
    }
    SECTION("tiny flat instance assembles") {
        const NetworkProblem tiny = build_eco_driving(vp, flat_route(5.0, 5.0), 1e6);
        CHECK(tiny.horizon() == 1);
    }
}

TEST_CASE("work-energy bookkeeping in the drag-free limit") {
    // With c_g -> 0 the kinetic buffer integrates F_p ds minus the grade
    // force: energy change equals the applied work.
    VehicleParams vp;
    vp.c_g = 0.0;
    vp.c_r = 1e-9;
    EcoHandles h;
    const NetworkProblem p = build_eco_driving(vp, flat_route(50.0, 5.0), 1e5, {}, &h);

    Vector x = p.x_init();
    double work = 0.0;
    const double f_p = 500.0;
    for (int k = 0; k < p.horizon(); ++k) {
        Vector u = Vector::Zero(p.num_inputs());
        u[0] = f_p;
        const SubsystemInfo& kin = p.subsystems()[h.kin_buffer];
        const Buffer& b = p.buffers()[kin.buffer];
        x.segment(kin.x_offset, 1) =
            b.A * x.segment(kin.x_offset, 1) + b.B * u.segment(kin.u_offset, 1) +
            (b.f.size() == 1 ? b.f[0] : b.f[k]);
        work += f_p * vp.delta_s;
    }
    const double e0 = p.x_init()[0];
    CHECK(x[0] - e0 == Approx(work).epsilon(1e-6));
}

TEST_CASE("cvem builder and its node balance") {
    CvemParams params;
    params.demand = {1e4, 2e4, 1e4};
    CvemHandles h;
    const NetworkProblem p = build_cvem(params, &h);

    CHECK(p.horizon() == 3);
    CHECK(p.num_converters() == 3);
    CHECK(p.num_nodes() == 2);
    CHECK(p.nodes()[h.drive_node].kind == NodeKind::Dissipative);
    CHECK(p.nodes()[h.bus_node].kind == NodeKind::Conservative);

    SECTION("negative curvature is rejected") {
        CvemParams bad = params;
        bad.genset.a2 = -0.1;
        CHECK_THROWS_MATCHES(build_cvem(bad), Error,
                             testing::error_code_is(ErrorCode::InvalidParameter));
    }
    SECTION("with the brake at zero and the battery idle, the machine meets demand") {
        // Node rows evaluated at a hand-built point: u_em = v_p forced by the
        // drive node, the bus then pins the genset to the machine draw.
        const double v_p = params.demand[0];
        Vector x = p.x_init();
        Vector u = Vector::Zero(3);
        Vector y = Vector::Zero(3);
        Vector s = Vector::Zero(1);
        u[2] = v_p;  // machine
        y[h.machine_converter] =
            params.machine.a2 * v_p * v_p + params.machine.a1 * v_p + params.machine.a0;
        y[h.battery_converter] = params.battery.a0;
        u[1] = y[h.machine_converter] + y[h.battery_converter];  // genset balances the bus
        y[h.genset_converter] =
            params.genset.a2 * u[1] * u[1] + params.genset.a1 * u[1] + params.genset.a0;
        const Vector res = p.node_residual(0, x, u, y, s);
        CHECK(res.lpNorm<Eigen::Infinity>() < 1e-9);
    }
}

TEST_CASE("route csv survives a round trip") {
    const Route r = synth_route(500.0, {100.0, 200.0, 0.05}, 5.0);
    // altitude integration is the independent check: sum of sin(alpha) ds
    const std::vector<double> alt = r.altitude();
    double acc = 0.0;
    for (double g : r.grade) acc += std::sin(g) * r.delta_s;
    CHECK(acc == Approx(alt.back()).margin(1e-12));
}
