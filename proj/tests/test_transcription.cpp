#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "powernet/scenarios.hpp"
#include "powernet/transcription.hpp"
#include "test_support.hpp"

using namespace powernet;
using Catch::Approx;

namespace {

/// Evaluates the cone rows at a concrete point.
Vector cone_value(const ConeConstraint& cone, const Vector& w) {
    Vector v = cone.offset;
    for (const Triplet& t : cone.rows) v[t.row()] += t.value() * w[t.col()];
    return v;
}

double cone_margin(const ConeConstraint& cone, const Vector& w) {
    const Vector v = cone_value(cone, w);
    if (cone.dim == 1) return v[0];
    return v[0] - v.tail(cone.dim - 1).norm();
}

}  // namespace

TEST_CASE("spec'd cone points sit exactly where they should") {
    SECTION("square at the boundary") {
        // 1/2 * 2 * u^2 <= y at u=3, y=9: ||[sqrt(2)*3, 8.5]|| = 9.5 = y + 1/2
        const ConeConstraint cone = relax_converter(ScaledSquareModel{1.0, 0.0}, {0}, 1);
        Vector w(2);
        w << 3.0, 9.0;
        const Vector v = cone_value(cone, w);
        CHECK(v[0] == Approx(9.5));
        CHECK(v.tail(2).norm() == Approx(9.5));
        CHECK(cone_margin(cone, w) == Approx(0.0).margin(1e-12));
    }
    SECTION("hyperbola at the boundary") {
        // y(u+0) >= 1 at u=2, y=0.5: ||[2, -1.5]|| = 2.5 = y + u
        const ConeConstraint cone = relax_converter(HyperbolicModel{0.0}, {0}, 1);
        Vector w(2);
        w << 2.0, 0.5;
        const Vector v = cone_value(cone, w);
        CHECK(v[0] == Approx(2.5));
        CHECK(v.tail(2).norm() == Approx(2.5));
    }
    SECTION("hyperbola strictly inside") {
        const ConeConstraint cone = relax_converter(HyperbolicModel{0.0}, {0}, 1);
        Vector w(2);
        w << 2.0, 1.0;
        const Vector v = cone_value(cone, w);
        CHECK(v.tail(2).norm() == Approx(std::sqrt(5.0)));
        CHECK(cone_margin(cone, w) > 0.0);
    }
}

TEST_CASE("encoding soundness: cone membership iff h <= 0, boundaries coincide") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> uni(-3.0, 3.0);
    std::uniform_real_distribution<double> pos(0.05, 3.0);

    Matrix Q(2, 2);
    Q << 1.2, 0.3, 0.3, 0.8;
    struct Case {
        ConverterModel model;
        int dim;
        bool positive_inputs;
        double scale;  ///< boundary identity: t0^2 - ||xbar||^2 = -scale * h
    };
    const std::vector<Case> cases = {
        {ScaledSquareModel{0.9, 0.4}, 1, false, 2.0},
        {QuadraticModel{Q, (Vector(2) << 0.2, -0.5).finished(), 0.3}, 2, false, 2.0},
        {HyperbolicModel{0.3}, 1, true, 4.0},
        {LinearModel{(Vector(2) << 1.0, -2.0).finished(), 0.1}, 2, false, 1.0},
    };

    for (const Case& c : cases) {
        std::vector<int> xi_vars(c.dim);
        for (int i = 0; i < c.dim; ++i) xi_vars[i] = i;
        const ConeConstraint cone = relax_converter(c.model, xi_vars, c.dim, 0.0);
        for (int trial = 0; trial < 10000; ++trial) {
            Vector w(c.dim + 1);
            for (int i = 0; i < c.dim; ++i) w[i] = c.positive_inputs ? pos(rng) : uni(rng);
            w[c.dim] = uni(rng);
            const Vector xi = w.head(c.dim);
            const double h = eval_model(c.model, xi, w[c.dim]);
            const Vector v = cone_value(cone, w);
            if (cone.dim == 1) {
                CHECK(v[0] == Approx(-h).margin(1e-12));
                continue;
            }
            // algebraic identity behind the encoding
            const double lhs = v[0] * v[0] - v.tail(cone.dim - 1).squaredNorm();
            CHECK(lhs == Approx(-c.scale * h).margin(1e-9));
            // membership <-> inequality (away from the boundary)
            if (std::abs(h) > 1e-9) {
                CHECK((cone_margin(cone, w) >= 0.0) == (h <= 0.0));
            }
        }
    }
}

TEST_CASE("indefinite quadratic forms are not relaxable") {
    Matrix Q(1, 1);
    Q << -0.2;
    CHECK_THROWS_MATCHES(
        relax_converter(QuadraticModel{Q, Vector::Constant(1, 1.0), 0.0}, {0}, 1), Error,
        testing::error_code_is(ErrorCode::NotRelaxable));
}

TEST_CASE("build_relaxation lays out variables, equalities, and cones") {
    VehicleParams vp;
    const Route route = flat_route(50.0, 5.0);  // K = 10
    EcoBounds bounds;
    bounds.v_init = 10.0;
    const NetworkProblem p = build_eco_driving(vp, route, 100.0, bounds);
    const ConicProgram cp = build_relaxation(p);

    const int K = 10;
    // x: (K+1)*2, u: K*4, y: K*3, s: K*1
    CHECK(cp.layout.total == (K + 1) * 2 + K * 4 + K * 3 + K * 1);
    // equalities: init 2 + dynamics K*2 + nodes K*3
    CHECK(cp.eq_A.rows() == 2 + K * 2 + K * 3);
    // one cone per converter per step
    CHECK(cp.cones.size() == static_cast<std::size_t>(K) * 3);

    SECTION("feasibility is preserved by the relaxation") {
        // Integrate a constant-speed trajectory of the original problem and
        // check every constraint of the relaxed program.
        const double v = 10.0;
        Vector w = Vector::Zero(cp.layout.total);
        const double e_kin = 0.5 * vp.m_e * v * v;
        double x_t = 0.0;
        const Discretization d = discretize_longitudinal(vp);
        double x_kin = e_kin;
        for (int k = 0; k <= K; ++k) {
            w[cp.layout.x(k, 0)] = x_kin;
            w[cp.layout.x(k, 1)] = x_t;
            if (k == K) break;
            // hold speed: pick F_p so that x_kin stays constant
            const double f_grav = vp.m * vp.g * vp.c_r;
            const double f_p = (e_kin - d.A_d * e_kin + d.B_d * f_grav) / d.B_d;
            w[cp.layout.u(k, 0)] = f_p;
            w[cp.layout.u(k, 1)] = 1.0 / v;
            w[cp.layout.u(k, 2)] = f_p;  // machine force
            w[cp.layout.u(k, 3)] = v;
            w[cp.layout.y(k, 0)] = f_p;            // machine energy
            w[cp.layout.y(k, 1)] = e_kin;          // velocity converter
            w[cp.layout.y(k, 2)] = v;              // lethargy output
            w[cp.layout.s(k, 0)] = 0.0;            // no braking
            x_kin = d.A_d * x_kin + d.B_d * f_p - d.B_d * f_grav;
            x_t += 5.0 / v;
        }
        CHECK((cp.eq_A * w - cp.eq_b).lpNorm<Eigen::Infinity>() < 1e-8);
        for (int i = 0; i < cp.layout.total; ++i) {
            CHECK(w[i] >= cp.lo[i] - 1e-9);
            CHECK(w[i] <= cp.hi[i] + 1e-9);
        }
        for (const ConeConstraint& cone : cp.cones) {
            CHECK(cone_margin(cone, w) >= -1e-9);
        }
    }
}

TEST_CASE("add_regularization only touches output costs") {
    VehicleParams vp;
    const NetworkProblem p = build_eco_driving(vp, flat_route(25.0, 5.0), 100.0);
    const ConicProgram cp = build_relaxation(p);

    std::vector<int> outputs;
    for (int k = 0; k < cp.layout.K; ++k) outputs.push_back(cp.layout.y(k, 2));

    const ConicProgram reg = add_regularization(cp, outputs, 0.01);
    for (int k = 0; k < cp.layout.K; ++k) {
        CHECK(reg.cost[cp.layout.y(k, 2)] == Approx(cp.cost[cp.layout.y(k, 2)] + 0.01));
    }
    CHECK((reg.eq_A - cp.eq_A).norm() == 0.0);

    SECTION("sigma = 0 is the identity") {
        const ConicProgram same = add_regularization(cp, outputs, 0.0);
        CHECK(same.cost == cp.cost);
    }
    SECTION("non-output index is rejected") {
        CHECK_THROWS_MATCHES(add_regularization(cp, {cp.layout.x(0, 0)}, 0.01), Error,
                             testing::error_code_is(ErrorCode::InvalidParameter));
    }
}

TEST_CASE("sparse text dump round-trips") {
    VehicleParams vp;
    const NetworkProblem p = build_eco_driving(vp, flat_route(25.0, 5.0), 60.0);
    const ConicProgram cp = build_relaxation(p);

    std::stringstream ss;
    dump_program(cp, ss);
    const ConicProgram back = load_program(ss);

    CHECK(back.num_vars() == cp.num_vars());
    CHECK(back.cost.isApprox(cp.cost));
    // +-inf bounds must survive the trip bit-exactly (isApprox chokes on inf)
    CHECK((back.lo.array() == cp.lo.array()).all());
    CHECK((back.hi.array() == cp.hi.array()).all());
    CHECK(Matrix(back.eq_A).isApprox(Matrix(cp.eq_A)));
    CHECK(back.eq_b.isApprox(cp.eq_b));
    REQUIRE(back.cones.size() == cp.cones.size());
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> uni(-2.0, 2.0);
    Vector w(cp.num_vars());
    for (int i = 0; i < w.size(); ++i) w[i] = uni(rng);
    for (std::size_t i = 0; i < cp.cones.size(); ++i) {
        CHECK(cone_value(back.cones[i], w).isApprox(cone_value(cp.cones[i], w)));
    }
}
