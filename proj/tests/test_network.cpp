#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "powernet/network.hpp"

using namespace powernet;
using Catch::Approx;

namespace {

Buffer scalar_buffer(double a, double b, double x0 = 0.0, double x_lo = -100.0,
                     double x_hi = 100.0, double u_lo = -10.0, double u_hi = 10.0) {
    Buffer buf;
    buf.A = Matrix::Constant(1, 1, a);
    buf.B = Matrix::Constant(1, 1, b);
    buf.x_init = Vector::Constant(1, x0);
    buf.x_lo = Vector::Constant(1, x_lo);
    buf.x_hi = Vector::Constant(1, x_hi);
    buf.u_lo = Vector::Constant(1, u_lo);
    buf.u_hi = Vector::Constant(1, u_hi);
    return buf;
}

Converter standalone(ConverterModel model, double lo, double hi, double cost_b = 0.0) {
    Converter c;
    c.model = std::move(model);
    c.u_lo = Vector::Constant(1, lo);
    c.u_hi = Vector::Constant(1, hi);
    c.cost_b = cost_b;
    return c;
}

}  // namespace

TEST_CASE("converter residuals match the template algebra") {
    // exact square: h = 1*u^2 + 0*u - y
    CHECK(eval_model(ScaledSquareModel{1.0, 0.0}, Vector::Constant(1, 3.0), 9.0) == Approx(0.0));
    // reciprocal: y u = 1
    CHECK(eval_model(HyperbolicModel{0.0}, Vector::Constant(1, 2.0), 0.5) == Approx(0.0));
    // quadratic 0.1 u^2 + 1.1 u + 0.2 (Q stores twice the square coefficient)
    const QuadraticModel quad{Matrix::Constant(1, 1, 0.2), Vector::Constant(1, 1.1), 0.2};
    CHECK(eval_model(quad, Vector::Constant(1, 2.0), 2.8) == Approx(0.0).margin(1e-12));
    CHECK(eval_model(quad, Vector::Constant(1, 2.0), 3.0) == Approx(-0.2));
}

TEST_CASE("analytic jacobians") {
    SECTION("scaled square") {
        const ModelJacobian j =
            model_jacobian(ScaledSquareModel{1.0, 0.0}, Vector::Constant(1, 3.0), 9.0);
        CHECK(j.dh_dxi[0] == Approx(6.0));
        CHECK(j.dh_dy == Approx(-1.0));
    }
    SECTION("hyperbolic implicit slope") {
        const Vector xi = Vector::Constant(1, 2.0);
        const ModelJacobian j = model_jacobian(HyperbolicModel{0.0}, xi, 0.5);
        CHECK(j.dh_dy == Approx(-2.0));
        CHECK(model_output_slope(HyperbolicModel{0.0}, xi)[0] == Approx(-0.25));
    }
    SECTION("linear stored orientation") {
        const ModelJacobian j =
            model_jacobian(LinearModel{Vector::Constant(1, 1.0), 0.0}, Vector::Constant(1, 1.0), 1.0);
        CHECK(j.dh_dy == Approx(-1.0));
    }
    SECTION("singular output derivative") {
        CHECK_THROWS_MATCHES(
            model_jacobian(HyperbolicModel{0.0}, Vector::Constant(1, 0.0), 1.0), Error,
            Catch::Matchers::Predicate<Error>(
                [](const Error& e) { return e.code() == ErrorCode::SingularOutputDerivative; }));
    }
}

TEST_CASE("jacobians agree with central finite differences at random in-box points") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> uni(0.2, 4.0);

    Matrix Q(2, 2);
    Q << 0.6, 0.1, 0.1, 0.9;
    const std::vector<ConverterModel> models = {
        ScaledSquareModel{0.7, 0.3},
        HyperbolicModel{0.5},
        LinearModel{(Vector(2) << 1.5, -0.4).finished(), 0.2},
        QuadraticModel{Q, (Vector(2) << 0.3, 0.7).finished(), -0.1},
    };
    for (const ConverterModel& model : models) {
        const int dim = model_input_dim(model);
        for (int trial = 0; trial < 100; ++trial) {
            Vector xi(dim);
            for (int d = 0; d < dim; ++d) xi[d] = uni(rng);
            const double y = uni(rng);
            const ModelJacobian jac = model_jacobian(model, xi, y);
            const double step = 1e-6;
            for (int d = 0; d < dim; ++d) {
                Vector hi = xi, lo = xi;
                hi[d] += step;
                lo[d] -= step;
                const double fd =
                    (eval_model(model, hi, y) - eval_model(model, lo, y)) / (2.0 * step);
                CHECK(jac.dh_dxi[d] == Approx(fd).epsilon(1e-6).margin(1e-8));
            }
            const double fdy =
                (eval_model(model, xi, y + step) - eval_model(model, xi, y - step)) / (2.0 * step);
            CHECK(jac.dh_dy == Approx(fdy).epsilon(1e-6).margin(1e-8));
        }
    }
}

TEST_CASE("node insertion enforces the structural requirements") {
    NetworkBuilder nb;
    nb.add_buffer(scalar_buffer(0.5, 1.0));
    const int c0 = nb.add_converter(standalone(ScaledSquareModel{1.0, 0.0}, 0.1, 5.0));
    nb.add_converter(standalone(ScaledSquareModel{1.0, 0.0}, 0.1, 5.0));
    nb.add_converter(standalone(ScaledSquareModel{1.0, 0.0}, 0.1, 5.0));

    SECTION("registration returns stable handles") {
        Node n;
        n.g_row = {{1, 1.0}};
        CHECK(nb.add_node(n) == 0);
        Node n2;
        n2.g_row = {{2, 1.0}};
        CHECK(nb.add_node(n2) == 1);
    }
    SECTION("negative G entry is rejected") {
        Node n;
        n.g_row = {{1, -1.0}};
        CHECK_THROWS_MATCHES(nb.add_node(n), Error,
                             Catch::Matchers::Predicate<Error>([](const Error& e) {
                                 return e.code() == ErrorCode::PositivityViolation;
                             }));
    }
    SECTION("self-loop is rejected") {
        Node n;
        n.g_row = {{c0, 1.0}};
        n.f_row = {{1, 1.0}};  // converter 0's own input channel
        CHECK_THROWS_MATCHES(nb.add_node(n), Error,
                             Catch::Matchers::Predicate<Error>(
                                 [](const Error& e) { return e.code() == ErrorCode::SelfLoop; }));
    }
}

TEST_CASE("assemble stacks the dynamics in block-bidiagonal form") {
    NetworkBuilder nb;
    nb.add_buffer(scalar_buffer(0.5, 1.0));
    Node n;
    n.f_row = {{0, 1.0}};
    n.kind = NodeKind::Dissipative;
    nb.add_node(n);
    const NetworkProblem p = nb.assemble(2);

    const Matrix gx = Matrix(p.gamma_x());
    Matrix expected(3, 3);
    expected << 1, 0, 0, -0.5, 1, 0, 0, -0.5, 1;
    CHECK(gx.isApprox(expected));

    const Matrix gu = Matrix(p.gamma_u());
    Matrix ue(3, 2);
    ue << 0, 0, -1, 0, 0, -1;
    CHECK(gu.isApprox(ue));
}

TEST_CASE("assemble requires nodes and consistent horizons") {
    NetworkBuilder nb;
    nb.add_buffer(scalar_buffer(1.0, 1.0));
    CHECK_THROWS_MATCHES(nb.assemble(3), Error,
                         Catch::Matchers::Predicate<Error>(
                             [](const Error& e) { return e.code() == ErrorCode::EmptyNetwork; }));

    Buffer b = scalar_buffer(1.0, 1.0);
    b.f = {Vector::Constant(1, 0.1), Vector::Constant(1, 0.2)};  // length 2
    NetworkBuilder nb2;
    nb2.add_buffer(b);
    Node n;
    n.f_row = {{0, 1.0}};
    n.kind = NodeKind::Dissipative;
    nb2.add_node(n);
    CHECK_THROWS_MATCHES(nb2.assemble(3), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                             return e.code() == ErrorCode::HorizonMismatch;
                         }));
}

TEST_CASE("assemble is deterministic: identical declarations, identical matrices") {
    auto build = [] {
        NetworkBuilder nb;
        Buffer b = scalar_buffer(0.9981, 4.99, 1.0, 0.0, 50.0);
        b.f = {Vector::Constant(1, -0.37)};
        nb.add_buffer(b);
        nb.add_converter(standalone(ScaledSquareModel{6700.0, 0.0}, 3.0, 25.0));
        Node n;
        n.g_row = {{0, 1.0}};
        n.e_row = {{0, -1.0}};
        nb.add_node(n);
        return nb.assemble(7);
    };
    const NetworkProblem a = build();
    const NetworkProblem b = build();

    auto dump = [](const SparseMatrix& m) {
        std::ostringstream os;
        os.precision(17);
        for (int c = 0; c < m.outerSize(); ++c) {
            for (SparseMatrix::InnerIterator it(m, c); it; ++it) {
                os << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
            }
        }
        return os.str();
    };
    CHECK(dump(a.gamma_x()) == dump(b.gamma_x()));
    CHECK(dump(a.gamma_u()) == dump(b.gamma_u()));
    CHECK(dump(a.node_E()) == dump(b.node_E()));
    CHECK(a.dynamics_rhs() == b.dynamics_rhs());
}

TEST_CASE("buffer invariants are validated at insertion") {
    NetworkBuilder nb;
    Buffer bad = scalar_buffer(1.0, 1.0, /*x0=*/5.0, /*x_lo=*/-1.0, /*x_hi=*/1.0);
    CHECK_THROWS_MATCHES(nb.add_buffer(bad), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                             return e.code() == ErrorCode::InfeasibleBounds;
                         }));
}

TEST_CASE("hyperbolic converters must keep their box away from the pole") {
    NetworkBuilder nb;
    CHECK_THROWS_AS(nb.add_converter(standalone(HyperbolicModel{0.0}, -1.0, 1.0)), Error);
    CHECK_NOTHROW(nb.add_converter(standalone(HyperbolicModel{0.0}, 0.01, 50.0)));
}

TEST_CASE("solve_model_input picks the in-box root") {
    bool ok = false;
    // u^2 = 9 with box [0, 10] -> 3, not -3
    const double r = solve_model_input(ScaledSquareModel{1.0, 0.0}, Vector::Constant(1, 5.0), 9.0,
                                       0, 0.0, 10.0, ok);
    CHECK(ok);
    CHECK(r == Approx(3.0));
    // no in-box root
    solve_model_input(ScaledSquareModel{1.0, 0.0}, Vector::Constant(1, 5.0), 9.0, 0, 4.0, 10.0,
                      ok);
    CHECK_FALSE(ok);
}
