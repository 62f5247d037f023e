#include <catch2/catch_amalgamated.hpp>

#include "powernet/exactness.hpp"
#include "powernet/oracle.hpp"
#include "powernet/scenarios.hpp"
#include "test_support.hpp"

using namespace powernet;
using Catch::Approx;

namespace {

/// Two converters feeding one dissipative cap with a shared conservative
/// supply split: only the first output is priced, so the relaxation has a
/// whole face of optima and the second branch floats.
///   min y_1  s.t. u_1 + u_2 = 3,  y_1 + y_2 + s = 25,
///   y_1 >= u_1^2,  y_2 >= u_2^2 + 5 u_2,  u_i in [0, 2].
/// The distinct slopes keep the rank condition alive on the whole box; the
/// unique nonconvex optimum is u = (1, 2), y = (1, 14).
NetworkProblem two_branch_toy() {
    NetworkBuilder nb;
    Converter c1;
    c1.model = ScaledSquareModel{1.0, 0.0};
    c1.u_lo = Vector::Constant(1, 0.0);
    c1.u_hi = Vector::Constant(1, 2.0);
    c1.cost_b = 1.0;
    c1.name = "priced";
    const int a = nb.add_converter(c1);
    Converter c2;
    c2.model = ScaledSquareModel{1.0, 5.0};
    c2.u_lo = Vector::Constant(1, 0.0);
    c2.u_hi = Vector::Constant(1, 2.0);
    c2.name = "floating";
    const int b = nb.add_converter(c2);

    Node split;
    split.kind = NodeKind::Conservative;
    split.f_row = {{0, 1.0}, {1, 1.0}};
    split.load = {3.0};
    nb.add_node(split);
    Node cap;
    cap.kind = NodeKind::Dissipative;
    cap.g_row = {{a, 1.0}, {b, 1.0}};
    cap.load = {25.0};
    nb.add_node(cap);
    return nb.assemble(1);
}

}  // namespace

TEST_CASE("audit classifies hand-built manifold points as tight") {
    CvemParams params;
    params.demand = {1.2e4, 2.5e4, 0.8e4, 1.6e4};
    const NetworkProblem p = build_cvem(params);
    const ConicProgram cp = build_relaxation(p);
    const Solution sol = solve(cp);
    REQUIRE(sol.status == SolveStatus::Optimal);

    const ExactnessReport rep = audit(sol, cp, p);
    CHECK(rep.exact);
    CHECK(rep.max_rel_residual < 1e-5);
    CHECK(rep.min_reduced_cost > -1e-7);
    CHECK(rep.min_lambda_on_g_rows > -1e-7);
    CHECK(rep.n_anomalous == 0);

    SECTION("duality sandwich against the projection") {
        const FeasiblePoint fp = feasible_projection(sol, cp, p);
        CHECK(sol.metrics.dual_obj <= sol.metrics.primal_obj + 1e-6);
        CHECK(sol.metrics.primal_obj <= fp.cost + 1e-6 * (1.0 + std::abs(fp.cost)));
    }
    SECTION("audit refuses unsolved input") {
        Solution bad = sol;
        bad.status = SolveStatus::MaxIter;
        CHECK_THROWS_MATCHES(audit(bad, cp, p), Error,
                             testing::error_code_is(ErrorCode::NotSolved));
    }
}

TEST_CASE("two-branch dissipative toy: slack branch found and regularized away") {
    const NetworkProblem p = two_branch_toy();
    const ConicProgram cp = build_relaxation(p);
    const Solution sol = solve(cp);
    REQUIRE(sol.status == SolveStatus::Optimal);
    // the true optimum: u_1 = 1, u_2 = 2, y_1 = 1
    CHECK(sol.metrics.primal_obj == Approx(1.0).margin(1e-6));

    const ExactnessReport first = audit(sol, cp, p);
    CHECK_FALSE(first.exact);
    CHECK(first.max_residual_of(1) > 1e-3);  // floating branch sits above u^2

    const ExactSolveResult res = solve_exact(p);
    REQUIRE(res.solution.status == SolveStatus::Optimal);
    CHECK(res.report.exact);
    CHECK(res.rounds == 1);
    CHECK(res.base_cost == Approx(1.0).margin(1e-6));
    // second branch tightened onto u_2^2 + 5 u_2 = 14
    CHECK(res.solution.w[res.program.layout.y(0, 1)] == Approx(14.0).margin(1e-4));

    SECTION("regularization lowers the regularized residuals") {
        REQUIRE(res.report.rounds.size() == 2);
        CHECK(res.report.rounds[1].max_rel_residual <= res.report.rounds[0].max_rel_residual);
        CHECK(std::abs(res.report.rounds[1].base_cost - res.report.rounds[0].base_cost) <=
              1e-8 * (1.0 + std::abs(res.report.rounds[0].base_cost)));
    }
    SECTION("enumeration agrees with the exactified solve") {
        const EnumerationResult en = enumerate_toy(p, 401);
        REQUIRE(en.feasible);
        CHECK(en.value == Approx(res.base_cost).margin(2e-2));
    }
}

TEST_CASE("already-exact problems loop zero rounds") {
    CvemParams params;
    params.demand = {1e4, 3e4};
    const NetworkProblem p = build_cvem(params);
    const ExactSolveResult res = solve_exact(p);
    REQUIRE(res.solution.status == SolveStatus::Optimal);
    CHECK(res.rounds == 0);
    CHECK(res.report.exact);
}

TEST_CASE("feasible projection on the toy pushes surplus into the cap slack") {
    const NetworkProblem p = two_branch_toy();
    const ConicProgram cp = build_relaxation(p);
    const Solution sol = solve(cp);
    REQUIRE(sol.status == SolveStatus::Optimal);

    const FeasiblePoint fp = feasible_projection(sol, cp, p);
    CHECK(fp.max_violation < 1e-6);
    // the projection recovers the true optimal cost
    CHECK(fp.cost == Approx(1.0).margin(1e-5));
    // slack absorbed the surplus the floating branch was holding
    CHECK(fp.y[0][1] ==
          Approx(fp.u[0][1] * fp.u[0][1] + 5.0 * fp.u[0][1]).margin(1e-7));

    SECTION("tight solutions project onto themselves") {
        const ExactSolveResult res = solve_exact(p);
        const FeasiblePoint same = feasible_projection(res.solution, res.program, p);
        CHECK(same.cost == Approx(res.base_cost).margin(1e-6));
        for (int m = 0; m < 2; ++m) {
            CHECK(same.y[0][m] == Approx(res.solution.w[res.program.layout.y(0, m)]).margin(1e-5));
        }
    }
}

TEST_CASE("conservative-only networks cannot shed projection surplus") {
    // One converter whose output is pinned by a conservative node to a load
    // it cannot meet exactly; its input is pinned by a second node.
    NetworkBuilder nb;
    Converter c;
    c.model = ScaledSquareModel{1.0, 0.0};
    c.u_lo = Vector::Constant(1, 0.0);
    c.u_hi = Vector::Constant(1, 2.5);
    const int conv = nb.add_converter(c);
    Buffer feed;
    feed.A = Matrix(0, 0);
    feed.B = Matrix(0, 1);
    feed.x_init = Vector(0);
    feed.u_lo = Vector::Constant(1, 2.0);
    feed.u_hi = Vector::Constant(1, 2.0);
    nb.add_buffer(feed);

    Node pin_y;
    pin_y.kind = NodeKind::Conservative;
    pin_y.g_row = {{conv, 1.0}};
    pin_y.load = {9.0};
    nb.add_node(pin_y);
    Node pin_u;
    pin_u.kind = NodeKind::Conservative;
    pin_u.f_row = {{0, 1.0}, {1, -1.0}};
    pin_u.load = {0.0};
    nb.add_node(pin_u);
    const NetworkProblem p = nb.assemble(1);

    const ConicProgram cp = build_relaxation(p, {.force = true});
    const Solution sol = solve(cp);
    REQUIRE(sol.status == SolveStatus::Optimal);
    // y is pinned at 9 while u is pinned at 2: the residual 9 - 4 = 5 has
    // nowhere to go.
    CHECK_THROWS_MATCHES(feasible_projection(sol, cp, p), Error,
                         testing::error_code_is(ErrorCode::NoDissipativePath));
}

TEST_CASE("exactness report serializes") {
    const NetworkProblem p = two_branch_toy();
    const ExactSolveResult res = solve_exact(p);
    const std::string json = res.report.to_json();
    CHECK(json.find("\"exact\": true") != std::string::npos);
    std::ostringstream os;
    res.report.write_csv(os, p);
    CHECK(os.str().rfind("converter,name,k,h,h_rel,class", 0) == 0);
}
