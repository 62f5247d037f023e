#include <algorithm>
#include <cmath>
#include <limits>

#include "powernet/solver.hpp"

namespace powernet {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

StandardForm to_standard(const ConicProgram& cp, StandardMap* map_out) {
    const int n = cp.num_vars();
    StandardForm form;
    form.c = cp.cost;

    StandardMap map;
    map.lo_row.assign(n, -1);
    map.hi_row.assign(n, -1);

    // Pinned variables (lo == hi) become equality rows appended below the
    // structured ones; a pair of opposing LP rows would leave the cone
    // interior empty.
    std::vector<int> pinned;
    for (int i = 0; i < n; ++i) {
        if (std::isfinite(cp.lo[i]) && cp.lo[i] == cp.hi[i]) pinned.push_back(i);
    }
    {
        std::vector<Triplet> ta;
        ta.reserve(cp.eq_A.nonZeros() + pinned.size());
        for (int c = 0; c < cp.eq_A.outerSize(); ++c) {
            for (SparseMatrix::InnerIterator it(cp.eq_A, c); it; ++it) {
                ta.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                                it.value());
            }
        }
        const int base = static_cast<int>(cp.eq_A.rows());
        form.b.resize(base + static_cast<int>(pinned.size()));
        form.b.head(base) = cp.eq_b;
        for (std::size_t k = 0; k < pinned.size(); ++k) {
            ta.emplace_back(base + static_cast<int>(k), pinned[k], 1.0);
            form.b[base + static_cast<int>(k)] = cp.lo[pinned[k]];
        }
        form.A.resize(base + static_cast<int>(pinned.size()), n);
        form.A.setFromTriplets(ta.begin(), ta.end());
    }

    std::vector<Triplet> trip;
    std::vector<double> h;
    int row = 0;

    // LP block: finite bounds, linear inequalities, then 1-dim cones.
    for (int i = 0; i < n; ++i) {
        if (std::isfinite(cp.lo[i]) && cp.lo[i] == cp.hi[i]) continue;
        if (std::isfinite(cp.hi[i])) {
            trip.emplace_back(row, i, 1.0);
            h.push_back(cp.hi[i]);
            map.hi_row[i] = row++;
        }
        if (std::isfinite(cp.lo[i])) {
            trip.emplace_back(row, i, -1.0);
            h.push_back(-cp.lo[i]);
            map.lo_row[i] = row++;
        }
    }
    for (const LinearInequality& li : cp.lin_ineqs) {
        for (const auto& [var, coef] : li.terms) trip.emplace_back(row, var, coef);
        h.push_back(-li.offset);
        map.lin_row.push_back(row++);
    }
    map.cone_row.assign(cp.cones.size(), -1);
    map.cone_in_lp.assign(cp.cones.size(), false);
    for (std::size_t ci = 0; ci < cp.cones.size(); ++ci) {
        const ConeConstraint& cone = cp.cones[ci];
        if (cone.dim != 1) continue;
        // t0 >= 0 rows live in the LP block:  -P w + s = q.
        map.cone_in_lp[ci] = true;
        map.cone_row[ci] = row;
        for (const Triplet& t : cone.rows) trip.emplace_back(row, t.col(), -t.value());
        h.push_back(cone.offset[0]);
        ++row;
    }
    map.n_lp = row;
    form.n_lp = row;

    // Second-order cones:  s = P w + q  becomes  -P w + s = q.
    for (std::size_t ci = 0; ci < cp.cones.size(); ++ci) {
        const ConeConstraint& cone = cp.cones[ci];
        if (cone.dim == 1) continue;
        map.cone_row[ci] = row;
        for (const Triplet& t : cone.rows) {
            trip.emplace_back(row + t.row(), t.col(), -t.value());
        }
        for (int r = 0; r < cone.dim; ++r) h.push_back(cone.offset[r]);
        form.soc_dims.push_back(cone.dim);
        row += cone.dim;
    }

    form.G.resize(row, n);
    form.G.setFromTriplets(trip.begin(), trip.end());
    form.h = Eigen::Map<Vector>(h.data(), static_cast<int>(h.size()));
    if (map_out) *map_out = map;
    return form;
}

Solution solve(const ConicProgram& cp, const SolverSettings& settings) {
    StandardMap map;
    const StandardForm form = to_standard(cp, &map);
    const StandardSolution std_sol = solve_standard(form, settings);

    Solution sol;
    sol.status = std_sol.status;
    sol.metrics = std_sol.metrics;
    sol.w = std_sol.x;
    sol.eq_dual = std_sol.y;

    const int n = cp.num_vars();
    sol.bound_dual_lo = Vector::Zero(n);
    sol.bound_dual_hi = Vector::Zero(n);
    for (int i = 0; i < n; ++i) {
        if (map.lo_row[i] >= 0) sol.bound_dual_lo[i] = std_sol.z[map.lo_row[i]];
        if (map.hi_row[i] >= 0) sol.bound_dual_hi[i] = std_sol.z[map.hi_row[i]];
    }
    sol.lin_dual = Vector::Zero(static_cast<int>(cp.lin_ineqs.size()));
    for (std::size_t i = 0; i < cp.lin_ineqs.size(); ++i) {
        sol.lin_dual[static_cast<int>(i)] = std_sol.z[map.lin_row[i]];
    }
    sol.cone_dual.resize(cp.cones.size());
    for (std::size_t ci = 0; ci < cp.cones.size(); ++ci) {
        const int r0 = map.cone_row[ci];
        sol.cone_dual[ci] = std_sol.z.segment(r0, cp.cones[ci].dim);
    }
    return sol;
}

Solution solve(const ConicProgram& cp, double tol, int max_iter) {
    SolverSettings settings;
    settings.tol = tol;
    settings.max_iter = max_iter;
    return solve(cp, settings);
}

double converter_multiplier(const ConicProgram& cp, const Solution& sol, const NetworkProblem& p,
                            int m, int k) {
    // Locate the cone of converter m at step k.
    const int M = p.num_converters();
    const std::size_t ci = static_cast<std::size_t>(k) * M + m;
    if (ci >= cp.cones.size() || cp.cones[ci].converter != m || cp.cones[ci].step != k) {
        throw Error(ErrorCode::InvalidParameter, "cone bookkeeping mismatch");
    }
    const Vector& z = sol.cone_dual[ci];
    const double scale = cp.cones[ci].h_scale;
    const ConverterModel& model = p.converters()[m].model;
    if (std::holds_alternative<HyperbolicModel>(model)) {
        // rows carry y/b and b(u+eps); the dual of h <= 0 recovers as
        // (z0 + z2) / (b (u + eps))
        const double eps = std::get<HyperbolicModel>(model).eps;
        const ConverterWiring& w = p.wiring(m);
        const double u = sol.w[cp.layout.u(k, w.input_idx.at(0))];
        return (z[0] + z[2]) / (scale * (u + eps));
    }
    if (z.size() == 1) return z[0] / scale;
    return (z[0] + z[z.size() - 1]) / scale;
}

KktReport kkt_report(const ConicProgram& cp, const Solution& sol) {
    if (sol.status != SolveStatus::Optimal) {
        throw Error(ErrorCode::NotSolved, "kkt_report requires an optimal solution");
    }
    KktReport report;

    // Stationarity of the standard form: c + A'y + G'z = 0 with z recombined
    // from bound, linear, and cone duals.
    Vector station = cp.cost;
    station += cp.eq_A.transpose() * sol.eq_dual;
    station += sol.bound_dual_hi;
    station -= sol.bound_dual_lo;
    for (std::size_t i = 0; i < cp.lin_ineqs.size(); ++i) {
        for (const auto& [var, coef] : cp.lin_ineqs[i].terms) {
            station[var] += coef * sol.lin_dual[static_cast<int>(i)];
        }
    }
    for (std::size_t ci = 0; ci < cp.cones.size(); ++ci) {
        for (const Triplet& t : cp.cones[ci].rows) {
            station[t.col()] -= t.value() * sol.cone_dual[ci][t.row()];
        }
    }
    report.stationarity = station.lpNorm<Eigen::Infinity>();
    report.eq_residual = (cp.eq_A * sol.w - cp.eq_b).lpNorm<Eigen::Infinity>();

    double comp = 0.0, worst_cone = 0.0;
    for (std::size_t ci = 0; ci < cp.cones.size(); ++ci) {
        const ConeConstraint& cone = cp.cones[ci];
        Vector sc = cone.offset;
        for (const Triplet& t : cone.rows) sc[t.row()] += t.value() * sol.w[t.col()];
        comp = std::max(comp, std::abs(sc.dot(sol.cone_dual[ci])));
        const double margin =
            cone.dim == 1 ? sc[0] : sc[0] - sc.tail(cone.dim - 1).norm();
        worst_cone = std::max(worst_cone, std::max(0.0, -margin));
    }
    report.complementarity = comp;
    report.cone_residual = worst_cone;
    return report;
}

KktReport kkt_report(const ConicProgram& cp, const Solution& sol, const NetworkProblem& p) {
    KktReport report = kkt_report(cp, sol);

    const VarLayout& L = cp.layout;
    const Matrix G = Matrix(p.node_G());
    const int M = p.num_converters();
    const int J = p.num_nodes();

    double worst = 0.0, comp = 0.0;
    for (int k = 0; k < L.K; ++k) {
        Vector x_k(L.n_x), u_k(L.n_u);
        for (int i = 0; i < L.n_x; ++i) x_k[i] = sol.w[L.x(k, i)];
        for (int i = 0; i < L.n_u; ++i) u_k[i] = sol.w[L.u(k, i)];
        for (int m = 0; m < M; ++m) {
            const double y = sol.w[L.y(k, m)];
            double lambda_term = cp.cost[L.y(k, m)];
            for (int j = 0; j < J; ++j) {
                lambda_term += G(j, m) * sol.eq_dual[cp.node_row(j, k)];
            }
            Vector dh_dx, dh_du;
            double dh_dy = 0.0;
            p.converter_jacobian(m, x_k, u_k, y, dh_dx, dh_du, dh_dy);
            const double mu = converter_multiplier(cp, sol, p, m, k);
            worst = std::max(worst, std::abs(lambda_term + dh_dy * mu));
            const double h = p.converter_residual(m, x_k, u_k, y);
            comp = std::max(comp, std::abs(mu * h));
        }
    }
    report.output_stationarity = worst;
    report.mu_complementarity = comp;
    return report;
}

}  // namespace powernet
