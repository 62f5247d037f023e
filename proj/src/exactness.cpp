#include "powernet/exactness.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace powernet {

namespace {

const char* class_name(TightClass c) {
    switch (c) {
        case TightClass::Tight: return "tight";
        case TightClass::SlackZeroDual: return "slack-zero-dual";
        case TightClass::Anomalous: return "anomalous";
    }
    return "?";
}

}  // namespace

double ExactnessReport::max_residual_of(int converter) const {
    double worst = 0.0;
    for (const ConverterAudit& e : entries) {
        if (e.converter == converter) worst = std::max(worst, e.h_rel);
    }
    return worst;
}

ExactnessReport audit(const Solution& sol, const ConicProgram& cp, const NetworkProblem& p,
                      const ExactnessOptions& opts) {
    if (sol.status != SolveStatus::Optimal) {
        throw Error(ErrorCode::NotSolved, "audit requires an optimal solution");
    }
    const VarLayout& L = cp.layout;
    const Matrix G = Matrix(p.node_G());
    const int M = p.num_converters();
    const int J = p.num_nodes();

    ExactnessReport rep;
    rep.entries.reserve(static_cast<std::size_t>(L.K) * M);
    rep.min_reduced_cost = std::numeric_limits<double>::infinity();
    rep.min_lambda_on_g_rows = std::numeric_limits<double>::infinity();

    std::vector<bool> g_row(J, false);
    for (int j = 0; j < J; ++j) {
        for (int m = 0; m < M; ++m) {
            if (G(j, m) > 0.0) g_row[j] = true;
        }
    }

    Vector x_k(L.n_x), u_k(L.n_u);
    for (int k = 0; k < L.K; ++k) {
        for (int i = 0; i < L.n_x; ++i) x_k[i] = sol.w[L.x(k, i)];
        for (int i = 0; i < L.n_u; ++i) u_k[i] = sol.w[L.u(k, i)];
        for (int j = 0; j < J; ++j) {
            if (g_row[j]) {
                rep.min_lambda_on_g_rows =
                    std::min(rep.min_lambda_on_g_rows, sol.eq_dual[cp.node_row(j, k)]);
            }
        }
        for (int m = 0; m < M; ++m) {
            ConverterAudit e;
            e.converter = m;
            e.step = k;
            e.y = sol.w[L.y(k, m)];
            e.h = p.converter_residual(m, x_k, u_k, e.y);
            e.h_rel = std::abs(e.h) / (1.0 + std::abs(e.y));
            e.reduced_cost = cp.cost[L.y(k, m)];
            for (int j = 0; j < J; ++j) {
                e.reduced_cost += G(j, m) * sol.eq_dual[cp.node_row(j, k)];
            }
            e.mu = converter_multiplier(cp, sol, p, m, k);
            if (e.h_rel <= opts.tight_tol) {
                e.cls = TightClass::Tight;
                ++rep.n_tight;
            } else if (std::abs(e.reduced_cost) <= opts.dual_tol) {
                e.cls = TightClass::SlackZeroDual;
                ++rep.n_slack;
            } else {
                e.cls = TightClass::Anomalous;
                ++rep.n_anomalous;
            }
            rep.max_rel_residual = std::max(rep.max_rel_residual, e.h_rel);
            rep.min_reduced_cost = std::min(rep.min_reduced_cost, e.reduced_cost);
            rep.entries.push_back(e);
        }
    }
    rep.exact = rep.n_slack == 0 && rep.n_anomalous == 0;
    return rep;
}

std::string ExactnessReport::to_json() const {
    nlohmann::json j;
    j["exact"] = exact;
    j["max_rel_residual"] = max_rel_residual;
    j["min_reduced_cost"] = min_reduced_cost;
    j["min_lambda_on_g_rows"] = min_lambda_on_g_rows;
    j["tight"] = n_tight;
    j["slack_zero_dual"] = n_slack;
    j["anomalous"] = n_anomalous;
    nlohmann::json rs = nlohmann::json::array();
    for (const Round& r : rounds) {
        rs.push_back({{"sigma", r.sigma},
                      {"regularized_outputs", r.regularized_outputs},
                      {"max_rel_residual", r.max_rel_residual},
                      {"base_cost", r.base_cost}});
    }
    j["rounds"] = rs;
    return j.dump(2);
}

void ExactnessReport::write_csv(std::ostream& os, const NetworkProblem& p) const {
    os << "converter,name,k,h,h_rel,class\n";
    os.precision(17);
    for (const ConverterAudit& e : entries) {
        os << e.converter << "," << p.converters()[e.converter].name << "," << e.step << ","
           << e.h << "," << e.h_rel << "," << class_name(e.cls) << "\n";
    }
}

ExactSolveResult solve_exact(const NetworkProblem& p, const SolverSettings& solver_settings,
                             const ExactnessOptions& opts) {
    return solve_exact(p, build_relaxation(p), solver_settings, opts);
}

ExactSolveResult solve_exact(const NetworkProblem& p, const ConicProgram& cp0,
                             const SolverSettings& solver_settings, const ExactnessOptions& opts) {
    ExactSolveResult res;
    res.program = cp0;
    res.solution = solve(res.program, solver_settings);
    if (res.solution.status != SolveStatus::Optimal) return res;

    std::vector<ExactnessReport::Round> trace;
    res.report = audit(res.solution, res.program, p, opts);
    const double base0 = cp0.cost.dot(res.solution.w);
    res.base_cost = base0;
    trace.push_back({0.0, 0, res.report.max_rel_residual, base0});

    double sigma = opts.sigma0;
    while (!res.report.exact && res.rounds < opts.max_rounds) {
        std::vector<int> targets;
        for (const ConverterAudit& e : res.report.entries) {
            if (e.cls != TightClass::Tight) {
                targets.push_back(res.program.layout.y(e.step, e.converter));
            }
        }
        res.program = add_regularization(res.program, targets, sigma);
        res.solution = solve(res.program, solver_settings);
        if (res.solution.status != SolveStatus::Optimal) return res;
        res.report = audit(res.solution, res.program, p, opts);
        res.base_cost = cp0.cost.dot(res.solution.w);
        ++res.rounds;
        trace.push_back({sigma, static_cast<int>(targets.size()), res.report.max_rel_residual,
                         res.base_cost});

        if (std::abs(res.base_cost - base0) > opts.cost_drift_tol * (1.0 + std::abs(base0))) {
            throw Error(ErrorCode::NotExactified,
                        "regularization moved the base cost by " +
                            std::to_string(res.base_cost - base0));
        }
        sigma *= 0.5;
    }
    res.report.rounds = std::move(trace);
    return res;
}

// ---------------------------------------------------------------------------
// Feasible projection
// ---------------------------------------------------------------------------

namespace {

struct WorkPoint {
    std::vector<Vector> x, u, y, s;
};

}  // namespace

FeasiblePoint feasible_projection(const Solution& sol, const ConicProgram& cp,
                                  const NetworkProblem& p, double tol) {
    if (sol.status != SolveStatus::Optimal) {
        throw Error(ErrorCode::NotSolved, "projection requires a solved relaxation");
    }
    const VarLayout& L = cp.layout;
    const int K = L.K;
    const int M = p.num_converters();
    const int J = p.num_nodes();
    const Matrix E = Matrix(p.node_E());
    const Matrix F = Matrix(p.node_F());
    const Matrix G = Matrix(p.node_G());

    WorkPoint wp;
    wp.x.resize(K + 1);
    wp.u.resize(K);
    wp.y.resize(K);
    wp.s.resize(K);
    for (int k = 0; k <= K; ++k) {
        wp.x[k].resize(L.n_x);
        for (int i = 0; i < L.n_x; ++i) wp.x[k][i] = sol.w[L.x(k, i)];
    }
    for (int k = 0; k < K; ++k) {
        wp.u[k].resize(L.n_u);
        wp.y[k].resize(M);
        wp.s[k].resize(L.n_s);
        for (int i = 0; i < L.n_u; ++i) wp.u[k][i] = sol.w[L.u(k, i)];
        for (int m = 0; m < M; ++m) wp.y[k][m] = sol.w[L.y(k, m)];
        for (int d = 0; d < L.n_s; ++d) wp.s[k][d] = sol.w[L.s(k, d)];
    }

    // Which global inputs drive buffer dynamics (changing them forces a
    // state re-integration), and per-node dissipative slack columns.
    std::vector<bool> drives_buffer(L.n_u, false);
    for (const SubsystemInfo& info : p.subsystems()) {
        if (info.buffer < 0) continue;
        const Buffer& b = p.buffers()[info.buffer];
        for (int c = 0; c < info.n_u && b.B.rows() > 0; ++c) {
            if (b.B.col(c).cwiseAbs().maxCoeff() > 0.0) drives_buffer[info.u_offset + c] = true;
        }
    }
    std::vector<int> slack_col(J, -1);
    {
        int d = 0;
        for (int j = 0; j < J; ++j) {
            if (p.nodes()[j].kind == NodeKind::Dissipative) slack_col[j] = d++;
        }
    }
    std::vector<bool> node_all_diss(M, true);
    std::vector<bool> in_some_node(M, false);
    for (int m = 0; m < M; ++m) {
        for (int j = 0; j < J; ++j) {
            if (G(j, m) != 0.0) {
                in_some_node[m] = true;
                if (slack_col[j] < 0) node_all_diss[m] = false;
            }
        }
    }

    bool any_dirty_buffer = false;
    const double feas_tol = 10.0 * tol;

    for (int outer = 0; outer < 4; ++outer) {
        bool changed = false;
        for (int pass = 0; pass < 6; ++pass) {
            bool pass_changed = false;
            for (int k = 0; k < K; ++k) {
                // Tighten converters.
                for (int m = 0; m < M; ++m) {
                    const double h = p.converter_residual(m, wp.x[k], wp.u[k], wp.y[k][m]);
                    if (std::abs(h) <= tol * (1.0 + std::abs(wp.y[k][m]))) continue;
                    pass_changed = true;
                    if (!in_some_node[m] || node_all_diss[m]) {
                        // Lower y onto the manifold; dissipative slacks absorb.
                        const double y_new =
                            model_output(p.converters()[m].model, p.converter_xi(m, wp.x[k], wp.u[k]));
                        const double delta = wp.y[k][m] - y_new;
                        wp.y[k][m] = y_new;
                        for (int j = 0; j < J; ++j) {
                            if (G(j, m) == 0.0) continue;
                            wp.s[k][slack_col[j]] += G(j, m) * delta;
                            if (wp.s[k][slack_col[j]] < -feas_tol) {
                                throw Error(ErrorCode::NoDissipativePath,
                                            "slack went negative while tightening converter " +
                                                std::to_string(m));
                            }
                        }
                    } else {
                        // Output pinned through a conservative node: move one
                        // of the converter's own inputs onto the manifold.
                        const ConverterWiring& w = p.wiring(m);
                        Vector xi = p.converter_xi(m, wp.x[k], wp.u[k]);
                        int slot = -1, gidx = -1;
                        std::size_t ui = 0;
                        // prefer inputs that do not drive dynamics
                        for (int want_free = 1; want_free >= 0 && slot < 0; --want_free) {
                            ui = 0;
                            for (std::size_t i = 0; i < w.xi_is_state.size(); ++i) {
                                if (w.xi_is_state[i]) continue;
                                const int gi = w.input_idx[ui++];
                                if (static_cast<int>(drives_buffer[gi]) == 1 - want_free) {
                                    slot = static_cast<int>(i);
                                    gidx = gi;
                                    break;
                                }
                            }
                        }
                        if (slot < 0) {
                            throw Error(ErrorCode::NoDissipativePath,
                                        "converter " + std::to_string(m) +
                                            " has no adjustable input");
                        }
                        bool ok = true;
                        const double u_new =
                            solve_model_input(p.converters()[m].model, xi, wp.y[k][m], slot,
                                              p.u_lo()[gidx], p.u_hi()[gidx], ok);
                        if (!ok) {
                            throw Error(ErrorCode::NoDissipativePath,
                                        "no in-box input solves converter " + std::to_string(m));
                        }
                        wp.u[k][gidx] = u_new;
                        if (drives_buffer[gidx]) any_dirty_buffer = true;
                    }
                }
                // Repair node rows.
                const Vector res = p.node_residual(k, wp.x[k], wp.u[k], wp.y[k], wp.s[k]);
                for (int j = 0; j < J; ++j) {
                    if (std::abs(res[j]) <= tol * (1.0 + std::abs(p.loads()(j, k)))) continue;
                    pass_changed = true;
                    if (slack_col[j] >= 0) {
                        wp.s[k][slack_col[j]] -= res[j];
                        if (wp.s[k][slack_col[j]] < -feas_tol) {
                            throw Error(ErrorCode::NoDissipativePath,
                                        "dissipative node " + std::to_string(j) +
                                            " cannot absorb the projection surplus");
                        }
                        continue;
                    }
                    // Conservative: rebalance through an output (its converter
                    // is re-tightened on the next sweep), else a free input.
                    int best_m = -1;
                    for (int m = 0; m < M; ++m) {
                        if (G(j, m) != 0.0 && (best_m < 0 || std::abs(G(j, m)) > std::abs(G(j, best_m)))) {
                            best_m = m;
                        }
                    }
                    if (best_m >= 0) {
                        wp.y[k][best_m] -= res[j] / G(j, best_m);
                        continue;
                    }
                    int best_u = -1;
                    for (int i = 0; i < L.n_u; ++i) {
                        if (F(j, i) != 0.0 && !drives_buffer[i]) best_u = i;
                    }
                    if (best_u < 0) {
                        for (int i = 0; i < L.n_u; ++i) {
                            if (F(j, i) != 0.0) best_u = i;
                        }
                    }
                    if (best_u < 0) {
                        throw Error(ErrorCode::NoDissipativePath,
                                    "conservative node " + std::to_string(j) +
                                        " has no adjustable member");
                    }
                    const double u_new = wp.u[k][best_u] - res[j] / F(j, best_u);
                    if (u_new < p.u_lo()[best_u] - feas_tol || u_new > p.u_hi()[best_u] + feas_tol) {
                        throw Error(ErrorCode::ProjectionInfeasible,
                                    "node repair pushes input outside its box");
                    }
                    wp.u[k][best_u] = u_new;
                    if (drives_buffer[best_u]) any_dirty_buffer = true;
                }
            }
            changed = pass_changed;
            if (!pass_changed) break;
        }

        // Re-integrate the state trajectories with the final inputs.
        if (any_dirty_buffer) {
            for (const SubsystemInfo& info : p.subsystems()) {
                if (info.buffer < 0 || info.n_x == 0) continue;
                const Buffer& b = p.buffers()[info.buffer];
                for (int k = 0; k < K; ++k) {
                    Vector uloc(info.n_u);
                    for (int c = 0; c < info.n_u; ++c) uloc[c] = wp.u[k][info.u_offset + c];
                    const Vector f =
                        b.f.empty() ? Vector::Zero(info.n_x)
                                    : (b.f.size() == 1 ? b.f[0] : b.f[k]);
                    wp.x[k + 1].segment(info.x_offset, info.n_x) =
                        b.A * wp.x[k].segment(info.x_offset, info.n_x) + b.B * uloc + f;
                }
            }
        }
        if (!changed) break;
        if (outer == 3) {
            throw Error(ErrorCode::ProjectionInfeasible, "projection did not converge");
        }
    }

    // Verify the point against the original problem and price it.
    FeasiblePoint fp;
    fp.x = wp.x;
    fp.u = wp.u;
    fp.y = wp.y;
    fp.s = wp.s;
    double viol = 0.0;
    for (int k = 0; k < K; ++k) {
        for (int m = 0; m < M; ++m) {
            const double h = p.converter_residual(m, wp.x[k], wp.u[k], wp.y[k][m]);
            viol = std::max(viol, std::abs(h) / (1.0 + std::abs(wp.y[k][m])));
        }
        const Vector res = p.node_residual(k, wp.x[k], wp.u[k], wp.y[k], wp.s[k]);
        for (int j = 0; j < J; ++j) {
            viol = std::max(viol, std::abs(res[j]) / (1.0 + std::abs(p.loads()(j, k))));
        }
        for (int d = 0; d < L.n_s; ++d) viol = std::max(viol, -wp.s[k][d]);
        for (int i = 0; i < L.n_u; ++i) {
            viol = std::max(viol, (p.u_lo()[i] - wp.u[k][i]) / (1.0 + std::abs(p.u_lo()[i])));
            viol = std::max(viol, (wp.u[k][i] - p.u_hi()[i]) / (1.0 + std::abs(p.u_hi()[i])));
        }
    }
    for (int k = 1; k <= K; ++k) {
        const Vector& lo = k == K ? p.x_terminal_lo() : p.x_lo();
        const Vector& hi = k == K ? p.x_terminal_hi() : p.x_hi();
        for (int i = 0; i < L.n_x; ++i) {
            viol = std::max(viol, (lo[i] - wp.x[k][i]) / (1.0 + std::abs(lo[i])));
            viol = std::max(viol, (wp.x[k][i] - hi[i]) / (1.0 + std::abs(hi[i])));
        }
    }
    fp.max_violation = viol;
    if (viol > 100.0 * tol) {
        throw Error(ErrorCode::ProjectionInfeasible,
                    "projected point violates constraints by " + std::to_string(viol));
    }
    fp.cost = 0.0;
    for (int k = 0; k < K; ++k) {
        fp.cost += p.cost_a().dot(wp.u[k]) + p.cost_b().dot(wp.y[k]);
    }
    return fp;
}

}  // namespace powernet
