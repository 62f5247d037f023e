#include "powernet/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace powernet {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNodeTol = 1e-7;

void require(bool ok, ErrorCode code, const std::string& what) {
    if (!ok) throw Error(code, what);
}

}  // namespace

void GridSpec::validate() const {
    for (int c : state_counts) require(c >= 2, ErrorCode::InvalidParameter, "state grid count < 2");
    for (int c : input_counts) require(c >= 2, ErrorCode::InvalidParameter, "input grid count < 2");
}

EliminationPlan build_elimination_plan(const NetworkProblem& p, bool grid_dissipative) {
    const int M = p.num_converters();
    const int J = p.num_nodes();
    const int n_u = p.num_inputs();
    const Matrix E = Matrix(p.node_E());
    const Matrix F = Matrix(p.node_F());
    const Matrix G = Matrix(p.node_G());

    EliminationPlan plan;
    plan.E = E;
    plan.F = F;
    plan.G = G;
    std::vector<bool> known_u(n_u, false);
    std::vector<bool> known_y(M, false);
    std::vector<bool> node_used(J, false);

    auto inputs_known = [&](int m, int* missing_slot, int* missing_idx) {
        const ConverterWiring& w = p.wiring(m);
        int unknown = 0;
        std::size_t ui = 0;
        for (std::size_t i = 0; i < w.xi_is_state.size(); ++i) {
            if (w.xi_is_state[i]) continue;
            const int gi = w.input_idx[ui++];
            if (!known_u[gi]) {
                ++unknown;
                if (missing_slot) *missing_slot = static_cast<int>(i);
                if (missing_idx) *missing_idx = gi;
            }
        }
        return unknown;
    };

    while (true) {
        bool progress = false;

        // Converter outputs from known inputs.
        for (int m = 0; m < M; ++m) {
            if (known_y[m] || inputs_known(m, nullptr, nullptr) != 0) continue;
            plan.steps.push_back({EliminationPlan::Op::ConverterOutput, m, -1, true, m, -1});
            known_y[m] = true;
            progress = true;
        }
        // Conservative nodes with a single unknown.
        for (int j = 0; j < J; ++j) {
            if (node_used[j] || p.nodes()[j].kind != NodeKind::Conservative) continue;
            int unknowns = 0;
            bool target_is_output = false;
            int target = -1;
            for (int i = 0; i < n_u; ++i) {
                if (F(j, i) != 0.0 && !known_u[i]) {
                    ++unknowns;
                    target_is_output = false;
                    target = i;
                }
            }
            for (int m = 0; m < M; ++m) {
                if (G(j, m) != 0.0 && !known_y[m]) {
                    ++unknowns;
                    target_is_output = true;
                    target = m;
                }
            }
            if (unknowns != 1) continue;
            plan.steps.push_back(
                {EliminationPlan::Op::ConservativeSolve, -1, j, target_is_output, target, -1});
            node_used[j] = true;
            (target_is_output ? known_y[target] : known_u[target]) = true;
            progress = true;
        }
        // Converters with a known output and one unknown input.
        for (int m = 0; m < M; ++m) {
            if (!known_y[m]) continue;
            int slot = -1, gi = -1;
            if (inputs_known(m, &slot, &gi) != 1) continue;
            plan.steps.push_back({EliminationPlan::Op::ConverterInvert, m, -1, false, gi, slot});
            known_u[gi] = true;
            progress = true;
        }
        // Dissipative nodes resolve one unknown input to the s = 0 boundary
        // (clamped into its box; the slack then carries the remainder).
        if (!grid_dissipative) {
            for (int j = 0; j < J; ++j) {
                if (node_used[j] || p.nodes()[j].kind != NodeKind::Dissipative) continue;
                int unknowns = 0, target = -1;
                for (int i = 0; i < n_u; ++i) {
                    if (F(j, i) != 0.0 && !known_u[i]) {
                        ++unknowns;
                        target = i;
                    }
                }
                for (int m = 0; m < M; ++m) {
                    if (G(j, m) != 0.0 && !known_y[m]) unknowns += 2;  // cannot resolve outputs
                }
                if (unknowns != 1) continue;
                plan.steps.push_back(
                    {EliminationPlan::Op::DissipativeBoundary, -1, j, false, target, -1});
                node_used[j] = true;
                known_u[target] = true;
                progress = true;
            }
        }

        if (progress) continue;

        // Promote the lowest-index unknown input to a decision variable.
        int next_free = -1;
        for (int i = 0; i < n_u; ++i) {
            if (!known_u[i]) {
                next_free = i;
                break;
            }
        }
        if (next_free < 0) break;
        plan.free_inputs.push_back(next_free);
        known_u[next_free] = true;
    }

    for (int m = 0; m < M; ++m) {
        require(known_y[m], ErrorCode::SizeGuard,
                "converter " + std::to_string(m) + " could not be resolved");
    }
    for (int j = 0; j < J; ++j) {
        if (!node_used[j]) plan.check_nodes.push_back(j);
    }
    return plan;
}

StepEvaluation evaluate_step(const NetworkProblem& p, const EliminationPlan& plan,
                             const Vector& x_k, const Vector& free_values, int k) {
    const int M = p.num_converters();
    const int J = p.num_nodes();
    const int n_u = p.num_inputs();
    const Matrix& E = plan.E;
    const Matrix& F = plan.F;
    const Matrix& G = plan.G;

    StepEvaluation ev;
    ev.u = Vector::Zero(n_u);
    ev.y = Vector::Zero(M);
    for (std::size_t i = 0; i < plan.free_inputs.size(); ++i) {
        ev.u[plan.free_inputs[i]] = free_values[static_cast<int>(i)];
    }

    auto node_partial = [&](int j) {
        double acc = -p.loads()(j, k);
        for (int i = 0; i < p.num_states(); ++i) acc += E(j, i) * x_k[i];
        for (int i = 0; i < n_u; ++i) acc += F(j, i) * ev.u[i];
        for (int m = 0; m < M; ++m) acc += G(j, m) * ev.y[m];
        return acc;
    };

    const double box_slack = 1e-9;
    for (const EliminationPlan::Step& st : plan.steps) {
        switch (st.op) {
            case EliminationPlan::Op::ConverterOutput: {
                ev.y[st.converter] =
                    model_output(p.converters()[st.converter].model,
                                 p.converter_xi(st.converter, x_k, ev.u));
                break;
            }
            case EliminationPlan::Op::ConservativeSolve: {
                const double coef =
                    st.target_is_output ? G(st.node, st.target) : F(st.node, st.target);
                double acc = node_partial(st.node);
                acc -= coef * (st.target_is_output ? ev.y[st.target] : ev.u[st.target]);
                const double val = -acc / coef;
                if (st.target_is_output) {
                    ev.y[st.target] = val;
                } else {
                    const double lo = p.u_lo()[st.target], hi = p.u_hi()[st.target];
                    if (val < lo - box_slack * (1.0 + std::abs(lo)) ||
                        val > hi + box_slack * (1.0 + std::abs(hi))) {
                        return ev;  // infeasible
                    }
                    ev.u[st.target] = val;
                }
                break;
            }
            case EliminationPlan::Op::ConverterInvert: {
                Vector xi = p.converter_xi(st.converter, x_k, ev.u);
                xi[st.slot] = 0.5 * (p.u_lo()[st.target] + p.u_hi()[st.target]);
                bool ok = true;
                const double val =
                    solve_model_input(p.converters()[st.converter].model, xi,
                                      ev.y[st.converter], st.slot, p.u_lo()[st.target],
                                      p.u_hi()[st.target], ok);
                if (!ok) return ev;
                ev.u[st.target] = val;
                break;
            }
            case EliminationPlan::Op::DissipativeBoundary: {
                const double coef = F(st.node, st.target);
                double acc = node_partial(st.node) - coef * ev.u[st.target];
                // s = 0 boundary, clamped into the box; the slack check below
                // rejects the combination when the clamp under-dissipates.
                const double val =
                    std::clamp(-acc / coef, p.u_lo()[st.target], p.u_hi()[st.target]);
                ev.u[st.target] = val;
                break;
            }
        }
    }

    // Outputs must exist for every converter; verify the remaining nodes and
    // collect dissipative slacks.
    ev.s = Vector::Zero(p.num_dissipative());
    int d = 0;
    for (int j = 0; j < J; ++j) {
        const double res = node_partial(j);
        if (p.nodes()[j].kind == NodeKind::Dissipative) {
            const double s = -res;
            if (s < -kNodeTol * (1.0 + std::abs(p.loads()(j, k)))) return ev;
            ev.s[d++] = std::max(s, 0.0);
        } else if (std::abs(res) > kNodeTol * (1.0 + std::abs(p.loads()(j, k)))) {
            return ev;
        }
    }
    ev.stage_cost = p.cost_a().dot(ev.u) + p.cost_b().dot(ev.y);
    ev.feasible = true;
    return ev;
}

// ---------------------------------------------------------------------------
// Dynamic programming
// ---------------------------------------------------------------------------

namespace {

struct StateGrid {
    std::vector<Vector> axes;  ///< grid values per state dim
    std::vector<int> counts;
    int total = 1;

    Vector point(int flat) const {
        Vector x(axes.size());
        for (std::size_t d = 0; d < axes.size(); ++d) {
            x[static_cast<int>(d)] = axes[d][flat % counts[d]];
            flat /= counts[d];
        }
        return x;
    }
};

/// Multilinear interpolation; infinite corners poison the result.
double interp_value(const StateGrid& grid, const std::vector<double>& V, const Vector& x,
                    GridSpec::Interp mode) {
    const int dims = static_cast<int>(grid.axes.size());
    int lo_idx[4];
    double frac[4];
    for (int d = 0; d < dims; ++d) {
        const Vector& ax = grid.axes[d];
        const int n = grid.counts[d];
        if (x[d] < ax[0] - 1e-9 * (1.0 + std::abs(ax[0])) ||
            x[d] > ax[n - 1] + 1e-9 * (1.0 + std::abs(ax[n - 1]))) {
            return kInf;
        }
        int i = static_cast<int>((x[d] - ax[0]) / (ax[1] - ax[0]));
        i = std::clamp(i, 0, n - 2);
        lo_idx[d] = i;
        frac[d] = std::clamp((x[d] - ax[i]) / (ax[i + 1] - ax[i]), 0.0, 1.0);
        if (mode == GridSpec::Interp::Nearest) frac[d] = frac[d] < 0.5 ? 0.0 : 1.0;
    }
    double acc = 0.0;
    const int corners = 1 << dims;
    for (int c = 0; c < corners; ++c) {
        double w = 1.0;
        int flat = 0, mul = 1;
        for (int d = 0; d < dims; ++d) {
            const int bit = (c >> d) & 1;
            w *= bit ? frac[d] : 1.0 - frac[d];
            flat += (lo_idx[d] + bit) * mul;
            mul *= grid.counts[d];
        }
        const double v = V[flat];
        if (std::isinf(v)) {
            if (w > 0.0) return kInf;
            continue;
        }
        acc += w * v;
    }
    return acc;
}

}  // namespace

DpResult dp_solve(const NetworkProblem& p, const GridSpec& g, int horizon) {
    g.validate();
    const int K = horizon < 0 ? p.horizon() : std::min(horizon, p.horizon());
    const int n_x = p.num_states();
    require(n_x <= g.max_states, ErrorCode::SizeGuard, "state dimension above DP guard");
    require(K <= g.max_horizon, ErrorCode::SizeGuard, "horizon above DP guard");

    DpResult res;
    if (K == 0) {
        res.x = {p.x_init()};
        return res;
    }

    const EliminationPlan plan = build_elimination_plan(p, g.grid_dissipative_inputs);
    const int n_free = static_cast<int>(plan.free_inputs.size());

    // State grid over the running box.
    StateGrid grid;
    grid.axes.resize(n_x);
    grid.counts.resize(n_x);
    for (int d = 0; d < n_x; ++d) {
        const int count = g.state_counts[std::min<std::size_t>(d, g.state_counts.size() - 1)];
        const double lo = p.x_lo()[d];
        const double hi = p.x_hi()[d];
        require(std::isfinite(lo) && std::isfinite(hi), ErrorCode::UnboundedBox,
                "DP needs bounded states");
        grid.counts[d] = count;
        grid.axes[d] = Vector::LinSpaced(count, lo, hi);
        grid.total *= count;
    }

    // Free-input grid (shared across steps).
    std::vector<Vector> controls;
    if (n_free == 0) {
        controls.push_back(Vector(0));
    } else {
        std::vector<Vector> axes(n_free);
        long combos = 1;
        for (int d = 0; d < n_free; ++d) {
            const int count = g.input_counts[std::min<std::size_t>(d, g.input_counts.size() - 1)];
            const int gi = plan.free_inputs[d];
            require(std::isfinite(p.u_lo()[gi]) && std::isfinite(p.u_hi()[gi]),
                    ErrorCode::UnboundedBox, "DP needs bounded free inputs");
            axes[d] = Vector::LinSpaced(count, p.u_lo()[gi], p.u_hi()[gi]);
            combos *= count;
        }
        require(static_cast<long>(grid.total) * combos * K <= g.max_evals, ErrorCode::SizeGuard,
                "DP evaluation budget exceeded");
        controls.reserve(combos);
        std::vector<int> idx(n_free, 0);
        while (true) {
            Vector c(n_free);
            for (int d = 0; d < n_free; ++d) c[d] = axes[d][idx[d]];
            controls.push_back(std::move(c));
            int d = 0;
            while (d < n_free && ++idx[d] == axes[d].size()) idx[d++] = 0;
            if (d == n_free) break;
        }
    }

    // Global one-step dynamics x' = A x + B u + f_k assembled per buffer.
    auto step_dynamics = [&](const Vector& x, const Vector& u, int k) {
        Vector xn = Vector::Zero(n_x);
        for (const SubsystemInfo& info : p.subsystems()) {
            if (info.buffer < 0 || info.n_x == 0) continue;
            const Buffer& b = p.buffers()[info.buffer];
            Vector uloc(info.n_u);
            for (int c = 0; c < info.n_u; ++c) uloc[c] = u[info.u_offset + c];
            Vector xloc = b.A * x.segment(info.x_offset, info.n_x) + b.B * uloc;
            if (!b.f.empty()) xloc += b.f.size() == 1 ? b.f[0] : b.f[k];
            xn.segment(info.x_offset, info.n_x) = xloc;
        }
        return xn;
    };

    // Backward sweep, keeping every stage table: the exact rollout below
    // interpolates from off-grid states.
    std::vector<std::vector<double>> value_tables(K + 1);
    value_tables[K].resize(grid.total);
    for (int i = 0; i < grid.total; ++i) {
        const Vector x = grid.point(i);
        bool ok = true;
        for (int d = 0; d < n_x; ++d) {
            if (x[d] < p.x_terminal_lo()[d] - 1e-9 || x[d] > p.x_terminal_hi()[d] + 1e-9) {
                ok = false;
            }
        }
        value_tables[K][i] = ok ? 0.0 : kInf;
    }
    for (int k = K - 1; k >= 0; --k) {
        std::vector<double>& cur = value_tables[k];
        cur.assign(grid.total, kInf);
        const std::vector<double>& nxt = value_tables[k + 1];
        for (int i = 0; i < grid.total; ++i) {
            const Vector x = grid.point(i);
            double best = kInf;
            for (const Vector& ctrl : controls) {
                const StepEvaluation ev = evaluate_step(p, plan, x, ctrl, k);
                if (!ev.feasible) continue;
                const double vnext = interp_value(grid, nxt, step_dynamics(x, ev.u, k), g.interp);
                if (std::isinf(vnext)) continue;
                best = std::min(best, ev.stage_cost + vnext);
            }
            cur[i] = best;
        }
    }

    Vector x = p.x_init();
    res.x.push_back(x);
    for (int k = 0; k < K; ++k) {
        double best = kInf;
        StepEvaluation best_ev;
        Vector best_next;
        for (const Vector& ctrl : controls) {
            const StepEvaluation ev = evaluate_step(p, plan, x, ctrl, k);
            if (!ev.feasible) continue;
            const Vector xn = step_dynamics(x, ev.u, k);
            const double vnext = interp_value(grid, value_tables[k + 1], xn, g.interp);
            if (std::isinf(vnext)) continue;
            const double total = ev.stage_cost + vnext;
            if (total < best) {
                best = total;
                best_ev = ev;
                best_next = xn;
            }
        }
        require(std::isfinite(best), ErrorCode::InfeasibleBounds,
                "DP rollout found no feasible control at step " + std::to_string(k));
        res.value += best_ev.stage_cost;
        res.u.push_back(best_ev.u);
        res.y.push_back(best_ev.y);
        res.s.push_back(best_ev.s);
        x = best_next;
        res.x.push_back(x);
    }
    return res;
}

EnumerationResult enumerate_toy(const NetworkProblem& p, int resolution) {
    require(resolution >= 2, ErrorCode::InvalidParameter, "resolution must be >= 2");
    EnumerationResult out;

    if (p.num_states() == 0) {
        const EliminationPlan plan = build_elimination_plan(p, true);
        const int n_free = static_cast<int>(plan.free_inputs.size());
        require(n_free <= 3, ErrorCode::SizeGuard, "too many free inputs for enumeration");
        std::vector<Vector> axes(n_free);
        long combos = 1;
        for (int d = 0; d < n_free; ++d) {
            const int gi = plan.free_inputs[d];
            axes[d] = Vector::LinSpaced(resolution, p.u_lo()[gi], p.u_hi()[gi]);
            combos *= resolution;
        }
        double total = 0.0;
        const Vector x0(0);
        for (int k = 0; k < p.horizon(); ++k) {
            double best = kInf;
            for (long c = 0; c < combos; ++c) {
                Vector ctrl(n_free);
                long rem = c;
                for (int d = 0; d < n_free; ++d) {
                    ctrl[d] = axes[d][rem % resolution];
                    rem /= resolution;
                }
                const StepEvaluation ev = evaluate_step(p, plan, x0, ctrl, k);
                if (ev.feasible) best = std::min(best, ev.stage_cost);
            }
            if (std::isinf(best)) return out;  // empty feasible set
            total += best;
        }
        out.feasible = true;
        out.value = total;
        return out;
    }

    GridSpec g;
    g.state_counts = {resolution};
    g.input_counts = {resolution};
    g.grid_dissipative_inputs = true;
    try {
        const DpResult dp = dp_solve(p, g);
        out.feasible = true;
        out.value = dp.value;
    } catch (const Error& e) {
        if (e.code() != ErrorCode::InfeasibleBounds) throw;
    }
    return out;
}

}  // namespace powernet
