#include "powernet/transcription.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "powernet/checker.hpp"

namespace powernet {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Largest output magnitude of the quadratic model over the box corners;
/// used to normalize the cone. Infinite edges contribute unit points.
double quad_scale(const Matrix& Q, const Vector& a, double beta, const Vector& lo,
                  const Vector& hi) {
    const int n = static_cast<int>(a.size());
    if (lo.size() != n || hi.size() != n || n > 12) return 1.0;
    double worst = 1.0;
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
        Vector xi(n);
        for (int d = 0; d < n; ++d) {
            double v = (mask >> d) & 1u ? hi[d] : lo[d];
            if (!std::isfinite(v)) v = v > 0 ? 1.0 : -1.0;
            xi[d] = v;
        }
        worst = std::max(worst, std::abs(0.5 * xi.dot(Q * xi) + a.dot(xi) + beta));
    }
    return worst;
}

ConeConstraint quadratic_cone(const Matrix& Q, const Vector& a, double beta,
                              const std::vector<int>& xi_vars, int y_var, double shift,
                              double scale) {
    const int n = static_cast<int>(a.size());

    // Relax h/r <= 0 with r = scale:
    //   1/2 xi'(Q/r) xi <= t,  t = (y - a'xi - beta)/r, as
    //   || [L'xi; t - 1/2] || <= t + 1/2  with  L L' = Q/r.
    Eigen::LLT<Matrix> llt(Q / scale + shift * Matrix::Identity(n, n));
    if (llt.info() != Eigen::Success) {
        throw Error(ErrorCode::NotRelaxable, "indefinite quadratic form");
    }
    const Matrix Lt = llt.matrixL().transpose();

    ConeConstraint cone;
    cone.dim = n + 2;
    cone.offset = Vector::Zero(cone.dim);
    cone.h_scale = scale;

    cone.rows.emplace_back(0, y_var, 1.0 / scale);
    for (int i = 0; i < n; ++i) {
        if (a[i] != 0.0) cone.rows.emplace_back(0, xi_vars[i], -a[i] / scale);
    }
    cone.offset[0] = -beta / scale + 0.5;

    for (int r = 0; r < n; ++r) {
        for (int i = 0; i < n; ++i) {
            if (Lt(r, i) != 0.0) cone.rows.emplace_back(1 + r, xi_vars[i], Lt(r, i));
        }
    }

    cone.rows.emplace_back(n + 1, y_var, 1.0 / scale);
    for (int i = 0; i < n; ++i) {
        if (a[i] != 0.0) cone.rows.emplace_back(n + 1, xi_vars[i], -a[i] / scale);
    }
    cone.offset[n + 1] = -beta / scale - 0.5;
    return cone;
}

}  // namespace

ConeConstraint relax_converter(const ConverterModel& model, const std::vector<int>& xi_vars,
                               int y_var, double cholesky_shift, const Vector& xi_lo,
                               const Vector& xi_hi) {
    if (static_cast<int>(xi_vars.size()) != model_input_dim(model)) {
        throw Error(ErrorCode::DimensionMismatch, "xi_vars size");
    }
    return std::visit(
        [&](const auto& m) -> ConeConstraint {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, QuadraticModel>) {
                return quadratic_cone(m.Q, m.a, m.beta, xi_vars, y_var, cholesky_shift,
                                      quad_scale(m.Q, m.a, m.beta, xi_lo, xi_hi));
            } else if constexpr (std::is_same_v<T, ScaledSquareModel>) {
                if (m.c < 0.0) throw Error(ErrorCode::NotRelaxable, "negative square coefficient");
                const Matrix Q = Matrix::Constant(1, 1, 2.0 * m.c);
                const Vector a = Vector::Constant(1, m.d);
                return quadratic_cone(Q, a, 0.0, xi_vars, y_var, cholesky_shift,
                                      quad_scale(Q, a, 0.0, xi_lo, xi_hi));
            } else if constexpr (std::is_same_v<T, HyperbolicModel>) {
                // y (u + eps) >= 1  as  || [2; y/b - b(u + eps)] || <= y/b + b(u + eps)
                // with b balancing the two members on the box (y = 1/(u+eps)
                // on the manifold).
                double balance = 1.0;
                if (xi_lo.size() == 1 && std::isfinite(xi_lo[0]) && std::isfinite(xi_hi[0])) {
                    const double q_lo = std::min(xi_lo[0], xi_hi[0]) + m.eps;
                    const double q_hi = std::max(xi_lo[0], xi_hi[0]) + m.eps;
                    if (q_lo > 0.0) balance = 1.0 / std::sqrt(q_lo * q_hi);
                }
                ConeConstraint cone;
                cone.dim = 3;
                cone.offset = Vector::Zero(3);
                cone.h_scale = balance;
                cone.rows.emplace_back(0, y_var, 1.0 / balance);
                cone.rows.emplace_back(0, xi_vars[0], balance);
                cone.offset[0] = balance * m.eps;
                cone.offset[1] = 2.0;
                cone.rows.emplace_back(2, y_var, 1.0 / balance);
                cone.rows.emplace_back(2, xi_vars[0], -balance);
                cone.offset[2] = -balance * m.eps;
                return cone;
            } else {
                // Linear inequality (a'xi + beta - y)/r <= 0 as a 1-dim cone.
                const Matrix Q0 = Matrix::Zero(m.a.size(), m.a.size());
                const double scale = quad_scale(Q0, m.a, m.beta, xi_lo, xi_hi);
                ConeConstraint cone;
                cone.dim = 1;
                cone.offset = Vector::Constant(1, -m.beta / scale);
                cone.h_scale = scale;
                cone.rows.emplace_back(0, y_var, 1.0 / scale);
                for (std::size_t i = 0; i < xi_vars.size(); ++i) {
                    const double ai = m.a[static_cast<int>(i)];
                    if (ai != 0.0) cone.rows.emplace_back(0, xi_vars[i], -ai / scale);
                }
                return cone;
            }
        },
        model);
}

ConicProgram build_relaxation(const NetworkProblem& p, const RelaxOptions& opts) {
    if (!opts.force) {
        const RequirementReport report = check_requirements(p);
        if (!report.all_passed()) {
            throw Error(ErrorCode::RequirementUnmet, report.summary());
        }
    }

    const int K = p.horizon();
    const int n_x = p.num_states();
    const int n_u = p.num_inputs();
    const int M = p.num_converters();
    const int J = p.num_nodes();
    const int n_s = p.num_dissipative();

    ConicProgram cp;
    VarLayout& L = cp.layout;
    L.K = K;
    L.n_x = n_x;
    L.n_u = n_u;
    L.n_y = M;
    L.n_s = n_s;
    L.x_begin = 0;
    L.u_begin = (K + 1) * n_x;
    L.y_begin = L.u_begin + K * n_u;
    L.s_begin = L.y_begin + K * M;
    L.total = L.s_begin + K * n_s;

    // Cost: sum_k a'u_k + b'y_k.
    cp.cost = Vector::Zero(L.total);
    for (int k = 0; k < K; ++k) {
        for (int i = 0; i < n_u; ++i) cp.cost[L.u(k, i)] = p.cost_a()[i];
        for (int m = 0; m < M; ++m) cp.cost[L.y(k, m)] = p.cost_b()[m];
    }

    // Equalities: dynamics block (Gamma_x, Gamma_u), then node rows per step.
    cp.dyn_rows = (K + 1) * n_x;
    cp.n_nodes = J;
    const int eq_rows = cp.dyn_rows + K * J;
    std::vector<Triplet> trip;
    trip.reserve(p.gamma_x().nonZeros() + p.gamma_u().nonZeros() + K * (n_x + n_u + M + 2) * 2);
    cp.eq_b = Vector::Zero(eq_rows);

    for (int c = 0; c < p.gamma_x().outerSize(); ++c) {
        for (SparseMatrix::InnerIterator it(p.gamma_x(), c); it; ++it) {
            trip.emplace_back(static_cast<int>(it.row()), L.x_begin + static_cast<int>(it.col()),
                              it.value());
        }
    }
    for (int c = 0; c < p.gamma_u().outerSize(); ++c) {
        for (SparseMatrix::InnerIterator it(p.gamma_u(), c); it; ++it) {
            trip.emplace_back(static_cast<int>(it.row()), L.u_begin + static_cast<int>(it.col()),
                              it.value());
        }
    }
    cp.eq_b.head(cp.dyn_rows) = p.dynamics_rhs();

    // Slack column index per node (dissipative only).
    std::vector<int> slack_col(J, -1);
    {
        int d = 0;
        for (int j = 0; j < J; ++j) {
            if (p.nodes()[j].kind == NodeKind::Dissipative) slack_col[j] = d++;
        }
    }
    const Matrix E = Matrix(p.node_E());
    const Matrix F = Matrix(p.node_F());
    const Matrix G = Matrix(p.node_G());
    for (int k = 0; k < K; ++k) {
        for (int j = 0; j < J; ++j) {
            const int row = cp.node_row(j, k);
            for (int i = 0; i < n_x; ++i) {
                if (E(j, i) != 0.0) trip.emplace_back(row, L.x(k, i), E(j, i));
            }
            for (int i = 0; i < n_u; ++i) {
                if (F(j, i) != 0.0) trip.emplace_back(row, L.u(k, i), F(j, i));
            }
            for (int m = 0; m < M; ++m) {
                if (G(j, m) != 0.0) trip.emplace_back(row, L.y(k, m), G(j, m));
            }
            if (slack_col[j] >= 0) trip.emplace_back(row, L.s(k, slack_col[j]), 1.0);
            cp.eq_b[row] = p.loads()(j, k);
        }
    }
    cp.eq_A.resize(eq_rows, L.total);
    cp.eq_A.setFromTriplets(trip.begin(), trip.end());

    // Boxes: states (terminal overrides at k = K), inputs, free outputs,
    // nonnegative slacks.
    cp.lo = Vector::Constant(L.total, -kInf);
    cp.hi = Vector::Constant(L.total, kInf);
    for (int k = 0; k <= K; ++k) {
        const Vector& lo = (k == K) ? p.x_terminal_lo() : p.x_lo();
        const Vector& hi = (k == K) ? p.x_terminal_hi() : p.x_hi();
        for (int i = 0; i < n_x; ++i) {
            cp.lo[L.x(k, i)] = lo[i];
            cp.hi[L.x(k, i)] = hi[i];
        }
    }
    for (int k = 0; k < K; ++k) {
        for (int i = 0; i < n_u; ++i) {
            cp.lo[L.u(k, i)] = p.u_lo()[i];
            cp.hi[L.u(k, i)] = p.u_hi()[i];
        }
        for (int d = 0; d < n_s; ++d) {
            cp.lo[L.s(k, d)] = 0.0;
        }
    }

    // One cone per converter per step, normalized on the input box.
    cp.cones.reserve(static_cast<std::size_t>(K) * M);
    for (int k = 0; k < K; ++k) {
        for (int m = 0; m < M; ++m) {
            const ConverterWiring& w = p.wiring(m);
            const int dim = static_cast<int>(w.xi_is_state.size());
            std::vector<int> xi_vars;
            Vector xi_lo(dim), xi_hi(dim);
            std::size_t si = 0, ui = 0;
            for (int i = 0; i < dim; ++i) {
                if (w.xi_is_state[static_cast<std::size_t>(i)]) {
                    const int gi = w.state_idx[si++];
                    xi_vars.push_back(L.x(k, gi));
                    xi_lo[i] = p.x_lo()[gi];
                    xi_hi[i] = p.x_hi()[gi];
                } else {
                    const int gi = w.input_idx[ui++];
                    xi_vars.push_back(L.u(k, gi));
                    xi_lo[i] = p.u_lo()[gi];
                    xi_hi[i] = p.u_hi()[gi];
                }
            }
            ConeConstraint cone = relax_converter(p.converters()[m].model, xi_vars, L.y(k, m),
                                                  opts.cholesky_shift, xi_lo, xi_hi);
            cone.converter = m;
            cone.step = k;
            cp.cones.push_back(std::move(cone));
        }
    }
    return cp;
}

ConicProgram add_regularization(const ConicProgram& cp, const std::vector<int>& output_vars,
                                double sigma) {
    if (sigma < 0.0) throw Error(ErrorCode::InvalidParameter, "sigma must be >= 0");
    ConicProgram out = cp;
    for (int var : output_vars) {
        if (var < 0 || var >= cp.num_vars() || !cp.layout.is_output(var)) {
            throw Error(ErrorCode::InvalidParameter,
                        "regularization index " + std::to_string(var) + " is not an output");
        }
        out.cost[var] += sigma;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sparse text dump
//
//   powernet-socp 1
//   vars <n>
//   cost <nnz>          followed by "i v" lines
//   bounds <n>          one "lo hi" line per variable (inf for absent)
//   eq <rows> <nnz>     followed by "r c v" lines, then <rows> rhs lines
//   cones <count>       per cone: "cone <dim> <nnz>", triplets, offset line
// ---------------------------------------------------------------------------

void dump_program(const ConicProgram& cp, std::ostream& os) {
    os << std::setprecision(17);
    os << "powernet-socp 1\n";
    os << "vars " << cp.num_vars() << "\n";

    int cost_nnz = 0;
    for (int i = 0; i < cp.cost.size(); ++i) {
        if (cp.cost[i] != 0.0) ++cost_nnz;
    }
    os << "cost " << cost_nnz << "\n";
    for (int i = 0; i < cp.cost.size(); ++i) {
        if (cp.cost[i] != 0.0) os << i << " " << cp.cost[i] << "\n";
    }

    os << "bounds " << cp.num_vars() << "\n";
    for (int i = 0; i < cp.num_vars(); ++i) {
        os << cp.lo[i] << " " << cp.hi[i] << "\n";
    }

    os << "eq " << cp.eq_A.rows() << " " << cp.eq_A.nonZeros() << "\n";
    for (int c = 0; c < cp.eq_A.outerSize(); ++c) {
        for (SparseMatrix::InnerIterator it(cp.eq_A, c); it; ++it) {
            os << it.row() << " " << it.col() << " " << it.value() << "\n";
        }
    }
    for (int r = 0; r < cp.eq_b.size(); ++r) {
        os << cp.eq_b[r] << "\n";
    }

    std::size_t n_cones = cp.cones.size() + cp.lin_ineqs.size();
    os << "cones " << n_cones << "\n";
    for (const ConeConstraint& cone : cp.cones) {
        os << "cone " << cone.dim << " " << cone.rows.size() << " " << cone.h_scale << "\n";
        for (const Triplet& t : cone.rows) {
            os << t.row() << " " << t.col() << " " << t.value() << "\n";
        }
        for (int r = 0; r < cone.dim; ++r) {
            os << cone.offset[r] << (r + 1 == cone.dim ? "" : " ");
        }
        os << "\n";
    }
    // Linear inequalities a'w + c <= 0 are emitted as 1-dim cones -(a'w + c) >= 0.
    for (const LinearInequality& li : cp.lin_ineqs) {
        os << "cone 1 " << li.terms.size() << " 1\n";
        for (const auto& [var, coef] : li.terms) {
            os << 0 << " " << var << " " << -coef << "\n";
        }
        os << -li.offset << "\n";
    }
}

void dump_program_file(const ConicProgram& cp, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw Error(ErrorCode::IoError, "cannot open " + path);
    dump_program(cp, os);
}

namespace {

// operator>> on some standard libraries rejects "inf"; go through strtod.
double read_double(std::istream& is) {
    std::string tok;
    if (!(is >> tok)) throw Error(ErrorCode::IoError, "dump parse: truncated number");
    return std::strtod(tok.c_str(), nullptr);
}

}  // namespace

ConicProgram load_program(std::istream& is) {
    auto fail = [](const std::string& what) -> void {
        throw Error(ErrorCode::IoError, "dump parse: " + what);
    };

    std::string tag;
    int version = 0;
    is >> tag >> version;
    if (tag != "powernet-socp" || version != 1) fail("bad header");

    ConicProgram cp;
    int n = 0;
    is >> tag >> n;
    if (tag != "vars" || n <= 0) fail("vars");
    cp.layout.total = n;
    cp.cost = Vector::Zero(n);

    int nnz = 0;
    is >> tag >> nnz;
    if (tag != "cost") fail("cost");
    for (int e = 0; e < nnz; ++e) {
        int i;
        is >> i;
        cp.cost[i] = read_double(is);
    }

    int nb = 0;
    is >> tag >> nb;
    if (tag != "bounds" || nb != n) fail("bounds");
    cp.lo.resize(n);
    cp.hi.resize(n);
    for (int i = 0; i < n; ++i) {
        cp.lo[i] = read_double(is);
        cp.hi[i] = read_double(is);
    }

    int rows = 0;
    is >> tag >> rows >> nnz;
    if (tag != "eq") fail("eq");
    std::vector<Triplet> trip;
    trip.reserve(nnz);
    for (int e = 0; e < nnz; ++e) {
        int r, c;
        is >> r >> c;
        trip.emplace_back(r, c, read_double(is));
    }
    cp.eq_A.resize(rows, n);
    cp.eq_A.setFromTriplets(trip.begin(), trip.end());
    cp.eq_b.resize(rows);
    for (int r = 0; r < rows; ++r) cp.eq_b[r] = read_double(is);

    int n_cones = 0;
    is >> tag >> n_cones;
    if (tag != "cones") fail("cones");
    for (int c = 0; c < n_cones; ++c) {
        ConeConstraint cone;
        int cnnz = 0;
        is >> tag >> cone.dim >> cnnz;
        cone.h_scale = read_double(is);
        if (tag != "cone" || cone.dim < 1) fail("cone header");
        for (int e = 0; e < cnnz; ++e) {
            int r, col;
            is >> r >> col;
            cone.rows.emplace_back(r, col, read_double(is));
        }
        cone.offset.resize(cone.dim);
        for (int r = 0; r < cone.dim; ++r) cone.offset[r] = read_double(is);
        cp.cones.push_back(std::move(cone));
    }
    if (!is) fail("truncated file");
    return cp;
}

ConicProgram load_program_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error(ErrorCode::IoError, "cannot open " + path);
    return load_program(is);
}

}  // namespace powernet
