#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "powernet/network.hpp"

namespace powernet {

/// Variable layout of the relaxed program:
///   [ x_0..x_K | u_0..u_{K-1} | y_0..y_{K-1} | s_0..s_{K-1} ]
/// with s holding only the dissipative-node slacks.
struct VarLayout {
    int K = 0;
    int n_x = 0;
    int n_u = 0;
    int n_y = 0;  ///< converters per step
    int n_s = 0;  ///< dissipative nodes per step

    int x_begin = 0, u_begin = 0, y_begin = 0, s_begin = 0;
    int total = 0;

    int x(int k, int i) const { return x_begin + k * n_x + i; }
    int u(int k, int i) const { return u_begin + k * n_u + i; }
    int y(int k, int m) const { return y_begin + k * n_y + m; }
    int s(int k, int d) const { return s_begin + k * n_s + d; }

    bool is_output(int var) const { return var >= y_begin && var < s_begin; }
};

/// One second-order cone membership  P w + q  in  Q_dim
/// (first row is the cone "t0" component).
struct ConeConstraint {
    int dim = 0;
    std::vector<Triplet> rows;  ///< (local row, variable, coefficient)
    Vector offset;              ///< q, length dim
    double h_scale = 1.0;       ///< normalization applied to the residual
    int converter = -1;         ///< originating converter (or -1)
    int step = -1;
};

/// Linear inequality  a'w + c <= 0.
struct LinearInequality {
    std::vector<std::pair<int, double>> terms;
    double offset = 0.0;
    int converter = -1;
    int step = -1;
};

/// The relaxed convex program: linear cost, linear equalities, boxes, cones.
struct ConicProgram {
    VarLayout layout;
    Vector cost;
    SparseMatrix eq_A;
    Vector eq_b;
    Vector lo, hi;  ///< elementwise box (+-inf where absent)
    std::vector<ConeConstraint> cones;
    std::vector<LinearInequality> lin_ineqs;

    // Row bookkeeping for dual extraction.
    int dyn_rows = 0;                      ///< leading rows of eq_A (init + dynamics)
    int node_row(int j, int k) const { return dyn_rows + k * n_nodes + j; }
    int n_nodes = 0;

    int num_vars() const { return layout.total; }
};

struct RelaxOptions {
    bool force = false;            ///< skip the requirement gate
    double cholesky_shift = 1e-12; ///< diagonal shift for semidefinite Q
};

/// Cone encoding of one converter template; cone variables are expressed
/// through the provided global indices. Throws NotRelaxable for indefinite Q.
/// When the input box is supplied, the constraint is normalized so the cone
/// components are O(1) on the box (same feasible set, far better KKT
/// conditioning); the normalization is recorded in h_scale.
ConeConstraint relax_converter(const ConverterModel& model, const std::vector<int>& xi_vars,
                               int y_var, double cholesky_shift = 1e-12,
                               const Vector& xi_lo = Vector(), const Vector& xi_hi = Vector());

/// Assembles the relaxation of the full network problem. Unless opts.force
/// is set, the requirement checks of the checker module must pass first;
/// callers normally go through build_relaxation(p) which runs them.
ConicProgram build_relaxation(const NetworkProblem& p, const RelaxOptions& opts = {});

/// Adds sigma * sum(y) over the selected output variables to the cost.
/// Indices must point at y-layout variables.
ConicProgram add_regularization(const ConicProgram& cp, const std::vector<int>& output_vars,
                                double sigma);

/// Sparse text dump (triplet matrices + cone list) for external solvers.
void dump_program(const ConicProgram& cp, std::ostream& os);
void dump_program_file(const ConicProgram& cp, const std::string& path);

/// Reads the dump format back into a free-standing program (layout carries
/// only sizes; bookkeeping maps are empty).
ConicProgram load_program(std::istream& is);
ConicProgram load_program_file(const std::string& path);

}  // namespace powernet
