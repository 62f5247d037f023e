#pragma once

#include <memory>
#include <string>
#include <vector>

#include "powernet/transcription.hpp"

namespace powernet {

enum class SolveStatus { Optimal, Infeasible, Unbounded, MaxIter };

const char* to_string(SolveStatus s);

struct SolveMetrics {
    double primal_res = 0.0;  ///< max scaled equality/cone violation
    double dual_res = 0.0;    ///< scaled stationarity violation
    double rel_gap = 0.0;     ///< |p - d| / (1 + |p|)
    double primal_obj = 0.0;
    double dual_obj = 0.0;
    int iterations = 0;
    double wall_time_s = 0.0;
};

struct SolverSettings {
    double tol = 1e-8;
    int max_iter = 100;
    bool verbose = false;

    // Interior-point internals.
    double static_reg = 1e-8;
    int refine_iters = 9;
    double refine_acc = 1e-14;
    double step_scale = 0.99;
    double step_min = 1e-7;
    double sigma_min = 1e-4;
    double sigma_max = 0.9999;
    int equil_iters = 3;
};

/// Conic solver standard form
///   min c'w   s.t.  A w = b,  G w + s = h,  s in R+^{n_lp} x Q_{d1} x ...
struct StandardForm {
    Vector c;
    SparseMatrix A;
    Vector b;
    SparseMatrix G;
    Vector h;
    int n_lp = 0;
    std::vector<int> soc_dims;
};

struct StandardSolution {
    SolveStatus status = SolveStatus::MaxIter;
    Vector x;  ///< primal
    Vector y;  ///< equality duals
    Vector z;  ///< cone duals (LP rows then SOC blocks)
    Vector s;  ///< cone slacks
    SolveMetrics metrics;
};

/// Embedded homogeneous self-dual interior-point solver with Nesterov-Todd
/// scaling and Mehrotra predictor-corrector. Deterministic: one solve is
/// single-threaded, identical inputs give identical iterates.
StandardSolution solve_standard(const StandardForm& form, const SolverSettings& settings = {});

/// How ConicProgram rows map into the standard form (needed to unpack duals).
struct StandardMap {
    std::vector<int> lo_row, hi_row;  ///< per variable; -1 when the bound is absent
    std::vector<int> lin_row;         ///< per lin_ineq
    std::vector<int> cone_row;        ///< per cone: first row of its block in G
    std::vector<bool> cone_in_lp;     ///< dim-1 cones are folded into the LP block
    int n_lp = 0;
};

StandardForm to_standard(const ConicProgram& cp, StandardMap* map = nullptr);

/// Solution of a ConicProgram with duals mapped back to the structured rows.
struct Solution {
    SolveStatus status = SolveStatus::MaxIter;
    Vector w;                        ///< primal in ConicProgram layout
    Vector eq_dual;                  ///< one per equality row
    Vector bound_dual_lo, bound_dual_hi;
    std::vector<Vector> cone_dual;   ///< per cp.cones entry
    Vector lin_dual;                 ///< per cp.lin_ineqs entry
    SolveMetrics metrics;

    /// Node-row dual lambda_{j,k}; requires the program for row lookup.
    double node_dual(const ConicProgram& cp, int j, int k) const {
        return eq_dual[cp.node_row(j, k)];
    }
};

Solution solve(const ConicProgram& cp, const SolverSettings& settings = {});
Solution solve(const ConicProgram& cp, double tol, int max_iter);

/// KKT residual breakdown at a claimed-optimal solution.
struct KktReport {
    double stationarity = 0.0;       ///< ||c + A'y + G'z|| over the standard form
    double complementarity = 0.0;    ///< max cone-wise s'z
    double eq_residual = 0.0;
    double cone_residual = 0.0;      ///< worst cone membership violation
    // Structured rows (filled by the NetworkProblem overload):
    double output_stationarity = 0.0;  ///< max_k || b + G'lambda_k + (dh/dy)' mu_k ||_inf
    double mu_complementarity = 0.0;   ///< max_mk mu * (-h)
};

KktReport kkt_report(const ConicProgram& cp, const Solution& sol);
KktReport kkt_report(const ConicProgram& cp, const Solution& sol, const NetworkProblem& p);

/// Scalar multiplier of the relaxed converter inequality h <= 0 recovered
/// from the cone dual of converter m at step k.
double converter_multiplier(const ConicProgram& cp, const Solution& sol,
                            const NetworkProblem& p, int m, int k);

/// Pluggable conic backend; the embedded solver is the reference
/// implementation, externals exist for cross-validation.
class SolverBackend {
  public:
    virtual ~SolverBackend() = default;
    virtual std::string name() const = 0;
    virtual bool available() const { return true; }
    virtual Solution solve(const ConicProgram& cp, const SolverSettings& settings) = 0;
};

class EmbeddedBackend final : public SolverBackend {
  public:
    std::string name() const override { return "embedded"; }
    Solution solve(const ConicProgram& cp, const SolverSettings& settings) override {
        return powernet::solve(cp, settings);
    }
};

}  // namespace powernet
