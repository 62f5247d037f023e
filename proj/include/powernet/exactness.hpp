#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "powernet/solver.hpp"

namespace powernet {

enum class TightClass { Tight, SlackZeroDual, Anomalous };

/// Per-converter-per-step relaxation residual at the solved point.
struct ConverterAudit {
    int converter = -1;
    int step = -1;
    double h = 0.0;          ///< raw residual
    double h_rel = 0.0;      ///< |h| / (1 + |y|)
    double y = 0.0;
    double reduced_cost = 0.0;  ///< (b + G'lambda_k)_m, the Theorem-1 row
    double mu = 0.0;            ///< multiplier of h <= 0
    TightClass cls = TightClass::Tight;
};

struct ExactnessOptions {
    double tight_tol = 1e-5;     ///< relative residual threshold
    double dual_tol = 1e-6;      ///< |reduced cost| below this counts as zero
    double lambda_tol = 1e-7;    ///< allowed negativity of lambda on G-rows
    double sigma0 = 0.01;        ///< first-round regularization weight
    int max_rounds = 4;
    double cost_drift_tol = 1e-3;  ///< relative base-cost change across rounds
};

/// Theorem-1 audit of a solved relaxation plus the regularization trace.
struct ExactnessReport {
    std::vector<ConverterAudit> entries;   ///< k-major, converter-minor
    double max_rel_residual = 0.0;
    double min_reduced_cost = 0.0;         ///< most negative b + G'lambda seen
    double min_lambda_on_g_rows = 0.0;     ///< most negative node dual feeding G > 0
    int n_tight = 0, n_slack = 0, n_anomalous = 0;
    bool exact = false;                    ///< every converter tight

    struct Round {
        double sigma = 0.0;
        int regularized_outputs = 0;
        double max_rel_residual = 0.0;
        double base_cost = 0.0;
    };
    std::vector<Round> rounds;

    double max_residual_of(int converter) const;
    std::string to_json() const;
    /// Per-converter residual CSV: columns converter,name,k,h,h_rel,class.
    void write_csv(std::ostream& os, const NetworkProblem& p) const;
};

/// Computes residuals, Theorem-1 sign rows, and tightness classes at an
/// optimal solution of cp.
ExactnessReport audit(const Solution& sol, const ConicProgram& cp, const NetworkProblem& p,
                      const ExactnessOptions& opts = {});

/// Result of the solve/audit/regularize loop.
struct ExactSolveResult {
    Solution solution;
    ConicProgram program;   ///< program actually solved in the final round
    ExactnessReport report;
    double base_cost = 0.0; ///< original-cost value of the final solution
    int rounds = 0;
};

/// Solves the relaxation, audits it, and regularizes all non-tight outputs
/// (sigma halves each extra round) until exact or max_rounds; asserts that
/// the base cost drifts at most cost_drift_tol in relative terms.
ExactSolveResult solve_exact(const NetworkProblem& p, const SolverSettings& solver_settings = {},
                             const ExactnessOptions& opts = {});
ExactSolveResult solve_exact(const NetworkProblem& p, const ConicProgram& cp,
                             const SolverSettings& solver_settings = {},
                             const ExactnessOptions& opts = {});

/// A feasible point of the original (nonconvex) problem.
struct FeasiblePoint {
    std::vector<Vector> x;  ///< K+1 state vectors
    std::vector<Vector> u;  ///< K input vectors
    std::vector<Vector> y;  ///< K output vectors
    std::vector<Vector> s;  ///< K dissipative slack vectors
    double cost = 0.0;      ///< p_NC upper bound
    double max_violation = 0.0;
};

/// Projects a solved relaxation onto the converter manifolds h = 0:
/// tightened outputs push surplus into dissipative slacks where the topology
/// allows, conservative couplings are rebalanced through free inputs, and
/// affected state trajectories are re-integrated. Throws NoDissipativePath /
/// ProjectionInfeasible when the network offers no such path.
FeasiblePoint feasible_projection(const Solution& sol, const ConicProgram& cp,
                                  const NetworkProblem& p, double tol = 1e-7);

}  // namespace powernet
