#pragma once

#include <vector>

#include "powernet/network.hpp"

namespace powernet {

/// Discretization of desk-scale instances for the brute-force baselines.
struct GridSpec {
    std::vector<int> state_counts = {200};  ///< per state dim; size 1 broadcasts
    std::vector<int> input_counts = {100};  ///< per free input; size 1 broadcasts
    enum class Interp { Nearest, Linear };
    Interp interp = Interp::Linear;
    bool grid_dissipative_inputs = false;   ///< grid instead of boundary-resolving them
    int max_states = 2;
    int max_horizon = 100;
    long max_evals = 600'000'000L;

    void validate() const;
};

/// How the per-step algebra resolves once states and the free inputs are
/// known: converter outputs evaluate directly, conservative nodes with one
/// unknown solve it, converters with a known output invert one input, and
/// dissipative nodes resolve their input to minimum feasible dissipation.
struct EliminationPlan {
    enum class Op { ConverterOutput, ConservativeSolve, ConverterInvert, DissipativeBoundary };
    struct Step {
        Op op;
        int converter = -1;
        int node = -1;
        bool target_is_output = false;
        int target = -1;  ///< converter index or global input index
        int slot = -1;    ///< xi slot for ConverterInvert
    };
    std::vector<Step> steps;
    std::vector<int> free_inputs;   ///< global input indices left as decisions
    std::vector<int> check_nodes;   ///< nodes only verified, never solved
    Matrix E, F, G;                 ///< dense node couplings, cached for the hot loop
};

EliminationPlan build_elimination_plan(const NetworkProblem& p, bool grid_dissipative = false);

/// One evaluated per-step point of the original (nonconvex) problem.
struct StepEvaluation {
    bool feasible = false;
    Vector u;  ///< full input vector
    Vector y;  ///< converter outputs (h = 0 exactly)
    Vector s;  ///< dissipative slacks
    double stage_cost = 0.0;
};

/// Evaluates the plan at states x_k and free-input values; all converter
/// equalities hold exactly on success.
StepEvaluation evaluate_step(const NetworkProblem& p, const EliminationPlan& plan,
                             const Vector& x_k, const Vector& free_values, int k);

/// Feasible trajectory found by dynamic programming.
struct DpResult {
    double value = 0.0;           ///< exact rollout cost (upper bound on p_NC)
    std::vector<Vector> x, u, y, s;
};

/// Backward value iteration over gridded states and free inputs followed by
/// an exact greedy rollout. The returned value prices a certified feasible
/// trajectory of the original problem. horizon < 0 uses p.horizon().
DpResult dp_solve(const NetworkProblem& p, const GridSpec& g, int horizon = -1);

struct EnumerationResult {
    bool feasible = false;
    double value = 0.0;
};

/// Exhaustive scan for tiny instances: stateless problems scan each step
/// independently; otherwise delegates to dp_solve with the given resolution.
EnumerationResult enumerate_toy(const NetworkProblem& p, int resolution);

}  // namespace powernet
