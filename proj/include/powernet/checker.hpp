#pragma once

#include <optional>
#include <string>
#include <vector>

#include "powernet/network.hpp"

namespace powernet {

enum class CheckStatus { Certified, SampledPass, Fail };

/// Outcome of one requirement check; failures carry a witness point inside
/// the declared boxes.
struct CheckResult {
    CheckStatus status = CheckStatus::Certified;
    int sampled_points = 0;
    std::string detail;
    std::optional<Vector> witness;  ///< stacked per-step (x, u) point

    bool passed() const { return status != CheckStatus::Fail; }
};

/// Aggregate report over Requirements i-v plus the LICQ reduction.
struct RequirementReport {
    CheckResult convexity;       ///< i, per-converter aggregated
    CheckResult monotonicity;    ///< ii
    CheckResult structure;       ///< iii-iv and b >= 0
    CheckResult rank;            ///< v, sampled
    CheckResult licq;            ///< Lemma 1 aggregation
    double rank_margin = 0.0;    ///< smallest J-th singular value seen

    bool all_passed() const {
        return convexity.passed() && monotonicity.passed() && structure.passed() &&
               rank.passed() && licq.passed();
    }
    std::string summary() const;
    std::string to_json() const;
};

enum class SamplingMode { Halton, Random };

struct SamplingSpec {
    SamplingMode mode = SamplingMode::Halton;
    int n = 512;
    std::uint64_t seed = 0;           ///< Random mode only
    double clamp = 0.0;               ///< replaces infinite box edges when > 0
    bool include_corners = true;      ///< all corners up to dimension 10
};

/// Deterministic Halton points in [0,1)^dim (base sequence 2,3,5,...).
std::vector<Vector> halton_points(int dim, int n);

/// Requirement i: the template admits a convex relaxation on its box.
CheckResult check_convexity(const Converter& c);
CheckResult check_convexity(const NetworkProblem& p, int converter);

/// Requirement ii: h is strictly decreasing in the output on the box.
CheckResult check_monotonic_output(const Converter& c);
CheckResult check_monotonic_output(const NetworkProblem& p, int converter);

/// Requirements iii-iv: b >= 0, G >= 0, and no converter self-loops.
CheckResult check_network_structure(const NetworkProblem& p);

/// Requirement v: rank(F + G diag(dy/du)) = J at sampled box points.
/// Returns the per-point minimum of the J-th singular value as margin.
CheckResult check_rank(const NetworkProblem& p, const SamplingSpec& spec, double* margin = nullptr);

/// Lemma 1: LICQ via the per-step reduction; optionally verifies the full
/// stacked constraint gradient on desk-scale instances.
CheckResult check_licq(const NetworkProblem& p, const SamplingSpec& spec);

/// Runs all checks and aggregates.
RequirementReport check_requirements(const NetworkProblem& p, const SamplingSpec& spec = {});

/// Dense stacked constraint gradient (converter rows, dynamics, node rows)
/// evaluated at per-step points xs[k], us[k] (y eliminated through h = 0).
Matrix stacked_constraint_gradient(const NetworkProblem& p, const std::vector<Vector>& xs,
                                   const std::vector<Vector>& us);

/// Numerical row-rank with a relative singular-value threshold.
int numerical_rank(const Matrix& m, double rel_tol = 1e-8);

}  // namespace powernet
