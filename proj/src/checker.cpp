#include "powernet/checker.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <json.hpp>

namespace powernet {

namespace {

constexpr double kEigTol = 1e-10;
constexpr double kRankTol = 1e-8;

const char* status_name(CheckStatus s) {
    switch (s) {
        case CheckStatus::Certified: return "certified";
        case CheckStatus::SampledPass: return "sampled-pass";
        case CheckStatus::Fail: return "fail";
    }
    return "?";
}

double halton_scalar(int index, int base) {
    double f = 1.0, r = 0.0;
    int i = index;
    while (i > 0) {
        f /= base;
        r += f * (i % base);
        i /= base;
    }
    return r;
}

constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};

/// Box over the per-step stacked (x, u) variables with finite edges.
struct StepBox {
    Vector lo, hi;
};

StepBox step_box(const NetworkProblem& p, double clamp) {
    const int n = p.num_states() + p.num_inputs();
    StepBox box;
    box.lo.resize(n);
    box.hi.resize(n);
    box.lo << p.x_lo(), p.u_lo();
    box.hi << p.x_hi(), p.u_hi();
    for (int i = 0; i < n; ++i) {
        if (std::isinf(box.lo[i]) || std::isinf(box.hi[i])) {
            if (clamp <= 0.0) {
                throw Error(ErrorCode::UnboundedBox,
                            "box dimension " + std::to_string(i) +
                                " is unbounded; set a sampling clamp");
            }
            if (std::isinf(box.lo[i])) box.lo[i] = std::isinf(box.hi[i]) ? -clamp : box.hi[i] - clamp;
            if (std::isinf(box.hi[i])) box.hi[i] = box.lo[i] + clamp;
        }
    }
    return box;
}

std::vector<Vector> sample_box(const StepBox& box, const SamplingSpec& spec) {
    const int dim = static_cast<int>(box.lo.size());
    std::vector<Vector> pts;
    if (spec.mode == SamplingMode::Halton) {
        pts = halton_points(dim, spec.n);
        for (Vector& pt : pts) {
            pt = box.lo + pt.cwiseProduct(box.hi - box.lo);
        }
    } else {
        std::mt19937_64 rng(spec.seed);
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        pts.reserve(spec.n);
        for (int i = 0; i < spec.n; ++i) {
            Vector pt(dim);
            for (int d = 0; d < dim; ++d) pt[d] = box.lo[d] + uni(rng) * (box.hi[d] - box.lo[d]);
            pts.push_back(std::move(pt));
        }
    }
    if (spec.include_corners && dim <= 10) {
        for (unsigned mask = 0; mask < (1u << dim); ++mask) {
            Vector pt(dim);
            for (int d = 0; d < dim; ++d) pt[d] = (mask >> d) & 1u ? box.hi[d] : box.lo[d];
            pts.push_back(std::move(pt));
        }
    }
    return pts;
}

/// Input box of a converter's template inputs (standalone or attached).
void converter_input_box(const NetworkProblem& p, int m, Vector& lo, Vector& hi) {
    const ConverterWiring& w = p.wiring(m);
    const int dim = static_cast<int>(w.xi_is_state.size());
    lo.resize(dim);
    hi.resize(dim);
    std::size_t si = 0, ui = 0;
    for (int i = 0; i < dim; ++i) {
        if (w.xi_is_state[static_cast<std::size_t>(i)]) {
            lo[i] = p.x_lo()[w.state_idx[si]];
            hi[i] = p.x_hi()[w.state_idx[si++]];
        } else {
            lo[i] = p.u_lo()[w.input_idx[ui]];
            hi[i] = p.u_hi()[w.input_idx[ui++]];
        }
    }
}

CheckResult convexity_for_box(const ConverterModel& model, double u_lo, double u_hi) {
    CheckResult res;
    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, QuadraticModel>) {
                Eigen::SelfAdjointEigenSolver<Matrix> eig(m.Q);
                const double lambda_min = eig.eigenvalues().minCoeff();
                if (lambda_min >= -kEigTol) {
                    res.detail = "Q PSD (min eig " + std::to_string(lambda_min) + ")";
                } else {
                    res.status = CheckStatus::Fail;
                    res.detail = "Q has negative eigenvalue " + std::to_string(lambda_min);
                }
            } else if constexpr (std::is_same_v<T, ScaledSquareModel>) {
                if (m.c >= -kEigTol) {
                    res.detail = "square coefficient nonnegative";
                } else {
                    res.status = CheckStatus::Fail;
                    res.detail = "negative square coefficient";
                }
            } else if constexpr (std::is_same_v<T, HyperbolicModel>) {
                // Relaxed set { y(u+eps) >= 1, u+eps > 0 } is convex; the box
                // must stay on the positive branch.
                if (u_lo + m.eps > 0.0) {
                    res.detail = "box on positive branch of y(u+eps) >= 1";
                } else {
                    res.status = CheckStatus::Fail;
                    res.detail = "input box leaves the convex branch (u_lo <= -eps)";
                    res.witness = Vector::Constant(1, -m.eps);
                }
            } else {
                res.detail = "linear";
            }
        },
        model);
    (void)u_hi;
    return res;
}

CheckResult monotonic_for_box(const ConverterModel& model, double u_lo, double u_hi) {
    CheckResult res;
    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, HyperbolicModel>) {
                if (u_lo + m.eps > 0.0) {
                    res.detail = "dh/dy = -(u+eps) < 0 on box";
                } else if (u_hi + m.eps < 0.0) {
                    res.status = CheckStatus::Fail;
                    res.detail = "dh/dy = -(u+eps) > 0 on box (stored orientation)";
                    res.witness = Vector::Constant(1, u_hi);
                } else {
                    res.status = CheckStatus::Fail;
                    res.detail = "box straddles u = -eps where dh/dy vanishes";
                    res.witness = Vector::Constant(1, -m.eps);
                }
            } else {
                res.detail = "dh/dy = -1";
            }
        },
        model);
    return res;
}

void hyperbolic_box_or_throw(const Converter& c, double& lo, double& hi) {
    if (c.u_lo.size() < 1 || c.u_hi.size() < 1) {
        throw Error(ErrorCode::InvalidParameter,
                    "converter-level check needs explicit input bounds; "
                    "use the NetworkProblem overload for attached converters");
    }
    lo = c.u_lo[0];
    hi = c.u_hi[0];
}

}  // namespace

std::vector<Vector> halton_points(int dim, int n) {
    if (dim > static_cast<int>(sizeof(kPrimes) / sizeof(kPrimes[0]))) {
        throw Error(ErrorCode::SizeGuard, "halton dimension too large");
    }
    std::vector<Vector> pts;
    pts.reserve(n);
    for (int i = 0; i < n; ++i) {
        Vector pt(dim);
        for (int d = 0; d < dim; ++d) pt[d] = halton_scalar(i + 1, kPrimes[d]);
        pts.push_back(std::move(pt));
    }
    return pts;
}

CheckResult check_convexity(const Converter& c) {
    double lo = 1.0, hi = 1.0;
    if (std::holds_alternative<HyperbolicModel>(c.model)) hyperbolic_box_or_throw(c, lo, hi);
    return convexity_for_box(c.model, lo, hi);
}

CheckResult check_convexity(const NetworkProblem& p, int converter) {
    Vector lo, hi;
    converter_input_box(p, converter, lo, hi);
    return convexity_for_box(p.converters().at(converter).model, lo[0], hi[0]);
}

CheckResult check_monotonic_output(const Converter& c) {
    double lo = 1.0, hi = 1.0;
    if (std::holds_alternative<HyperbolicModel>(c.model)) hyperbolic_box_or_throw(c, lo, hi);
    return monotonic_for_box(c.model, lo, hi);
}

CheckResult check_monotonic_output(const NetworkProblem& p, int converter) {
    Vector lo, hi;
    converter_input_box(p, converter, lo, hi);
    return monotonic_for_box(p.converters().at(converter).model, lo[0], hi[0]);
}

CheckResult check_network_structure(const NetworkProblem& p) {
    CheckResult res;
    for (int m = 0; m < p.num_converters(); ++m) {
        if (p.converters()[m].cost_b < 0.0) {
            res.status = CheckStatus::Fail;
            res.detail = "negative output cost b at converter " + std::to_string(m);
            return res;
        }
    }
    const Matrix G = Matrix(p.node_G());
    const Matrix E = Matrix(p.node_E());
    const Matrix F = Matrix(p.node_F());
    for (int j = 0; j < p.num_nodes(); ++j) {
        for (int m = 0; m < p.num_converters(); ++m) {
            if (G(j, m) < 0.0) {
                res.status = CheckStatus::Fail;
                res.detail = "negative G entry at node " + std::to_string(j) + ", converter " +
                             std::to_string(m);
                return res;
            }
            if (G(j, m) == 0.0) continue;
            const SubsystemInfo& info = p.subsystems()[p.wiring(m).subsystem];
            for (int i = info.x_offset; i < info.x_offset + info.n_x; ++i) {
                if (E(j, i) != 0.0) {
                    res.status = CheckStatus::Fail;
                    res.detail = "self-loop: node " + std::to_string(j) +
                                 " couples y_" + std::to_string(m) + " with its state";
                    return res;
                }
            }
            for (int i = info.u_offset; i < info.u_offset + info.n_u; ++i) {
                if (F(j, i) != 0.0) {
                    res.status = CheckStatus::Fail;
                    res.detail = "self-loop: node " + std::to_string(j) +
                                 " couples y_" + std::to_string(m) + " with its input";
                    return res;
                }
            }
        }
    }
    res.detail = "b >= 0, G >= 0, no self-loops";
    return res;
}

CheckResult check_rank(const NetworkProblem& p, const SamplingSpec& spec, double* margin_out) {
    CheckResult res;
    const int J = p.num_nodes();
    const int n_u = p.num_inputs();
    const int n_x = p.num_states();
    if (J > n_u) {
        res.status = CheckStatus::Fail;
        res.detail = "more nodes than inputs: rank(F + G dy/du) < J structurally";
        return res;
    }

    const StepBox box = step_box(p, spec.clamp);
    const std::vector<Vector> pts = sample_box(box, spec);
    const Matrix F = Matrix(p.node_F());
    const Matrix G = Matrix(p.node_G());

    double margin = std::numeric_limits<double>::infinity();
    for (const Vector& pt : pts) {
        const Vector x = pt.head(n_x);
        const Vector u = pt.tail(n_u);
        Matrix D = Matrix::Zero(p.num_converters(), n_u);
        try {
            for (int m = 0; m < p.num_converters(); ++m) {
                D.row(m) = p.converter_output_slope(m, x, u).transpose();
            }
        } catch (const Error& e) {
            res.status = CheckStatus::Fail;
            res.detail = std::string("output derivative undefined in box: ") + e.what();
            res.witness = pt;
            return res;
        }
        const Matrix R = F + G * D;
        Eigen::JacobiSVD<Matrix> svd(R);
        const Vector& sv = svd.singularValues();
        const double sigma_1 = sv[0];
        const double sigma_J = sv[J - 1];
        margin = std::min(margin, sigma_J);
        if (sigma_J <= kRankTol * std::max(sigma_1, 1e-300)) {
            res.status = CheckStatus::Fail;
            res.detail = "rank deficiency: sigma_J = " + std::to_string(sigma_J);
            res.witness = pt;
            if (margin_out) *margin_out = margin;
            return res;
        }
    }
    res.status = CheckStatus::SampledPass;
    res.sampled_points = static_cast<int>(pts.size());
    res.detail = "sigma_J margin " + std::to_string(margin) + " over " +
                 std::to_string(pts.size()) + " points";
    if (margin_out) *margin_out = margin;
    return res;
}

Matrix stacked_constraint_gradient(const NetworkProblem& p, const std::vector<Vector>& xs,
                                   const std::vector<Vector>& us) {
    const int K = p.horizon();
    const int n_x = p.num_states();
    const int n_u = p.num_inputs();
    const int M = p.num_converters();
    const int J = p.num_nodes();
    if (static_cast<int>(xs.size()) != K || static_cast<int>(us.size()) != K) {
        throw Error(ErrorCode::DimensionMismatch, "need one (x, u) point per step");
    }

    const int x_cols = (K + 1) * n_x;
    const int u_cols = K * n_u;
    const int y_cols = K * M;
    const int rows = K * M + (K + 1) * n_x + K * J;
    Matrix Xi = Matrix::Zero(rows, x_cols + u_cols + y_cols);

    // Converter rows: block-diagonal dh/dx, dh/du, dh/dy per step.
    for (int k = 0; k < K; ++k) {
        for (int m = 0; m < M; ++m) {
            const int row = k * M + m;
            const double y = model_output(p.converters()[m].model, p.converter_xi(m, xs[k], us[k]));
            Vector dh_dx, dh_du;
            double dh_dy = 0.0;
            p.converter_jacobian(m, xs[k], us[k], y, dh_dx, dh_du, dh_dy);
            Xi.block(row, k * n_x, 1, n_x) = dh_dx.transpose();
            Xi.block(row, x_cols + k * n_u, 1, n_u) = dh_du.transpose();
            Xi(row, x_cols + u_cols + k * M + m) = dh_dy;
        }
    }

    // Dynamics rows.
    const int dyn_row0 = K * M;
    Xi.block(dyn_row0, 0, (K + 1) * n_x, x_cols) = Matrix(p.gamma_x());
    Xi.block(dyn_row0, x_cols, (K + 1) * n_x, u_cols) = Matrix(p.gamma_u());

    // Node rows: I (x) E, I (x) F, I (x) G.
    const int node_row0 = dyn_row0 + (K + 1) * n_x;
    const Matrix E = Matrix(p.node_E());
    const Matrix F = Matrix(p.node_F());
    const Matrix G = Matrix(p.node_G());
    for (int k = 0; k < K; ++k) {
        Xi.block(node_row0 + k * J, k * n_x, J, n_x) = E;
        Xi.block(node_row0 + k * J, x_cols + k * n_u, J, n_u) = F;
        Xi.block(node_row0 + k * J, x_cols + u_cols + k * M, J, M) = G;
    }
    return Xi;
}

int numerical_rank(const Matrix& m, double rel_tol) {
    Eigen::BDCSVD<Matrix> svd(m);
    const Vector& sv = svd.singularValues();
    if (sv.size() == 0) return 0;
    const double thresh = rel_tol * sv[0];
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i) {
        if (sv[i] > thresh) ++rank;
    }
    return rank;
}

CheckResult check_licq(const NetworkProblem& p, const SamplingSpec& spec) {
    CheckResult res;

    const CheckResult mono_all = [&] {
        CheckResult agg;
        for (int m = 0; m < p.num_converters(); ++m) {
            CheckResult r = check_monotonic_output(p, m);
            if (!r.passed()) return r;
        }
        agg.detail = "dh/dy < 0 for all converters";
        return agg;
    }();
    if (!mono_all.passed()) return mono_all;

    const CheckResult structure = check_network_structure(p);
    if (!structure.passed()) return structure;

    CheckResult rank = check_rank(p, spec);
    if (!rank.passed()) return rank;

    // Desk-scale verification of the full stacked gradient: the per-step
    // reduction must agree with the explicit matrix rank.
    const int K = p.horizon();
    const int rows = K * p.num_converters() + (K + 1) * p.num_states() + K * p.num_nodes();
    const int cols = (K + 1) * p.num_states() + K * (p.num_inputs() + p.num_converters());
    if (K <= 10 && static_cast<long>(rows) * cols <= 4'000'000L) {
        const StepBox box = step_box(p, spec.clamp);
        SamplingSpec point_spec = spec;
        point_spec.n = K;
        point_spec.include_corners = false;
        const std::vector<Vector> pts = sample_box(box, point_spec);
        std::vector<Vector> xs(K), us(K);
        for (int k = 0; k < K; ++k) {
            xs[k] = pts[k % pts.size()].head(p.num_states());
            us[k] = pts[k % pts.size()].tail(p.num_inputs());
        }
        const Matrix Xi = stacked_constraint_gradient(p, xs, us);
        const int r = numerical_rank(Xi, kRankTol);
        if (r != rows) {
            res.status = CheckStatus::Fail;
            res.detail = "stacked gradient rank " + std::to_string(r) + " < rows " +
                         std::to_string(rows);
            return res;
        }
    }

    res.status = CheckStatus::SampledPass;
    res.sampled_points = rank.sampled_points;
    res.detail = "per-step reduction full rank; " + rank.detail;
    return res;
}

RequirementReport check_requirements(const NetworkProblem& p, const SamplingSpec& spec) {
    RequirementReport report;

    report.convexity.detail = "all templates certified";
    for (int m = 0; m < p.num_converters(); ++m) {
        CheckResult r = check_convexity(p, m);
        if (!r.passed()) {
            report.convexity = r;
            report.convexity.detail = "converter " + std::to_string(m) + ": " + r.detail;
            break;
        }
    }
    report.monotonicity.detail = "dh/dy < 0 for all converters";
    for (int m = 0; m < p.num_converters(); ++m) {
        CheckResult r = check_monotonic_output(p, m);
        if (!r.passed()) {
            report.monotonicity = r;
            report.monotonicity.detail = "converter " + std::to_string(m) + ": " + r.detail;
            break;
        }
    }
    report.structure = check_network_structure(p);
    report.rank = check_rank(p, spec, &report.rank_margin);
    report.licq = check_licq(p, spec);
    return report;
}

std::string RequirementReport::summary() const {
    std::ostringstream os;
    os << "i:" << status_name(convexity.status) << " ii:" << status_name(monotonicity.status)
       << " iii-iv:" << status_name(structure.status) << " v:" << status_name(rank.status)
       << " licq:" << status_name(licq.status) << " rank_margin:" << rank_margin;
    for (const CheckResult* r : {&convexity, &monotonicity, &structure, &rank, &licq}) {
        if (!r->passed()) {
            os << " [" << r->detail << "]";
            break;
        }
    }
    return os.str();
}

std::string RequirementReport::to_json() const {
    nlohmann::json j;
    auto put = [](const CheckResult& r) {
        nlohmann::json e;
        e["status"] = status_name(r.status);
        e["detail"] = r.detail;
        if (r.sampled_points > 0) e["sampled_points"] = r.sampled_points;
        if (r.witness.has_value()) {
            e["witness"] = std::vector<double>(r.witness->data(),
                                               r.witness->data() + r.witness->size());
        }
        return e;
    };
    j["requirement_i_convexity"] = put(convexity);
    j["requirement_ii_monotonic_output"] = put(monotonicity);
    j["requirement_iii_iv_structure"] = put(structure);
    j["requirement_v_rank"] = put(rank);
    j["licq"] = put(licq);
    j["rank_margin"] = rank_margin;
    j["all_passed"] = all_passed();
    return j.dump(2);
}

}  // namespace powernet
