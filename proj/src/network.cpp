#include "powernet/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace powernet {

const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::PositivityViolation: return "PositivityViolation";
        case ErrorCode::SelfLoop: return "SelfLoop";
        case ErrorCode::HorizonMismatch: return "HorizonMismatch";
        case ErrorCode::EmptyNetwork: return "EmptyNetwork";
        case ErrorCode::InvalidParameter: return "InvalidParameter";
        case ErrorCode::InfeasibleBounds: return "InfeasibleBounds";
        case ErrorCode::SingularOutputDerivative: return "SingularOutputDerivative";
        case ErrorCode::NotRelaxable: return "NotRelaxable";
        case ErrorCode::RequirementUnmet: return "RequirementUnmet";
        case ErrorCode::UnboundedBox: return "UnboundedBox";
        case ErrorCode::NotSolved: return "NotSolved";
        case ErrorCode::NotExactified: return "NotExactified";
        case ErrorCode::NoDissipativePath: return "NoDissipativePath";
        case ErrorCode::ProjectionInfeasible: return "ProjectionInfeasible";
        case ErrorCode::SizeGuard: return "SizeGuard";
        case ErrorCode::AmbiguousRoot: return "AmbiguousRoot";
        case ErrorCode::SchemaViolation: return "SchemaViolation";
        case ErrorCode::IoError: return "IoError";
    }
    return "UnknownError";
}

// ---------------------------------------------------------------------------
// Converter templates
// ---------------------------------------------------------------------------

int model_input_dim(const ConverterModel& model) {
    return std::visit(
        [](const auto& m) -> int {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, QuadraticModel>) {
                return static_cast<int>(m.a.size());
            } else if constexpr (std::is_same_v<T, LinearModel>) {
                return static_cast<int>(m.a.size());
            } else {
                return 1;
            }
        },
        model);
}

double eval_model(const ConverterModel& model, const Vector& xi, double y) {
    if (xi.size() != model_input_dim(model)) {
        throw Error(ErrorCode::DimensionMismatch, "converter input size");
    }
    return std::visit(
        [&](const auto& m) -> double {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, QuadraticModel>) {
                return 0.5 * xi.dot(m.Q * xi) + m.a.dot(xi) + m.beta - y;
            } else if constexpr (std::is_same_v<T, ScaledSquareModel>) {
                return m.c * xi[0] * xi[0] + m.d * xi[0] - y;
            } else if constexpr (std::is_same_v<T, HyperbolicModel>) {
                return 1.0 - y * (xi[0] + m.eps);
            } else {
                return m.a.dot(xi) + m.beta - y;
            }
        },
        model);
}

ModelJacobian model_jacobian(const ConverterModel& model, const Vector& xi, double y) {
    if (xi.size() != model_input_dim(model)) {
        throw Error(ErrorCode::DimensionMismatch, "converter input size");
    }
    ModelJacobian jac;
    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, QuadraticModel>) {
                jac.dh_dxi = m.Q * xi + m.a;
                jac.dh_dy = -1.0;
            } else if constexpr (std::is_same_v<T, ScaledSquareModel>) {
                jac.dh_dxi = Vector::Constant(1, 2.0 * m.c * xi[0] + m.d);
                jac.dh_dy = -1.0;
            } else if constexpr (std::is_same_v<T, HyperbolicModel>) {
                jac.dh_dxi = Vector::Constant(1, -y);
                jac.dh_dy = -(xi[0] + m.eps);
            } else {
                jac.dh_dxi = m.a;
                jac.dh_dy = -1.0;
            }
        },
        model);
    if (jac.dh_dy == 0.0) {
        throw Error(ErrorCode::SingularOutputDerivative, "dh/dy = 0 at evaluation point");
    }
    return jac;
}

double model_output(const ConverterModel& model, const Vector& xi) {
    if (xi.size() != model_input_dim(model)) {
        throw Error(ErrorCode::DimensionMismatch, "converter input size");
    }
    return std::visit(
        [&](const auto& m) -> double {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, QuadraticModel>) {
                return 0.5 * xi.dot(m.Q * xi) + m.a.dot(xi) + m.beta;
            } else if constexpr (std::is_same_v<T, ScaledSquareModel>) {
                return m.c * xi[0] * xi[0] + m.d * xi[0];
            } else if constexpr (std::is_same_v<T, HyperbolicModel>) {
                const double q = xi[0] + m.eps;
                if (q == 0.0) {
                    throw Error(ErrorCode::SingularOutputDerivative, "hyperbolic at u = -eps");
                }
                return 1.0 / q;
            } else {
                return m.a.dot(xi) + m.beta;
            }
        },
        model);
}

Vector model_output_slope(const ConverterModel& model, const Vector& xi) {
    const double y = model_output(model, xi);
    const ModelJacobian jac = model_jacobian(model, xi, y);
    return -jac.dh_dxi / jac.dh_dy;
}

double solve_model_input(const ConverterModel& model, const Vector& xi, double y, int slot,
                         double lo, double hi, bool& ok) {
    ok = true;
    const double cur = xi[slot];
    const double slack = 1e-9 * (1.0 + std::max(std::abs(lo), std::abs(hi)));
    auto in_box = [&](double v) { return v >= lo - slack && v <= hi + slack; };
    auto pick = [&](double r1, double r2) -> double {
        const bool ok1 = std::isfinite(r1) && in_box(r1);
        const bool ok2 = std::isfinite(r2) && in_box(r2);
        if (ok1 && ok2) return std::abs(r1 - cur) <= std::abs(r2 - cur) ? r1 : r2;
        if (ok1) return r1;
        if (ok2) return r2;
        ok = false;
        return cur;
    };
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    return std::visit(
        [&](const auto& m) -> double {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, QuadraticModel>) {
                Vector rest = xi;
                rest[slot] = 0.0;
                const double qii = m.Q(slot, slot);
                const double lin = m.Q.row(slot).dot(rest) + m.a[slot];
                const double c0 = 0.5 * rest.dot(m.Q * rest) + m.a.dot(rest) + m.beta - y;
                if (qii == 0.0) {
                    if (lin == 0.0) {
                        ok = false;
                        return cur;
                    }
                    return pick(-c0 / lin, nan);
                }
                const double disc = lin * lin - 2.0 * qii * c0;
                if (disc < 0.0) {
                    ok = false;
                    return cur;
                }
                const double sq = std::sqrt(disc);
                return pick((-lin + sq) / qii, (-lin - sq) / qii);
            } else if constexpr (std::is_same_v<T, ScaledSquareModel>) {
                if (m.c == 0.0) {
                    if (m.d == 0.0) {
                        ok = false;
                        return cur;
                    }
                    return pick(y / m.d, nan);
                }
                const double disc = m.d * m.d + 4.0 * m.c * y;
                if (disc < 0.0) {
                    ok = false;
                    return cur;
                }
                const double sq = std::sqrt(disc);
                return pick((-m.d + sq) / (2.0 * m.c), (-m.d - sq) / (2.0 * m.c));
            } else if constexpr (std::is_same_v<T, HyperbolicModel>) {
                if (y == 0.0) {
                    ok = false;
                    return cur;
                }
                return pick(1.0 / y - m.eps, nan);
            } else {
                Vector rest = xi;
                rest[slot] = 0.0;
                if (m.a[slot] == 0.0) {
                    ok = false;
                    return cur;
                }
                return pick((y - m.beta - m.a.dot(rest)) / m.a[slot], nan);
            }
        },
        model);
}

// ---------------------------------------------------------------------------
// Builder
// ---------------------------------------------------------------------------

namespace {

void require(bool ok, ErrorCode code, const std::string& what) {
    if (!ok) throw Error(code, what);
}

Vector broadcast_or(const Vector& v, int n, double fill) {
    if (v.size() == n) return v;
    if (v.size() == 0) return Vector::Constant(n, fill);
    throw Error(ErrorCode::DimensionMismatch, "expected vector of size " + std::to_string(n));
}

}  // namespace

int NetworkBuilder::add_buffer(Buffer b) {
    const int n_x = static_cast<int>(b.A.rows());
    require(b.A.rows() == b.A.cols(), ErrorCode::DimensionMismatch, "A must be square");
    const int n_u = static_cast<int>(b.B.cols());
    require(b.B.rows() == n_x, ErrorCode::DimensionMismatch, "B rows must match state dim");
    require(b.x_init.size() == n_x, ErrorCode::DimensionMismatch, "x_init size");
    b.x_lo = broadcast_or(b.x_lo, n_x, -std::numeric_limits<double>::infinity());
    b.x_hi = broadcast_or(b.x_hi, n_x, std::numeric_limits<double>::infinity());
    b.u_lo = broadcast_or(b.u_lo, n_u, -std::numeric_limits<double>::infinity());
    b.u_hi = broadcast_or(b.u_hi, n_u, std::numeric_limits<double>::infinity());
    b.cost_a = broadcast_or(b.cost_a, n_u, 0.0);
    for (const Vector& f : b.f) {
        require(f.size() == n_x, ErrorCode::DimensionMismatch, "disturbance size");
    }
    for (int i = 0; i < n_x; ++i) {
        require(b.x_lo[i] <= b.x_init[i] && b.x_init[i] <= b.x_hi[i], ErrorCode::InfeasibleBounds,
                "x_init outside state box");
    }
    for (int i = 0; i < n_u; ++i) {
        require(b.u_lo[i] <= b.u_hi[i], ErrorCode::InfeasibleBounds, "empty input box");
    }

    SubsystemInfo info;
    info.x_offset = n_x_;
    info.n_x = n_x;
    info.u_offset = n_u_;
    info.n_u = n_u;
    info.buffer = static_cast<int>(buffers_.size());
    n_x_ += n_x;
    n_u_ += n_u;
    subsystems_.push_back(info);
    terminal_overrides_.emplace_back(Vector(), Vector());
    buffers_.push_back(std::move(b));
    return static_cast<int>(subsystems_.size()) - 1;
}

int NetworkBuilder::add_converter(Converter c) {
    const int dim = model_input_dim(c.model);
    ConverterWiring wiring;

    if (c.attach.has_value()) {
        const int s = *c.attach;
        require(s >= 0 && s < static_cast<int>(subsystems_.size()), ErrorCode::InvalidParameter,
                "attach handle out of range");
        SubsystemInfo& info = subsystems_[s];
        require(info.converter < 0, ErrorCode::InvalidParameter,
                "subsystem already has a converter (outputs are scalar)");
        require(static_cast<int>(c.input_vars.size()) == dim, ErrorCode::DimensionMismatch,
                "input_vars must match template input count");
        wiring.subsystem = s;
        for (int idx : c.input_vars) {
            require(idx >= 0 && idx < info.n_x + info.n_u, ErrorCode::InvalidParameter,
                    "input_vars index outside subsystem variables");
            if (idx < info.n_x) {
                wiring.state_idx.push_back(info.x_offset + idx);
                wiring.xi_is_state.push_back(true);
            } else {
                wiring.input_idx.push_back(info.u_offset + (idx - info.n_x));
                wiring.xi_is_state.push_back(false);
            }
        }
        info.converter = static_cast<int>(converters_.size());
    } else {
        // Standalone: the converter brings its own input channels.
        require(c.u_lo.size() == dim && c.u_hi.size() == dim, ErrorCode::DimensionMismatch,
                "standalone converter needs bounds for each input");
        for (int i = 0; i < dim; ++i) {
            require(c.u_lo[i] <= c.u_hi[i], ErrorCode::InfeasibleBounds, "empty input box");
        }
        c.cost_a = broadcast_or(c.cost_a, dim, 0.0);

        SubsystemInfo info;
        info.x_offset = n_x_;
        info.n_x = 0;
        info.u_offset = n_u_;
        info.n_u = dim;
        info.converter = static_cast<int>(converters_.size());
        n_u_ += dim;

        wiring.subsystem = static_cast<int>(subsystems_.size());
        for (int i = 0; i < dim; ++i) {
            wiring.input_idx.push_back(info.u_offset + i);
            wiring.xi_is_state.push_back(false);
        }
        subsystems_.push_back(info);
        terminal_overrides_.emplace_back(Vector(), Vector());
    }

    if (const auto* hyp = std::get_if<HyperbolicModel>(&c.model)) {
        // The admissible box must keep u + eps away from zero.
        double lo, hi;
        if (c.attach.has_value()) {
            const SubsystemInfo& info = subsystems_[*c.attach];
            const int gi = wiring.input_idx.empty() ? -1 : wiring.input_idx[0] - info.u_offset;
            require(gi >= 0 && info.buffer >= 0, ErrorCode::InvalidParameter,
                    "hyperbolic template needs an input");
            lo = buffers_[info.buffer].u_lo[gi];
            hi = buffers_[info.buffer].u_hi[gi];
        } else {
            lo = c.u_lo[0];
            hi = c.u_hi[0];
        }
        require(lo > -hyp->eps || hi < -hyp->eps, ErrorCode::InfeasibleBounds,
                "hyperbolic input box must avoid u = -eps");
    }
    if (const auto* quad = std::get_if<QuadraticModel>(&c.model)) {
        require(quad->Q.rows() == quad->Q.cols() && quad->Q.rows() == dim,
                ErrorCode::DimensionMismatch, "Q dimensions");
        require(quad->Q.isApprox(quad->Q.transpose(), 1e-12), ErrorCode::InvalidParameter,
                "Q must be symmetric");
    }

    wirings_.push_back(std::move(wiring));
    converters_.push_back(std::move(c));
    return static_cast<int>(converters_.size()) - 1;
}

void NetworkBuilder::validate_node(const Node& n) const {
    for (const auto& [idx, val] : n.e_row) {
        require(idx >= 0 && idx < n_x_, ErrorCode::InvalidParameter, "e_row index");
        (void)val;
    }
    for (const auto& [idx, val] : n.f_row) {
        require(idx >= 0 && idx < n_u_, ErrorCode::InvalidParameter, "f_row index");
        (void)val;
    }
    for (const auto& [idx, val] : n.g_row) {
        require(idx >= 0 && idx < static_cast<int>(converters_.size()), ErrorCode::InvalidParameter,
                "g_row index");
        // Requirement iii: output couplings enter with nonnegative weight.
        require(val >= 0.0, ErrorCode::PositivityViolation,
                "negative G entry at converter " + std::to_string(idx));
    }
    // Requirement iv: a node seeing y_m must not also see x_m or u_m.
    for (const auto& [m, gval] : n.g_row) {
        if (gval == 0.0) continue;
        const ConverterWiring& w = wirings_[m];
        const SubsystemInfo& info = subsystems_[w.subsystem];
        for (const auto& [idx, val] : n.e_row) {
            if (val == 0.0) continue;
            require(idx < info.x_offset || idx >= info.x_offset + info.n_x, ErrorCode::SelfLoop,
                    "node couples converter output with its own state");
        }
        for (const auto& [idx, val] : n.f_row) {
            if (val == 0.0) continue;
            require(idx < info.u_offset || idx >= info.u_offset + info.n_u, ErrorCode::SelfLoop,
                    "node couples converter output with its own input");
        }
    }
}

int NetworkBuilder::add_node(Node n) {
    validate_node(n);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

int NetworkBuilder::add_node_unchecked(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

void NetworkBuilder::set_terminal_bounds(int subsystem, const Vector& lo, const Vector& hi) {
    require(subsystem >= 0 && subsystem < static_cast<int>(subsystems_.size()),
            ErrorCode::InvalidParameter, "subsystem handle");
    const SubsystemInfo& info = subsystems_[subsystem];
    require(lo.size() == info.n_x && hi.size() == info.n_x, ErrorCode::DimensionMismatch,
            "terminal bound size");
    terminal_overrides_[subsystem] = {lo, hi};
}

NetworkProblem NetworkBuilder::assemble(int horizon) const {
    require(horizon >= 1, ErrorCode::InvalidParameter, "horizon must be >= 1");
    require(!nodes_.empty(), ErrorCode::EmptyNetwork, "network has no nodes");

    NetworkProblem p;
    p.K_ = horizon;
    p.n_x_ = n_x_;
    p.n_u_ = n_u_;
    p.buffers_ = buffers_;
    p.converters_ = converters_;
    p.nodes_ = nodes_;
    p.subsystems_ = subsystems_;
    p.wirings_ = wirings_;

    const int K = horizon;
    const int M = static_cast<int>(converters_.size());
    const int J = static_cast<int>(nodes_.size());

    // Stacked bounds, initial state, and cost.
    p.x_lo_.resize(n_x_);
    p.x_hi_.resize(n_x_);
    p.u_lo_.resize(n_u_);
    p.u_hi_.resize(n_u_);
    p.x_init_.resize(n_x_);
    p.cost_a_ = Vector::Zero(n_u_);
    p.cost_b_ = Vector::Zero(M);
    p.x_term_lo_.resize(n_x_);
    p.x_term_hi_.resize(n_x_);

    for (std::size_t s = 0; s < subsystems_.size(); ++s) {
        const SubsystemInfo& info = subsystems_[s];
        if (info.buffer >= 0) {
            const Buffer& b = buffers_[info.buffer];
            p.x_lo_.segment(info.x_offset, info.n_x) = b.x_lo;
            p.x_hi_.segment(info.x_offset, info.n_x) = b.x_hi;
            p.x_init_.segment(info.x_offset, info.n_x) = b.x_init;
            p.u_lo_.segment(info.u_offset, info.n_u) = b.u_lo;
            p.u_hi_.segment(info.u_offset, info.n_u) = b.u_hi;
            p.cost_a_.segment(info.u_offset, info.n_u) = b.cost_a;
            const auto& [tlo, thi] = terminal_overrides_[s];
            p.x_term_lo_.segment(info.x_offset, info.n_x) =
                tlo.size() > 0 ? tlo.cwiseMax(b.x_lo) : b.x_lo;
            p.x_term_hi_.segment(info.x_offset, info.n_x) =
                thi.size() > 0 ? thi.cwiseMin(b.x_hi) : b.x_hi;
        } else if (info.converter >= 0) {
            const Converter& c = converters_[info.converter];
            if (!c.attach.has_value()) {
                p.u_lo_.segment(info.u_offset, info.n_u) = c.u_lo;
                p.u_hi_.segment(info.u_offset, info.n_u) = c.u_hi;
                p.cost_a_.segment(info.u_offset, info.n_u) = c.cost_a;
            }
        }
    }
    for (int m = 0; m < M; ++m) {
        p.cost_b_[m] = converters_[m].cost_b;
    }

    // Gamma_x: unit lower block-bidiagonal with -A sub-blocks over x_0..x_K.
    // Gamma_u: strictly lower block with -B sub-blocks.
    std::vector<Triplet> tx, tu;
    Vector rhs = Vector::Zero((K + 1) * n_x_);
    rhs.head(n_x_) = p.x_init_;
    for (int i = 0; i < n_x_; ++i) {
        tx.emplace_back(i, i, 1.0);
    }
    for (int k = 0; k < K; ++k) {
        const int row0 = (k + 1) * n_x_;
        for (int i = 0; i < n_x_; ++i) {
            tx.emplace_back(row0 + i, row0 + i, 1.0);
        }
        for (const SubsystemInfo& info : subsystems_) {
            if (info.buffer < 0) continue;
            const Buffer& b = buffers_[info.buffer];
            for (int r = 0; r < info.n_x; ++r) {
                for (int c = 0; c < info.n_x; ++c) {
                    if (b.A(r, c) != 0.0) {
                        tx.emplace_back(row0 + info.x_offset + r, k * n_x_ + info.x_offset + c,
                                        -b.A(r, c));
                    }
                }
                for (int c = 0; c < info.n_u; ++c) {
                    if (b.B(r, c) != 0.0) {
                        tu.emplace_back(row0 + info.x_offset + r, k * n_u_ + info.u_offset + c,
                                        -b.B(r, c));
                    }
                }
            }
            if (!b.f.empty()) {
                require(b.f.size() == 1 || static_cast<int>(b.f.size()) == K,
                        ErrorCode::HorizonMismatch, "disturbance sequence length");
                const Vector& fk = b.f.size() == 1 ? b.f[0] : b.f[k];
                rhs.segment(row0 + info.x_offset, info.n_x) = fk;
            }
        }
    }
    p.gamma_x_.resize((K + 1) * n_x_, (K + 1) * n_x_);
    p.gamma_x_.setFromTriplets(tx.begin(), tx.end());
    p.gamma_u_.resize((K + 1) * n_x_, K * n_u_);
    p.gamma_u_.setFromTriplets(tu.begin(), tu.end());
    p.dynamics_rhs_ = rhs;

    // Per-step node rows and the load table.
    std::vector<Triplet> te, tf, tg;
    p.loads_ = Matrix::Zero(J, K);
    p.n_dissipative_ = 0;
    for (int j = 0; j < J; ++j) {
        const Node& n = nodes_[j];
        for (const auto& [idx, val] : n.e_row) te.emplace_back(j, idx, val);
        for (const auto& [idx, val] : n.f_row) tf.emplace_back(j, idx, val);
        for (const auto& [idx, val] : n.g_row) tg.emplace_back(j, idx, val);
        if (n.kind == NodeKind::Dissipative) ++p.n_dissipative_;
        if (n.load.empty()) continue;
        require(n.load.size() == 1 || static_cast<int>(n.load.size()) == K,
                ErrorCode::HorizonMismatch, "load sequence length");
        for (int k = 0; k < K; ++k) {
            p.loads_(j, k) = n.load.size() == 1 ? n.load[0] : n.load[k];
        }
    }
    p.E_.resize(J, n_x_);
    p.E_.setFromTriplets(te.begin(), te.end());
    p.F_.resize(J, n_u_);
    p.F_.setFromTriplets(tf.begin(), tf.end());
    p.G_.resize(J, M);
    p.G_.setFromTriplets(tg.begin(), tg.end());

    return p;
}

// ---------------------------------------------------------------------------
// NetworkProblem queries
// ---------------------------------------------------------------------------

Vector NetworkProblem::disturbance(int k) const {
    return dynamics_rhs_.segment((k + 1) * n_x_, n_x_);
}

Vector NetworkProblem::converter_xi(int m, const Vector& x_k, const Vector& u_k) const {
    const ConverterWiring& w = wirings_.at(m);
    Vector xi(w.xi_is_state.size());
    std::size_t si = 0, ui = 0;
    for (std::size_t i = 0; i < w.xi_is_state.size(); ++i) {
        xi[static_cast<int>(i)] =
            w.xi_is_state[i] ? x_k[w.state_idx[si++]] : u_k[w.input_idx[ui++]];
    }
    return xi;
}

double NetworkProblem::converter_residual(int m, const Vector& x_k, const Vector& u_k,
                                          double y_m) const {
    return eval_model(converters_.at(m).model, converter_xi(m, x_k, u_k), y_m);
}

void NetworkProblem::converter_jacobian(int m, const Vector& x_k, const Vector& u_k, double y_m,
                                        Vector& dh_dx, Vector& dh_du, double& dh_dy) const {
    const ConverterWiring& w = wirings_.at(m);
    const ModelJacobian jac = model_jacobian(converters_.at(m).model, converter_xi(m, x_k, u_k), y_m);
    dh_dx = Vector::Zero(n_x_);
    dh_du = Vector::Zero(n_u_);
    std::size_t si = 0, ui = 0;
    for (std::size_t i = 0; i < w.xi_is_state.size(); ++i) {
        if (w.xi_is_state[i]) {
            dh_dx[w.state_idx[si++]] += jac.dh_dxi[static_cast<int>(i)];
        } else {
            dh_du[w.input_idx[ui++]] += jac.dh_dxi[static_cast<int>(i)];
        }
    }
    dh_dy = jac.dh_dy;
}

Vector NetworkProblem::converter_output_slope(int m, const Vector& x_k, const Vector& u_k) const {
    const ConverterWiring& w = wirings_.at(m);
    const Vector xi = converter_xi(m, x_k, u_k);
    const Vector slope = model_output_slope(converters_.at(m).model, xi);
    Vector row = Vector::Zero(n_u_);
    std::size_t ui = 0;
    for (std::size_t i = 0; i < w.xi_is_state.size(); ++i) {
        if (!w.xi_is_state[i]) {
            row[w.input_idx[ui++]] += slope[static_cast<int>(i)];
        }
    }
    return row;
}

Vector NetworkProblem::node_residual(int k, const Vector& x_k, const Vector& u_k, const Vector& y_k,
                                     const Vector& s_k) const {
    Vector r = E_ * x_k + F_ * u_k + G_ * y_k - loads_.col(k);
    int di = 0;
    for (int j = 0; j < num_nodes(); ++j) {
        if (nodes_[j].kind == NodeKind::Dissipative) {
            r[j] += s_k[di++];
        }
    }
    return r;
}

}  // namespace powernet
