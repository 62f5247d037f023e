#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "powernet/errors.hpp"

namespace powernet {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// ---------------------------------------------------------------------------
// Converter templates
//
// Every template is stored so that dh/dy < 0 on its admissible input box:
// the quadratic family keeps h = model(xi) - y, the hyperbolic family keeps
// h = 1 - y*(u + eps) on u > -eps. Requirement checks rely on this stored
// orientation.
// ---------------------------------------------------------------------------

/// h = 1/2 xi'Q xi + a'xi + beta - y, with xi the selected (x,u) inputs.
struct QuadraticModel {
    Matrix Q;
    Vector a;
    double beta = 0.0;
};

/// h = c*u^2 + d*u - y on a scalar input.
struct ScaledSquareModel {
    double c = 0.0;
    double d = 0.0;
};

/// h = 1 - y*(u + eps) on a scalar input.
struct HyperbolicModel {
    double eps = 0.0;
};

/// h = a'xi + beta - y.
struct LinearModel {
    Vector a;
    double beta = 0.0;
};

using ConverterModel = std::variant<QuadraticModel, ScaledSquareModel, HyperbolicModel, LinearModel>;

/// Number of inputs the template consumes.
int model_input_dim(const ConverterModel& model);

/// Residual h(xi, y); zero iff the point lies on the converter manifold.
double eval_model(const ConverterModel& model, const Vector& xi, double y);

struct ModelJacobian {
    Vector dh_dxi;
    double dh_dy = 0.0;
};

/// Analytic partials of h at (xi, y). Throws SingularOutputDerivative when
/// dh/dy vanishes (hyperbolic template at u = -eps).
ModelJacobian model_jacobian(const ConverterModel& model, const Vector& xi, double y);

/// Output value solving h(xi, y) = 0 for y (always possible, dh/dy != 0).
double model_output(const ConverterModel& model, const Vector& xi);

/// dy/du = -(dh/dy)^-1 dh/du with y eliminated through h = 0.
Vector model_output_slope(const ConverterModel& model, const Vector& xi);

/// Solves h(xi, y) = 0 for xi[slot] with the other entries and y fixed.
/// Quadratic templates have up to two roots: the in-box root closest to the
/// current xi[slot] wins. ok is cleared when no in-box root exists.
double solve_model_input(const ConverterModel& model, const Vector& xi, double y, int slot,
                         double lo, double hi, bool& ok);

// ---------------------------------------------------------------------------
// Network components
// ---------------------------------------------------------------------------

/// Energy buffer with linear discrete-time dynamics
///   x_{k+1} = A x_k + B u_k + f_k.
/// The disturbance is a per-step sequence; a single column broadcasts.
struct Buffer {
    Matrix A;
    Matrix B;
    std::vector<Vector> f;
    Vector x_init;
    Vector x_lo, x_hi;
    Vector u_lo, u_hi;
    Vector cost_a;  ///< per-input cost weights (empty = zero)
    std::string name;
};

/// Static converter producing one scalar output y.
///
/// A converter either attaches to an existing buffer subsystem (input_vars
/// index into that subsystem's stacked [x; u]) or stands alone with its own
/// input channels and box bounds.
struct Converter {
    ConverterModel model;
    std::optional<int> attach;     ///< subsystem handle when sharing a buffer's variables
    std::vector<int> input_vars;   ///< attach case: indices into [x_m; u_m]
    Vector u_lo, u_hi;             ///< standalone case: bounds on own inputs
    Vector cost_a;                 ///< standalone case: per-input cost weights
    double cost_b = 0.0;           ///< weight on the output in the stage cost
    std::string name;
};

enum class NodeKind { Conservative, Dissipative };

/// One power-balance row  e'x + f'u + g'y + s = v  per time step.
struct Node {
    NodeKind kind = NodeKind::Conservative;
    std::vector<std::pair<int, double>> e_row;  ///< (global state index, coefficient)
    std::vector<std::pair<int, double>> f_row;  ///< (global input index, coefficient)
    std::vector<std::pair<int, double>> g_row;  ///< (converter index, coefficient >= 0)
    std::vector<double> load;                   ///< v_k sequence; single value broadcasts
    std::string name;
};

/// Where a converter's inputs live in the per-step variable stacks.
struct ConverterWiring {
    int subsystem = -1;              ///< owning subsystem
    std::vector<int> state_idx;      ///< global state indices feeding xi (in xi order)
    std::vector<int> input_idx;      ///< global input indices feeding xi (in xi order)
    std::vector<bool> xi_is_state;   ///< xi slot origin, in order
};

struct SubsystemInfo {
    int x_offset = 0;
    int n_x = 0;
    int u_offset = 0;
    int n_u = 0;
    int buffer = -1;     ///< buffer index or -1 (standalone converter subsystem)
    int converter = -1;  ///< converter index or -1
};

/// Fully assembled, immutable optimal-control problem over the network.
///
/// Safe for concurrent read-only use.
class NetworkProblem {
  public:
    int horizon() const { return K_; }
    int num_subsystems() const { return static_cast<int>(subsystems_.size()); }
    int num_converters() const { return static_cast<int>(converters_.size()); }
    int num_nodes() const { return static_cast<int>(nodes_.size()); }
    int num_states() const { return n_x_; }
    int num_inputs() const { return n_u_; }
    int num_dissipative() const { return n_dissipative_; }

    const std::vector<Buffer>& buffers() const { return buffers_; }
    const std::vector<Converter>& converters() const { return converters_; }
    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<SubsystemInfo>& subsystems() const { return subsystems_; }
    const ConverterWiring& wiring(int converter) const { return wirings_.at(converter); }

    /// Block-stacked dynamics: Gamma_x [x_0; ...; x_K] + Gamma_u [u_0; ...; u_{K-1}]
    /// = [x_init; f_0; ...; f_{K-1}].
    const SparseMatrix& gamma_x() const { return gamma_x_; }
    const SparseMatrix& gamma_u() const { return gamma_u_; }
    const Vector& dynamics_rhs() const { return dynamics_rhs_; }

    /// Per-step node coupling matrices (time invariant).
    const SparseMatrix& node_E() const { return E_; }
    const SparseMatrix& node_F() const { return F_; }
    const SparseMatrix& node_G() const { return G_; }
    /// Load v_{j,k}, one column per step.
    const Matrix& loads() const { return loads_; }

    /// Per-step box bounds on the stacked state and input vectors.
    const Vector& x_lo() const { return x_lo_; }
    const Vector& x_hi() const { return x_hi_; }
    const Vector& u_lo() const { return u_lo_; }
    const Vector& u_hi() const { return u_hi_; }
    const Vector& x_init() const { return x_init_; }
    /// Terminal-state override bounds (empty = same as running bounds).
    const Vector& x_terminal_lo() const { return x_term_lo_; }
    const Vector& x_terminal_hi() const { return x_term_hi_; }

    /// Stage cost  a'u_k + b'y_k.
    const Vector& cost_a() const { return cost_a_; }
    const Vector& cost_b() const { return cost_b_; }

    /// Disturbance f_k of every buffer stacked into one vector.
    Vector disturbance(int k) const;

    /// xi vector of converter m drawn from per-step stacks (x_k, u_k).
    Vector converter_xi(int m, const Vector& x_k, const Vector& u_k) const;

    /// Residual h_m at a per-step point.
    double converter_residual(int m, const Vector& x_k, const Vector& u_k, double y_m) const;

    /// Partials (dh/dx_k, dh/du_k, dh/dy) scattered to global per-step indices.
    void converter_jacobian(int m, const Vector& x_k, const Vector& u_k, double y_m,
                            Vector& dh_dx, Vector& dh_du, double& dh_dy) const;

    /// dy_m/du_k row with y eliminated through h = 0 (global input indices).
    Vector converter_output_slope(int m, const Vector& x_k, const Vector& u_k) const;

    /// Node residuals E x_k + F u_k + G y_k + s_k - v_k.
    Vector node_residual(int k, const Vector& x_k, const Vector& u_k, const Vector& y_k,
                         const Vector& s_k) const;

  private:
    friend class NetworkBuilder;

    int K_ = 0;
    int n_x_ = 0;
    int n_u_ = 0;
    int n_dissipative_ = 0;
    std::vector<Buffer> buffers_;
    std::vector<Converter> converters_;
    std::vector<Node> nodes_;
    std::vector<SubsystemInfo> subsystems_;
    std::vector<ConverterWiring> wirings_;
    SparseMatrix gamma_x_, gamma_u_;
    Vector dynamics_rhs_;
    SparseMatrix E_, F_, G_;
    Matrix loads_;
    Vector x_lo_, x_hi_, u_lo_, u_hi_, x_init_;
    Vector x_term_lo_, x_term_hi_;
    Vector cost_a_, cost_b_;
};

/// Declarative construction of a power network. Single-threaded; assemble()
/// freezes the declarations into an immutable NetworkProblem.
class NetworkBuilder {
  public:
    /// Registers a buffer subsystem (state_dim may be zero for a pure input
    /// channel). Returns the subsystem handle.
    int add_buffer(Buffer b);

    /// Registers a converter, standalone or attached to a buffer subsystem.
    /// Returns the converter handle.
    int add_converter(Converter c);

    /// Registers a node row. Rejects Requirement iii/iv violations at
    /// insertion (PositivityViolation / SelfLoop).
    int add_node(Node n);

    /// Insertion without the structural checks; exists so that the checker
    /// module can be exercised against malformed networks.
    int add_node_unchecked(Node n);

    /// Terminal-state bound overrides for one subsystem (Eq-style x_K caps).
    void set_terminal_bounds(int subsystem, const Vector& lo, const Vector& hi);

    [[nodiscard]] NetworkProblem assemble(int horizon) const;

    int num_states() const { return n_x_; }
    int num_inputs() const { return n_u_; }

  private:
    void validate_node(const Node& n) const;

    std::vector<Buffer> buffers_;
    std::vector<Converter> converters_;
    std::vector<Node> nodes_;
    std::vector<SubsystemInfo> subsystems_;
    std::vector<ConverterWiring> wirings_;
    std::vector<std::pair<Vector, Vector>> terminal_overrides_;  // aligned with subsystems_
    int n_x_ = 0;
    int n_u_ = 0;
};

}  // namespace powernet
