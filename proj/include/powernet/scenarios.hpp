#pragma once

#include <optional>
#include <string>

#include "powernet/network.hpp"

namespace powernet {

/// Longitudinal vehicle parameters (SI units).
struct VehicleParams {
    double m = 13400.0;    ///< mass [kg]
    double m_e = 13400.0;  ///< equivalent mass incl. rotational inertia [kg]
    double c_g = 5.093;    ///< lumped aerodynamic drag [kg/m]
    double c_r = 0.007;    ///< rolling resistance [-]
    double g = 9.81;       ///< gravity [m/s^2]
    double delta_s = 5.0;  ///< sample distance [m]

    void validate() const;
};

/// Distance-sampled route: gradient alpha(s) every delta_s metres.
struct Route {
    double length = 0.0;   ///< [m]
    double delta_s = 5.0;  ///< [m]
    std::vector<double> grade;  ///< alpha_k [rad], one per sample

    int samples() const { return static_cast<int>(grade.size()); }
    /// Altitude profile by integrating sin(alpha) ds.
    std::vector<double> altitude() const;
};

struct HillSpec {
    double start = 0.0;  ///< climb begin [m]
    double end = 0.0;    ///< climb end = descent begin [m]
    double grade = 0.0;  ///< climb gradient [rad]; descent mirrors it
};

/// Piecewise gradient profile with smooth (cosine) ramps; the descent is the
/// mirror image of the climb so net altitude closes to zero.
Route synth_route(double length, const HillSpec& hill, double delta_s = 5.0);

/// Route with zero gradient everywhere.
Route flat_route(double length, double delta_s = 5.0);

/// Exact zero-order-hold discretization of the longitudinal dynamics:
/// A_d = exp(-c_g delta_s / m_e), B_d = (m_e / c_g)(1 - A_d).
/// The c_g -> 0 limit degrades to (1, delta_s); the flag reports it.
struct Discretization {
    double A_d = 1.0;
    double B_d = 0.0;
    bool drag_free_limit = false;
};

Discretization discretize_longitudinal(const VehicleParams& p);

/// Operating box of the eco-driving scenario.
struct EcoBounds {
    double v_min = 3.0;        ///< [m/s], must stay > 0 for the rank condition
    double v_max = 25.0;       ///< [m/s]
    double v_init = 15.0;      ///< [m/s]
    double f_trac_max = 15e3;  ///< max machine force [N]
    double f_brake_max = 60e3; ///< max braking force [N]
    bool allow_regen = false;  ///< negative machine force (recuperation)
};

struct EcoHandles {
    int kin_buffer = -1;
    int time_buffer = -1;
    int em_converter = -1;
    int vel_converter = -1;
    int leth_converter = -1;
    int brake_node = -1;
    int speed_node = -1;
    int kin_node = -1;
};

/// Eco-driving network: kinetic-energy and elapsed-time buffers, machine /
/// velocity / lethargy converters, brake plus two conservative nodes, and a
/// terminal bound time(K) <= T_max. Cost is the machine energy.
NetworkProblem build_eco_driving(const VehicleParams& p, const Route& r, double T_max,
                                 const EcoBounds& bounds = {}, EcoHandles* handles = nullptr);

/// Quadratic input/output coefficients y = a2 u^2 + a1 u + a0.
struct QuadCoeffs {
    double a2 = 0.0;
    double a1 = 1.0;
    double a0 = 0.0;
};

/// Series-hybrid CVEM parameters: genset, battery, and electric machine.
struct CvemParams {
    QuadCoeffs genset{5e-6, 2.4, 500.0};   ///< fuel power from bus power
    QuadCoeffs battery{1e-6, 1.0, 0.0};    ///< bus power from charge rate
    QuadCoeffs machine{2e-6, 1.11, 50.0};  ///< bus power from mechanical power
    double delta_t = 1.0;                  ///< sample time [s]
    double batt_capacity = 1.8e7;          ///< [J]
    double batt_init_frac = 0.5;
    double batt_power_max = 6e4;           ///< |u_s| bound [W]
    double genset_power_max = 1e5;         ///< [W]
    double machine_power_min = -5e4;       ///< [W] (regen)
    double machine_power_max = 1e5;        ///< [W]
    bool fuel_positive = true;             ///< pin u_f >= 0
    std::vector<double> demand;            ///< v_p,k [W]

    void validate() const;
};

struct CvemHandles {
    int battery_buffer = -1;
    int genset_converter = -1;
    int battery_converter = -1;
    int machine_converter = -1;
    int bus_node = -1;
    int drive_node = -1;
};

/// CVEM network: battery buffer with attached loss converter, genset and
/// machine converters, conservative bus node, dissipative drive node.
/// Cost is the fuel power.
NetworkProblem build_cvem(const CvemParams& c, CvemHandles* handles = nullptr);

}  // namespace powernet
