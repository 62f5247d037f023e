#include "powernet/scenarios.hpp"

#include <cmath>

namespace powernet {

namespace {

void require(bool ok, ErrorCode code, const std::string& what) {
    if (!ok) throw Error(code, what);
}

}  // namespace

void VehicleParams::validate() const {
    require(m > 0 && m_e > 0 && c_r > 0 && g > 0 && delta_s > 0, ErrorCode::InvalidParameter,
            "vehicle parameters must be positive");
    require(c_g >= 0, ErrorCode::InvalidParameter, "drag constant must be nonnegative");
    require(m_e >= m, ErrorCode::InvalidParameter, "equivalent mass below actual mass");
}

std::vector<double> Route::altitude() const {
    std::vector<double> alt(grade.size() + 1, 0.0);
    for (std::size_t k = 0; k < grade.size(); ++k) {
        alt[k + 1] = alt[k] + std::sin(grade[k]) * delta_s;
    }
    return alt;
}

Route flat_route(double length, double delta_s) {
    require(length > 0 && delta_s > 0, ErrorCode::InvalidParameter, "route dimensions");
    Route r;
    r.length = length;
    r.delta_s = delta_s;
    r.grade.assign(static_cast<std::size_t>(std::ceil(length / delta_s)), 0.0);
    return r;
}

Route synth_route(double length, const HillSpec& hill, double delta_s) {
    require(length > 0 && delta_s > 0, ErrorCode::InvalidParameter, "route dimensions");
    require(hill.start >= 0 && hill.start < hill.end && hill.end <= length,
            ErrorCode::InvalidParameter, "hill must satisfy 0 <= start < end <= length");
    require(std::abs(hill.grade) < 0.3, ErrorCode::InvalidParameter,
            "grade outside (-0.3, 0.3)");

    const double r = std::min(100.0, (hill.end - hill.start) / 4.0);
    // Climb profile: cosine ramp in, plateau, cosine taper to zero at the
    // crest. The descent is the odd mirror about s = end, so the altitude
    // integral closes exactly.
    auto climb = [&](double s) -> double {
        if (s <= hill.start) return 0.0;
        if (s < hill.start + r) {
            return hill.grade * 0.5 * (1.0 - std::cos(M_PI * (s - hill.start) / r));
        }
        if (s <= hill.end - r) return hill.grade;
        if (s < hill.end) {
            return hill.grade * std::cos(0.5 * M_PI * (s - (hill.end - r)) / r);
        }
        return 0.0;
    };
    auto profile = [&](double s) -> double {
        if (s <= hill.end) return climb(s);
        return -climb(2.0 * hill.end - s);
    };

    Route route;
    route.length = length;
    route.delta_s = delta_s;
    const int K = static_cast<int>(std::ceil(length / delta_s));
    route.grade.resize(K);
    for (int k = 0; k < K; ++k) {
        route.grade[k] = profile((k + 0.5) * delta_s);
    }
    return route;
}

Discretization discretize_longitudinal(const VehicleParams& p) {
    p.validate();
    Discretization d;
    const double ratio = p.c_g * p.delta_s / p.m_e;
    if (ratio < 1e-14) {
        d.A_d = 1.0;
        d.B_d = p.delta_s;
        d.drag_free_limit = true;
        return d;
    }
    d.A_d = std::exp(-ratio);
    d.B_d = (p.m_e / p.c_g) * (1.0 - d.A_d);
    return d;
}

NetworkProblem build_eco_driving(const VehicleParams& p, const Route& r, double T_max,
                                 const EcoBounds& bounds, EcoHandles* handles) {
    p.validate();
    require(T_max > 0, ErrorCode::InvalidParameter, "T_max must be positive");
    require(bounds.v_min > 0 && bounds.v_min < bounds.v_max, ErrorCode::InfeasibleBounds,
            "need 0 < v_min < v_max");
    require(bounds.v_init >= bounds.v_min && bounds.v_init <= bounds.v_max,
            ErrorCode::InfeasibleBounds, "v_init outside velocity box");
    require(!r.grade.empty(), ErrorCode::InvalidParameter, "route has no samples");
    require(std::abs(r.delta_s - p.delta_s) < 1e-12, ErrorCode::HorizonMismatch,
            "route sampling must match vehicle delta_s");

    const int K = r.samples();
    const Discretization d = discretize_longitudinal(p);
    NetworkBuilder nb;
    EcoHandles h;

    // Kinetic-energy buffer: x_kin' = A_d x_kin + B_d F_p + f with the
    // gravity and rolling-resistance force folded into f.
    {
        Buffer kin;
        kin.A = Matrix::Constant(1, 1, d.A_d);
        kin.B = Matrix::Constant(1, 1, d.B_d);
        kin.f.reserve(K);
        for (int k = 0; k < K; ++k) {
            const double alpha = r.grade[k];
            const double f_grav = p.m * p.g * (std::sin(alpha) + p.c_r * std::cos(alpha));
            kin.f.push_back(Vector::Constant(1, -d.B_d * f_grav));
        }
        kin.x_init = Vector::Constant(1, 0.5 * p.m_e * bounds.v_init * bounds.v_init);
        kin.x_lo = Vector::Constant(1, 0.5 * p.m_e * bounds.v_min * bounds.v_min);
        kin.x_hi = Vector::Constant(1, 0.5 * p.m_e * bounds.v_max * bounds.v_max);
        kin.u_lo = Vector::Constant(1, -bounds.f_brake_max);
        kin.u_hi = Vector::Constant(1, bounds.f_trac_max);
        kin.name = "kinetic";
        h.kin_buffer = nb.add_buffer(std::move(kin));
    }

    // Elapsed-time buffer driven by the lethargy input.
    {
        Buffer time;
        time.A = Matrix::Constant(1, 1, 1.0);
        time.B = Matrix::Constant(1, 1, p.delta_s);
        time.x_init = Vector::Constant(1, 0.0);
        time.x_lo = Vector::Constant(1, 0.0);
        time.x_hi = Vector::Constant(1, T_max);
        time.u_lo = Vector::Constant(1, 1.0 / bounds.v_max);
        time.u_hi = Vector::Constant(1, 1.0 / bounds.v_min);
        time.name = "time";
        h.time_buffer = nb.add_buffer(std::move(time));
        nb.set_terminal_bounds(h.time_buffer, Vector::Constant(1, 0.0),
                               Vector::Constant(1, T_max));
    }

    // Electric machine: ideal force-to-energy converter carrying the cost.
    {
        Converter em;
        em.model = LinearModel{Vector::Constant(1, 1.0), 0.0};
        em.u_lo = Vector::Constant(1, bounds.allow_regen ? -bounds.f_trac_max : 0.0);
        em.u_hi = Vector::Constant(1, bounds.f_trac_max);
        em.cost_b = 1.0;
        em.name = "machine";
        h.em_converter = nb.add_converter(std::move(em));
    }

    // Velocity converter y_v = 1/2 m_e u_v^2.
    {
        Converter vel;
        vel.model = ScaledSquareModel{0.5 * p.m_e, 0.0};
        vel.u_lo = Vector::Constant(1, bounds.v_min);
        vel.u_hi = Vector::Constant(1, bounds.v_max);
        vel.name = "velocity";
        h.vel_converter = nb.add_converter(std::move(vel));
    }

    // Lethargy converter y_l (u_l + 0) = 1 on the time buffer's input.
    {
        Converter leth;
        leth.model = HyperbolicModel{0.0};
        leth.attach = h.time_buffer;
        leth.input_vars = {1};  // [x_t; u_l] -> the input
        leth.name = "lethargy";
        h.leth_converter = nb.add_converter(std::move(leth));
    }

    // Global input offsets: u_kin = 0, u_l = 1, u_em = 2, u_v = 3.
    const int u_kin = 0, u_l = 1, u_em = 2, u_v = 3;
    (void)u_l;

    {
        Node brake;
        brake.kind = NodeKind::Dissipative;
        brake.f_row = {{u_kin, 1.0}, {u_em, -1.0}};
        brake.name = "brake";
        h.brake_node = nb.add_node(std::move(brake));
    }
    {
        Node speed;
        speed.kind = NodeKind::Conservative;
        speed.f_row = {{u_v, -1.0}};
        speed.g_row = {{h.leth_converter, 1.0}};
        speed.name = "speed";
        h.speed_node = nb.add_node(std::move(speed));
    }
    {
        Node kin_link;
        kin_link.kind = NodeKind::Conservative;
        kin_link.e_row = {{0, -1.0}};
        kin_link.g_row = {{h.vel_converter, 1.0}};
        kin_link.name = "kinetic-link";
        h.kin_node = nb.add_node(std::move(kin_link));
    }

    if (handles) *handles = h;
    return nb.assemble(K);
}

void CvemParams::validate() const {
    for (const QuadCoeffs* q : {&genset, &battery, &machine}) {
        require(q->a2 >= 0.0, ErrorCode::InvalidParameter,
                "negative quadratic coefficient breaks convexity");
    }
    require(delta_t > 0, ErrorCode::InvalidParameter, "delta_t must be positive");
    require(batt_capacity > 0 && batt_init_frac >= 0 && batt_init_frac <= 1,
            ErrorCode::InvalidParameter, "battery sizing");
    require(batt_power_max > 0 && genset_power_max > 0, ErrorCode::InvalidParameter,
            "power limits");
    require(machine_power_min < machine_power_max, ErrorCode::InfeasibleBounds, "machine box");
    require(!demand.empty(), ErrorCode::InvalidParameter, "drive cycle is empty");
}

namespace {

ConverterModel quad_model(const QuadCoeffs& q) {
    return QuadraticModel{Matrix::Constant(1, 1, 2.0 * q.a2), Vector::Constant(1, q.a1), q.a0};
}

}  // namespace

NetworkProblem build_cvem(const CvemParams& c, CvemHandles* handles) {
    c.validate();
    const int K = static_cast<int>(c.demand.size());
    NetworkBuilder nb;
    CvemHandles h;

    {
        Buffer batt;
        batt.A = Matrix::Constant(1, 1, 1.0);
        batt.B = Matrix::Constant(1, 1, c.delta_t);
        batt.x_init = Vector::Constant(1, c.batt_init_frac * c.batt_capacity);
        batt.x_lo = Vector::Constant(1, 0.0);
        batt.x_hi = Vector::Constant(1, c.batt_capacity);
        batt.u_lo = Vector::Constant(1, -c.batt_power_max);
        batt.u_hi = Vector::Constant(1, c.batt_power_max);
        batt.name = "battery";
        h.battery_buffer = nb.add_buffer(std::move(batt));
    }
    {
        Converter cb;
        cb.model = quad_model(c.battery);
        cb.attach = h.battery_buffer;
        cb.input_vars = {1};  // charge rate
        cb.name = "battery-loss";
        h.battery_converter = nb.add_converter(std::move(cb));
    }
    {
        Converter cf;
        cf.model = quad_model(c.genset);
        cf.u_lo = Vector::Constant(1, c.fuel_positive ? 0.0 : -c.genset_power_max);
        cf.u_hi = Vector::Constant(1, c.genset_power_max);
        cf.cost_b = 1.0;
        cf.name = "genset";
        h.genset_converter = nb.add_converter(std::move(cf));
    }
    {
        Converter cm;
        cm.model = quad_model(c.machine);
        cm.u_lo = Vector::Constant(1, c.machine_power_min);
        cm.u_hi = Vector::Constant(1, c.machine_power_max);
        cm.name = "machine";
        h.machine_converter = nb.add_converter(std::move(cm));
    }

    const int u_s = 0, u_f = 1, u_em = 2;
    (void)u_s;
    {
        // Electrical bus: machine and battery draw what the genset delivers.
        Node bus;
        bus.kind = NodeKind::Conservative;
        bus.f_row = {{u_f, -1.0}};
        bus.g_row = {{h.battery_converter, 1.0}, {h.machine_converter, 1.0}};
        bus.name = "bus";
        h.bus_node = nb.add_node(std::move(bus));
    }
    {
        // Drive node: mechanical power meets demand, surplus goes to the brake.
        Node drive;
        drive.kind = NodeKind::Dissipative;
        drive.f_row = {{u_em, -1.0}};
        drive.load.reserve(c.demand.size());
        for (double v : c.demand) drive.load.push_back(-v);
        drive.name = "drive";
        h.drive_node = nb.add_node(std::move(drive));
    }

    if (handles) *handles = h;
    return nb.assemble(K);
}

}  // namespace powernet
