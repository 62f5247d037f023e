#include "powernet/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "powernet/checker.hpp"

namespace powernet {

using nlohmann::json;

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorCode::SchemaViolation, what);
}

void require_si_unit(const json& block, const std::string& name) {
    require(block.contains("unit") && block["unit"] == "SI",
            "block '" + name + "' must declare \"unit\": \"SI\"");
}

Vector to_vector(const json& j) {
    Vector v(j.size());
    int i = 0;
    for (const auto& e : j) v[i++] = e.get<double>();
    return v;
}

Matrix to_matrix(const json& j) {
    const int rows = static_cast<int>(j.size());
    if (rows == 0) return Matrix(0, 0);
    const int cols = static_cast<int>(j[0].size());
    Matrix m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        require(static_cast<int>(j[r].size()) == cols, "ragged matrix literal");
        for (int c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
    }
    return m;
}

ConverterModel parse_template(const json& j) {
    const std::string t = j.at("template").get<std::string>();
    if (t == "quadratic") {
        return QuadraticModel{to_matrix(j.at("Q")), to_vector(j.at("a")),
                              j.value("beta", 0.0)};
    }
    if (t == "scaled_square") {
        return ScaledSquareModel{j.at("c").get<double>(), j.value("d", 0.0)};
    }
    if (t == "hyperbolic") {
        return HyperbolicModel{j.value("eps", 0.0)};
    }
    if (t == "linear") {
        return LinearModel{to_vector(j.at("a")), j.value("beta", 0.0)};
    }
    throw Error(ErrorCode::SchemaViolation, "unknown converter template '" + t + "'");
}

std::vector<std::pair<int, double>> parse_row(const json& j) {
    std::vector<std::pair<int, double>> row;
    for (const auto& e : j) {
        require(e.size() == 2, "row entries are [index, value] pairs");
        row.emplace_back(e[0].get<int>(), e[1].get<double>());
    }
    return row;
}

NetworkProblem parse_custom_network(const json& net, int* horizon_out) {
    require_si_unit(net, "network");
    const int K = net.at("horizon").get<int>();
    NetworkBuilder nb;
    std::vector<int> buffer_handles;
    for (const auto& jb : net.value("buffers", json::array())) {
        Buffer b;
        b.A = to_matrix(jb.value("A", json::array()));
        b.B = to_matrix(jb.value("B", json::array()));
        if (b.A.size() == 0 && b.B.size() == 0) {
            const int nu = static_cast<int>(jb.at("u_lo").size());
            b.A = Matrix(0, 0);
            b.B = Matrix(0, nu);
        }
        if (jb.contains("f")) {
            for (const auto& fk : jb["f"]) b.f.push_back(to_vector(fk));
        }
        b.x_init = to_vector(jb.value("x_init", json::array()));
        if (jb.contains("x_lo")) b.x_lo = to_vector(jb["x_lo"]);
        if (jb.contains("x_hi")) b.x_hi = to_vector(jb["x_hi"]);
        if (jb.contains("u_lo")) b.u_lo = to_vector(jb["u_lo"]);
        if (jb.contains("u_hi")) b.u_hi = to_vector(jb["u_hi"]);
        if (jb.contains("cost_a")) b.cost_a = to_vector(jb["cost_a"]);
        b.name = jb.value("name", "");
        const int h = nb.add_buffer(std::move(b));
        buffer_handles.push_back(h);
        if (jb.contains("x_terminal_lo") || jb.contains("x_terminal_hi")) {
            nb.set_terminal_bounds(h, to_vector(jb.at("x_terminal_lo")),
                                   to_vector(jb.at("x_terminal_hi")));
        }
    }
    for (const auto& jc : net.value("converters", json::array())) {
        Converter c;
        c.model = parse_template(jc);
        if (jc.contains("attach")) {
            c.attach = buffer_handles.at(jc["attach"].get<int>());
            for (const auto& e : jc.at("input_vars")) c.input_vars.push_back(e.get<int>());
        } else {
            c.u_lo = to_vector(jc.at("u_lo"));
            c.u_hi = to_vector(jc.at("u_hi"));
            if (jc.contains("cost_a")) c.cost_a = to_vector(jc["cost_a"]);
        }
        c.cost_b = jc.value("cost_b", 0.0);
        c.name = jc.value("name", "");
        nb.add_converter(std::move(c));
    }
    for (const auto& jn : net.value("nodes", json::array())) {
        Node n;
        const std::string kind = jn.value("kind", "conservative");
        require(kind == "conservative" || kind == "dissipative", "node kind");
        n.kind = kind == "dissipative" ? NodeKind::Dissipative : NodeKind::Conservative;
        if (jn.contains("e_row")) n.e_row = parse_row(jn["e_row"]);
        if (jn.contains("f_row")) n.f_row = parse_row(jn["f_row"]);
        if (jn.contains("g_row")) n.g_row = parse_row(jn["g_row"]);
        if (jn.contains("load")) {
            for (const auto& e : jn["load"]) n.load.push_back(e.get<double>());
        }
        n.name = jn.value("name", "");
        nb.add_node(std::move(n));
    }
    *horizon_out = K;
    return nb.assemble(K);
}

}  // namespace

std::uint64_t env_seed(std::uint64_t fallback) {
    const char* env = std::getenv("POWERNET_SEED");
    if (!env || !*env) return fallback;
    return std::strtoull(env, nullptr, 10);
}

Scenario parse_scenario(const std::string& text, const std::string& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::SchemaViolation, std::string("scenario JSON: ") + e.what());
    }
    require(j.value("schema_version", 0) == 1, "schema_version must be 1");

    Scenario sc;
    sc.name = j.value("name", "scenario");
    const std::string type = j.at("type").get<std::string>();
    if (type == "eco_driving") {
        sc.type = ScenarioType::EcoDriving;
    } else if (type == "cvem") {
        sc.type = ScenarioType::Cvem;
    } else if (type == "custom") {
        sc.type = ScenarioType::Custom;
    } else {
        throw Error(ErrorCode::SchemaViolation, "unknown scenario type '" + type + "'");
    }

    if (sc.type == ScenarioType::EcoDriving) {
        const json& v = j.at("vehicle");
        require_si_unit(v, "vehicle");
        sc.vehicle.m = v.value("m_kg", sc.vehicle.m);
        sc.vehicle.m_e = v.value("m_e_kg", sc.vehicle.m);
        sc.vehicle.c_g = v.value("c_g_kg_per_m", sc.vehicle.c_g);
        sc.vehicle.c_r = v.value("c_r", sc.vehicle.c_r);
        sc.vehicle.g = v.value("g_m_per_s2", sc.vehicle.g);
        sc.vehicle.delta_s = v.value("delta_s_m", sc.vehicle.delta_s);

        const json& r = j.at("route");
        require_si_unit(r, "route");
        if (r.contains("file")) {
            sc.route_file = (std::filesystem::path(base_dir) / r["file"].get<std::string>()).string();
        } else {
            const json& s = r.at("synth");
            sc.route_length = s.at("length_m").get<double>();
            HillSpec hill;
            if (s.contains("hill")) {
                hill.start = s["hill"].at("start_m").get<double>();
                hill.end = s["hill"].at("end_m").get<double>();
                hill.grade = s["hill"].at("grade_rad").get<double>();
            }
            sc.route_hill = hill;
        }
        const json& b = j.at("bounds");
        require_si_unit(b, "bounds");
        sc.bounds.v_min = b.value("v_min_mps", sc.bounds.v_min);
        sc.bounds.v_max = b.value("v_max_mps", sc.bounds.v_max);
        sc.bounds.v_init = b.value("v_init_mps", sc.bounds.v_init);
        sc.bounds.f_trac_max = b.value("f_trac_max_n", sc.bounds.f_trac_max);
        sc.bounds.f_brake_max = b.value("f_brake_max_n", sc.bounds.f_brake_max);
        sc.bounds.allow_regen = b.value("allow_regen", sc.bounds.allow_regen);
        sc.t_max = j.at("T_max_s").get<double>();
    } else if (sc.type == ScenarioType::Cvem) {
        const json& c = j.at("cvem");
        require_si_unit(c, "cvem");
        auto coeffs = [&](const char* key, QuadCoeffs def) {
            if (!c.contains(key)) return def;
            const json& q = c[key];
            return QuadCoeffs{q.value("a2", def.a2), q.value("a1", def.a1),
                              q.value("a0", def.a0)};
        };
        sc.cvem.genset = coeffs("genset", sc.cvem.genset);
        sc.cvem.battery = coeffs("battery", sc.cvem.battery);
        sc.cvem.machine = coeffs("machine", sc.cvem.machine);
        sc.cvem.delta_t = c.value("delta_t_s", sc.cvem.delta_t);
        sc.cvem.batt_capacity = c.value("batt_capacity_j", sc.cvem.batt_capacity);
        sc.cvem.batt_init_frac = c.value("batt_init_frac", sc.cvem.batt_init_frac);
        sc.cvem.batt_power_max = c.value("batt_power_max_w", sc.cvem.batt_power_max);
        sc.cvem.genset_power_max = c.value("genset_power_max_w", sc.cvem.genset_power_max);
        sc.cvem.machine_power_min = c.value("machine_power_min_w", sc.cvem.machine_power_min);
        sc.cvem.machine_power_max = c.value("machine_power_max_w", sc.cvem.machine_power_max);
        sc.cvem.fuel_positive = c.value("fuel_positive", true);
        require(c.contains("demand_w"), "cvem.demand_w missing");
        for (const auto& e : c["demand_w"]) sc.cvem.demand.push_back(e.get<double>());
        if (c.contains("demand_repeat")) {
            const int reps = c["demand_repeat"].get<int>();
            const std::vector<double> base = sc.cvem.demand;
            for (int i = 1; i < reps; ++i) {
                sc.cvem.demand.insert(sc.cvem.demand.end(), base.begin(), base.end());
            }
        }
    } else {
        sc.custom = parse_custom_network(j.at("network"), &sc.custom_horizon);
    }

    if (j.contains("solver")) {
        sc.solver.tol = j["solver"].value("tol", sc.solver.tol);
        sc.solver.max_iter = j["solver"].value("max_iter", sc.solver.max_iter);
    }
    if (j.contains("regularization")) {
        sc.exactness.sigma0 = j["regularization"].value("sigma0", sc.exactness.sigma0);
        sc.exactness.max_rounds = j["regularization"].value("max_rounds", sc.exactness.max_rounds);
        sc.exactness.tight_tol = j["regularization"].value("tight_tol", sc.exactness.tight_tol);
        sc.exactness.cost_drift_tol =
            j["regularization"].value("cost_drift_tol", sc.exactness.cost_drift_tol);
    }
    sc.seed = env_seed(j.value("seed", 0));
    return sc;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error(ErrorCode::IoError, "cannot open scenario " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_scenario(ss.str(), std::filesystem::path(path).parent_path().string());
}

Route load_route_csv(const std::string& path, double delta_s) {
    std::ifstream is(path);
    if (!is) throw Error(ErrorCode::IoError, "cannot open route " + path);
    std::string line;
    require(static_cast<bool>(std::getline(is, line)), "route CSV is empty");
    // tolerate trailing carriage returns
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    require(line == "s_m,grade_rad", "route CSV header must be 's_m,grade_rad'");
    Route r;
    r.delta_s = delta_s;
    double last_s = -delta_s;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string s_tok, g_tok;
        std::getline(ls, s_tok, ',');
        std::getline(ls, g_tok, ',');
        const double s = std::strtod(s_tok.c_str(), nullptr);
        const double grade = std::strtod(g_tok.c_str(), nullptr);
        require(std::abs(s - (last_s + delta_s)) < 1e-6 * (1.0 + std::abs(s)),
                "route samples must advance by delta_s");
        require(std::abs(grade) < M_PI / 2, "grade must satisfy |alpha| < pi/2");
        last_s = s;
        r.grade.push_back(grade);
    }
    require(!r.grade.empty(), "route CSV has no samples");
    r.length = static_cast<double>(r.grade.size()) * delta_s;
    return r;
}

void write_route_csv(const Route& r, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw Error(ErrorCode::IoError, "cannot open " + path);
    os << std::setprecision(17);
    os << "s_m,grade_rad\n";
    for (std::size_t k = 0; k < r.grade.size(); ++k) {
        os << static_cast<double>(k) * r.delta_s << "," << r.grade[k] << "\n";
    }
}

NetworkProblem build_problem(const Scenario& sc, EcoHandles* eco, CvemHandles* cvem) {
    switch (sc.type) {
        case ScenarioType::EcoDriving: {
            Route route;
            if (sc.route_file.has_value()) {
                route = load_route_csv(*sc.route_file, sc.vehicle.delta_s);
            } else if (sc.route_hill.has_value() &&
                       sc.route_hill->end > sc.route_hill->start) {
                route = synth_route(sc.route_length, *sc.route_hill, sc.vehicle.delta_s);
            } else {
                route = flat_route(sc.route_length, sc.vehicle.delta_s);
            }
            return build_eco_driving(sc.vehicle, route, sc.t_max, sc.bounds, eco);
        }
        case ScenarioType::Cvem:
            return build_cvem(sc.cvem, cvem);
        case ScenarioType::Custom:
            return *sc.custom;
    }
    throw Error(ErrorCode::SchemaViolation, "unreachable scenario type");
}

namespace {

void write_file(const std::string& path, const std::string& content) {
    std::ofstream os(path);
    if (!os) throw Error(ErrorCode::IoError, "cannot open " + path);
    os << content;
}

void write_eco_trajectory(const std::string& path, const Scenario& sc, const NetworkProblem& p,
                          const ConicProgram& cp, const Solution& sol, const EcoHandles& h,
                          const ExactnessReport& rep) {
    std::ofstream os(path);
    if (!os) throw Error(ErrorCode::IoError, "cannot open " + path);
    os << std::setprecision(17);
    os << "k,s,v,F_p,residual_kin,residual_leth\n";
    const VarLayout& L = cp.layout;
    std::vector<double> res_kin(L.K, 0.0), res_leth(L.K, 0.0);
    for (const ConverterAudit& e : rep.entries) {
        if (e.converter == h.vel_converter) res_kin[e.step] = e.h_rel;
        if (e.converter == h.leth_converter) res_leth[e.step] = e.h_rel;
    }
    for (int k = 0; k < L.K; ++k) {
        const double x_kin = sol.w[L.x(k, 0)];
        const double v = std::sqrt(std::max(0.0, 2.0 * x_kin / sc.vehicle.m_e));
        const double f_p = sol.w[L.u(k, 0)];
        os << k << "," << static_cast<double>(k) * sc.vehicle.delta_s << "," << v << "," << f_p
           << "," << res_kin[k] << "," << res_leth[k] << "\n";
    }
}

void write_cvem_trajectory(const std::string& path, const Scenario& sc, const ConicProgram& cp,
                           const Solution& sol) {
    std::ofstream os(path);
    if (!os) throw Error(ErrorCode::IoError, "cannot open " + path);
    os << std::setprecision(17);
    os << "k,t_s,v_p_w,batt_w,genset_w,machine_w,soc_j\n";
    const VarLayout& L = cp.layout;
    for (int k = 0; k < L.K; ++k) {
        os << k << "," << static_cast<double>(k) * sc.cvem.delta_t << "," << sc.cvem.demand[k]
           << "," << sol.w[L.u(k, 0)] << "," << sol.w[L.u(k, 1)] << "," << sol.w[L.u(k, 2)]
           << "," << sol.w[L.x(k, 0)] << "\n";
    }
}

}  // namespace

RunArtifacts run_scenario(const Scenario& sc, const RunOptions& opts) {
    RunArtifacts art;
    std::filesystem::create_directories(opts.out_dir);
    const auto t0 = std::chrono::steady_clock::now();

    Scenario scenario = sc;
    if (opts.case_id != 0) {
        require(sc.type == ScenarioType::EcoDriving, "--case applies to eco_driving scenarios");
        if (opts.case_id == 1) scenario.t_max = 700.0;
        if (opts.case_id == 2 || opts.case_id == 3) scenario.t_max = 1e5;
    }

    EcoHandles eco;
    CvemHandles cvem;
    const NetworkProblem problem = build_problem(scenario, &eco, &cvem);

    SamplingSpec sampling;
    sampling.seed = scenario.seed;
    const RequirementReport req = check_requirements(problem, sampling);
    write_file(opts.out_dir + "/requirements.json", req.to_json());
    if (!req.all_passed() && !opts.force) {
        art.exit_code = kExitRequirementFailure;
        art.summary_json = req.to_json();
        return art;
    }

    ConicProgram cp = build_relaxation(problem, {.force = true});
    Solution sol;
    ExactnessReport rep;
    double base_cost = 0.0;
    int rounds = 0;

    if (opts.case_id == 0) {
        ExactSolveResult res = solve_exact(problem, cp, scenario.solver, scenario.exactness);
        if (res.solution.status != SolveStatus::Optimal) {
            art.exit_code = kExitSolverFailure;
            art.summary_json = std::string("{\"status\": \"") +
                               to_string(res.solution.status) + "\"}";
            return art;
        }
        sol = std::move(res.solution);
        rep = std::move(res.report);
        base_cost = res.base_cost;
        rounds = res.rounds;
        cp = std::move(res.program);
    } else {
        const ConicProgram base_cp = cp;
        if (opts.case_id == 3) {
            std::vector<int> leth_outputs;
            for (int k = 0; k < cp.layout.K; ++k) {
                leth_outputs.push_back(cp.layout.y(k, eco.leth_converter));
            }
            cp = add_regularization(cp, leth_outputs, opts.sigma);
        }
        sol = solve(cp, scenario.solver);
        if (sol.status != SolveStatus::Optimal) {
            art.exit_code = kExitSolverFailure;
            art.summary_json = std::string("{\"status\": \"") + to_string(sol.status) + "\"}";
            return art;
        }
        rep = audit(sol, cp, problem, scenario.exactness);
        base_cost = base_cp.cost.dot(sol.w);
    }

    // Artifacts.
    {
        std::ofstream os(opts.out_dir + "/residuals.csv");
        rep.write_csv(os, problem);
    }
    if (scenario.type == ScenarioType::EcoDriving) {
        write_eco_trajectory(opts.out_dir + "/trajectory.csv", scenario, problem, cp, sol, eco,
                             rep);
    } else if (scenario.type == ScenarioType::Cvem) {
        write_cvem_trajectory(opts.out_dir + "/trajectory.csv", scenario, cp, sol);
    }

    json summary;
    summary["scenario"] = scenario.name;
    summary["case"] = opts.case_id;
    summary["status"] = to_string(sol.status);
    summary["cost"] = sol.metrics.primal_obj;
    summary["base_cost"] = base_cost;
    summary["rel_gap"] = sol.metrics.rel_gap;
    summary["primal_res"] = sol.metrics.primal_res;
    summary["dual_res"] = sol.metrics.dual_res;
    summary["iterations"] = sol.metrics.iterations;
    summary["exact"] = rep.exact;
    summary["rounds"] = rounds;
    summary["tight"] = rep.n_tight;
    summary["slack_zero_dual"] = rep.n_slack;
    summary["anomalous"] = rep.n_anomalous;
    summary["max_rel_residual"] = rep.max_rel_residual;
    json per_conv;
    for (int m = 0; m < problem.num_converters(); ++m) {
        const std::string name = problem.converters()[m].name.empty()
                                     ? "converter_" + std::to_string(m)
                                     : problem.converters()[m].name;
        per_conv[name] = rep.max_residual_of(m);
    }
    summary["max_residual_per_converter"] = per_conv;
    if (opts.timings) {
        summary["wall_time_s"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        summary["solver_time_s"] = sol.metrics.wall_time_s;
    }
    art.summary_json = summary.dump(2);
    write_file(opts.out_dir + "/summary.json", art.summary_json);

    art.cost = sol.metrics.primal_obj;
    art.base_cost = base_cost;
    art.max_rel_residual = rep.max_rel_residual;
    art.report = std::move(rep);
    art.exit_code = art.report.exact ? kExitExact : kExitInexact;
    return art;
}

int check_scenario(const Scenario& sc, const std::string& out_dir, std::string* summary) {
    std::filesystem::create_directories(out_dir);
    const NetworkProblem problem = build_problem(sc);
    SamplingSpec sampling;
    sampling.seed = sc.seed;
    const RequirementReport req = check_requirements(problem, sampling);
    write_file(out_dir + "/report.json", req.to_json());
    if (summary) *summary = req.summary();
    return req.all_passed() ? kExitExact : kExitRequirementFailure;
}

int oracle_scenario(const Scenario& sc, const OracleOptions& opts, std::string* summary) {
    std::filesystem::create_directories(opts.out_dir);
    Scenario scenario = sc;
    if (opts.horizon > 0) {
        if (scenario.type == ScenarioType::EcoDriving) {
            scenario.route_length =
                std::min(scenario.route_length, opts.horizon * scenario.vehicle.delta_s);
        } else if (scenario.type == ScenarioType::Cvem) {
            if (static_cast<int>(scenario.cvem.demand.size()) > opts.horizon) {
                scenario.cvem.demand.resize(opts.horizon);
            }
        }
    }
    const NetworkProblem problem = build_problem(scenario);

    const Solution sol = solve(build_relaxation(problem), scenario.solver);
    if (sol.status != SolveStatus::Optimal) return kExitSolverFailure;
    const double p_cr = sol.metrics.primal_obj;

    GridSpec grid;
    grid.state_counts = {opts.state_points};
    grid.input_counts = {opts.input_points};
    const DpResult dp = dp_solve(problem, grid);
    const double rel_gap = std::abs(p_cr - dp.value) / std::max(1e-12, std::abs(dp.value));

    json j;
    j["p_cr"] = p_cr;
    j["dp_value"] = dp.value;
    j["rel_gap"] = rel_gap;
    j["state_points"] = opts.state_points;
    j["input_points"] = opts.input_points;
    j["horizon"] = problem.horizon();
    write_file(opts.out_dir + "/oracle.json", j.dump(2));

    std::ostringstream os;
    os << "relaxation p_CR = " << p_cr << "\nDP value       = " << dp.value
       << "\nrelative gap   = " << rel_gap << "\n";
    if (summary) *summary = os.str();
    return kExitExact;
}

}  // namespace powernet
