#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "powernet/pipeline.hpp"
#include "test_support.hpp"

using namespace powernet;
using Catch::Approx;

namespace {

std::string small_eco_json(double t_max, double v_min = 3.0) {
    std::ostringstream os;
    os << R"({
  "schema_version": 1,
  "type": "eco_driving",
  "name": "eco-small",
  "vehicle": {"unit": "SI", "m_kg": 13400, "m_e_kg": 13400, "c_g_kg_per_m": 5.093,
              "c_r": 0.007, "g_m_per_s2": 9.81, "delta_s_m": 5.0},
  "route": {"unit": "SI", "synth": {"length_m": 150,
            "hill": {"start_m": 30, "end_m": 60, "grade_rad": 0.02}}},
  "bounds": {"unit": "SI", "v_min_mps": )"
       << v_min << R"(, "v_max_mps": 25, "v_init_mps": 12,
             "f_trac_max_n": 15000, "f_brake_max_n": 60000},
  "T_max_s": )"
       << t_max << R"(,
  "solver": {"tol": 1e-8, "max_iter": 100},
  "regularization": {"sigma0": 0.01, "max_rounds": 3}
})";
    return os.str();
}

std::string slurp(const std::string& path) {
    std::ifstream is(path);
    REQUIRE(is);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() / ("powernet_test_" + tag);
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("scenario parsing enforces the schema") {
    SECTION("well-formed eco scenario") {
        const Scenario sc = parse_scenario(small_eco_json(20.0), ".");
        CHECK(sc.type == ScenarioType::EcoDriving);
        CHECK(sc.vehicle.m == 13400.0);
        CHECK(sc.t_max == 20.0);
        CHECK(sc.exactness.max_rounds == 3);
    }
    SECTION("missing unit marker is rejected") {
        std::string text = small_eco_json(20.0);
        const auto pos = text.find("\"unit\": \"SI\", \"m_kg\"");
        text.replace(pos, std::string("\"unit\": \"SI\",").size(), "");
        CHECK_THROWS_MATCHES(parse_scenario(text, "."), Error,
                             testing::error_code_is(ErrorCode::SchemaViolation));
    }
    SECTION("unknown type is rejected") {
        CHECK_THROWS_MATCHES(
            parse_scenario(R"({"schema_version": 1, "type": "warp_drive"})", "."), Error,
            testing::error_code_is(ErrorCode::SchemaViolation));
    }
    SECTION("wrong schema version is rejected") {
        CHECK_THROWS_MATCHES(parse_scenario(R"({"schema_version": 2, "type": "cvem"})", "."),
                             Error, testing::error_code_is(ErrorCode::SchemaViolation));
    }
}

TEST_CASE("custom networks parse into solvable problems") {
    const std::string text = R"({
  "schema_version": 1,
  "type": "custom",
  "name": "toy",
  "network": {
    "unit": "SI",
    "horizon": 2,
    "converters": [
      {"template": "scaled_square", "c": 1.0, "d": 0.0,
       "u_lo": [0.1], "u_hi": [2.0], "cost_b": 1.0, "name": "sq"}
    ],
    "nodes": [
      {"kind": "dissipative", "g_row": [[0, 1.0]], "load": [9.0], "name": "cap"}
    ]
  }
})";
    const Scenario sc = parse_scenario(text, ".");
    REQUIRE(sc.type == ScenarioType::Custom);
    const NetworkProblem p = build_problem(sc);
    CHECK(p.horizon() == 2);
    CHECK(p.num_converters() == 1);
}

TEST_CASE("route csv loader round-trips and validates") {
    TempDir dir("route");
    const Route r = synth_route(120.0, {20.0, 60.0, 0.05}, 5.0);
    const std::string path = (dir.path / "route.csv").string();
    write_route_csv(r, path);
    const Route back = load_route_csv(path, 5.0);
    REQUIRE(back.samples() == r.samples());
    for (int k = 0; k < r.samples(); ++k) {
        CHECK(back.grade[k] == Approx(r.grade[k]).margin(1e-15));
    }

    SECTION("wrong header is rejected") {
        const std::string bad = (dir.path / "bad.csv").string();
        std::ofstream os(bad);
        os << "s,grade\n0,0\n";
        os.close();
        CHECK_THROWS_MATCHES(load_route_csv(bad, 5.0), Error,
                             testing::error_code_is(ErrorCode::SchemaViolation));
    }
}

TEST_CASE("run pipeline: tight deadline gives an exact run with artifacts") {
    TempDir dir("run_exact");
    const Scenario sc = parse_scenario(small_eco_json(12.5), ".");
    RunOptions opts;
    opts.out_dir = dir.path.string();
    opts.quiet = true;
    const RunArtifacts art = run_scenario(sc, opts);
    CHECK(art.exit_code == kExitExact);
    CHECK(std::filesystem::exists(dir.path / "summary.json"));
    CHECK(std::filesystem::exists(dir.path / "trajectory.csv"));
    CHECK(std::filesystem::exists(dir.path / "residuals.csv"));
    CHECK(std::filesystem::exists(dir.path / "requirements.json"));

    const std::string traj = slurp((dir.path / "trajectory.csv").string());
    CHECK(traj.rfind("k,s,v,F_p,residual_kin,residual_leth", 0) == 0);
}

TEST_CASE("run pipeline outputs are byte-identical across runs") {
    TempDir a("repro_a"), b("repro_b");
    const Scenario sc = parse_scenario(small_eco_json(12.5), ".");
    RunOptions oa, ob;
    oa.out_dir = a.path.string();
    ob.out_dir = b.path.string();
    oa.quiet = ob.quiet = true;
    run_scenario(sc, oa);
    run_scenario(sc, ob);
    CHECK(slurp((a.path / "summary.json").string()) == slurp((b.path / "summary.json").string()));
    CHECK(slurp((a.path / "trajectory.csv").string()) ==
          slurp((b.path / "trajectory.csv").string()));
    CHECK(slurp((a.path / "residuals.csv").string()) ==
          slurp((b.path / "residuals.csv").string()));
}

TEST_CASE("check pipeline distinguishes pass from a requirement-v failure") {
    TempDir dir("check");
    SECTION("healthy bounds pass") {
        const Scenario sc = parse_scenario(small_eco_json(20.0), ".");
        std::string summary;
        CHECK(check_scenario(sc, dir.path.string(), &summary) == kExitExact);
        CHECK(summary.find("sampled-pass") != std::string::npos);
    }
    SECTION("velocity floor at zero fails with a witness") {
        const Scenario sc = parse_scenario(small_eco_json(20.0, 0.0), ".");
        // v_min = 0 is rejected by the builder before the checker even runs
        CHECK_THROWS_AS(check_scenario(sc, dir.path.string(), nullptr), Error);
    }
}

TEST_CASE("requirement failures exit with the dedicated code") {
    // Custom network violating the rank condition: the square converter's
    // input box includes u = 0 where F + G dy/du collapses.
    const std::string text = R"({
  "schema_version": 1,
  "type": "custom",
  "network": {
    "unit": "SI",
    "horizon": 2,
    "converters": [
      {"template": "scaled_square", "c": 0.5, "d": 0.0,
       "u_lo": [0.0], "u_hi": [2.0], "cost_b": 1.0}
    ],
    "nodes": [
      {"kind": "conservative", "g_row": [[0, 1.0]], "load": [1.0]}
    ]
  }
})";
    TempDir dir("reqfail");
    const Scenario sc = parse_scenario(text, ".");
    std::string summary;
    CHECK(check_scenario(sc, dir.path.string(), &summary) == kExitRequirementFailure);
    RunOptions opts;
    opts.out_dir = dir.path.string();
    opts.quiet = true;
    CHECK(run_scenario(sc, opts).exit_code == kExitRequirementFailure);
}

TEST_CASE("cvem scenario runs through the pipeline") {
    const std::string text = R"({
  "schema_version": 1,
  "type": "cvem",
  "name": "cvem-small",
  "cvem": {"unit": "SI", "delta_t_s": 1.0,
           "demand_w": [10000, 20000, 15000, -5000, 12000]},
  "solver": {"tol": 1e-8, "max_iter": 100}
})";
    TempDir dir("cvem");
    const Scenario sc = parse_scenario(text, ".");
    RunOptions opts;
    opts.out_dir = dir.path.string();
    opts.quiet = true;
    const RunArtifacts art = run_scenario(sc, opts);
    CHECK(art.exit_code == kExitExact);
    const std::string traj = slurp((dir.path / "trajectory.csv").string());
    CHECK(traj.rfind("k,t_s,v_p_w", 0) == 0);
}

TEST_CASE("oracle pipeline compares dp and the relaxation") {
    const std::string text = R"({
  "schema_version": 1,
  "type": "cvem",
  "cvem": {"unit": "SI", "delta_t_s": 1.0,
           "demand_w": [10000, 18000, 8000, 22000, 5000, 15000]},
  "solver": {"tol": 1e-8, "max_iter": 100}
})";
    TempDir dir("oracle");
    const Scenario sc = parse_scenario(text, ".");
    OracleOptions opts;
    opts.out_dir = dir.path.string();
    opts.state_points = 201;
    opts.input_points = 301;
    std::string summary;
    CHECK(oracle_scenario(sc, opts, &summary) == 0);
    CHECK(summary.find("relative gap") != std::string::npos);
    CHECK(std::filesystem::exists(dir.path / "oracle.json"));
}
