#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>
#include <vector>

#include "powernet/pipeline.hpp"
#include "powernet/solver.hpp"

using namespace powernet;

namespace {

int cmd_run(const std::vector<std::string>& files, const RunOptions& opts, bool batch) {
    if (files.size() == 1 || !batch) {
        int worst = 0;
        for (const std::string& f : files) {
            RunOptions local = opts;
            if (files.size() > 1) {
                local.out_dir = opts.out_dir + "/" +
                                std::filesystem::path(f).stem().string();
            }
            const RunArtifacts art = run_scenario(load_scenario(f), local);
            if (!opts.quiet) {
                std::printf("%s: exit %d\n%s\n", f.c_str(), art.exit_code,
                            art.summary_json.c_str());
            }
            worst = std::max(worst, art.exit_code);
        }
        return worst;
    }
    // Independent scenarios run concurrently; each gets its own directory.
    std::vector<std::thread> workers;
    std::vector<int> codes(files.size(), kExitUsage);
    for (std::size_t i = 0; i < files.size(); ++i) {
        workers.emplace_back([&, i] {
            try {
                RunOptions local = opts;
                local.out_dir =
                    opts.out_dir + "/" + std::filesystem::path(files[i]).stem().string();
                local.quiet = true;
                codes[i] = run_scenario(load_scenario(files[i]), local).exit_code;
            } catch (const std::exception& e) {
                std::fprintf(stderr, "%s: %s\n", files[i].c_str(), e.what());
                codes[i] = kExitUsage;
            }
        });
    }
    int worst = 0;
    for (std::size_t i = 0; i < workers.size(); ++i) {
        workers[i].join();
        std::printf("%s: exit %d\n", files[i].c_str(), codes[i]);
        worst = std::max(worst, codes[i]);
    }
    return worst;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"power-network energy management: convex relaxation toolkit"};
    app.require_subcommand(1);

    // run
    std::vector<std::string> scenario_files;
    RunOptions run_opts;
    bool batch = false;
    auto* run = app.add_subcommand("run", "check, relax, solve, and audit a scenario");
    run->add_option("scenario", scenario_files, "scenario JSON file(s)")->required();
    run->add_option("--out", run_opts.out_dir, "artifact directory");
    run->add_option("--case", run_opts.case_id, "study case: 1, 2, or 3")
        ->check(CLI::Range(0, 3));
    run->add_option("--sigma", run_opts.sigma, "case-3 regularization weight");
    run->add_flag("--timings", run_opts.timings, "include wall times in summary.json");
    run->add_flag("--force", run_opts.force, "solve even if requirement checks fail");
    run->add_flag("--quiet", run_opts.quiet, "suppress the summary printout");
    run->add_flag("--batch", batch, "run multiple scenarios concurrently");

    // check
    std::string check_file, check_out = "out";
    auto* check = app.add_subcommand("check", "verify the exactness requirements");
    check->add_option("scenario", check_file, "scenario JSON file")->required();
    check->add_option("--out", check_out, "artifact directory");

    // oracle
    std::string oracle_file;
    OracleOptions oracle_opts;
    auto* oracle = app.add_subcommand("oracle", "compare the relaxation against dynamic programming");
    oracle->add_option("scenario", oracle_file, "scenario JSON file")->required();
    oracle->add_option("--out", oracle_opts.out_dir, "artifact directory");
    oracle->add_option("--horizon", oracle_opts.horizon, "truncate to a desk-scale horizon");
    oracle->add_option("--state-points", oracle_opts.state_points, "grid points per state");
    oracle->add_option("--input-points", oracle_opts.input_points, "grid points per free input");

    // dump
    std::string dump_file, dump_out = "program.socp";
    auto* dump = app.add_subcommand("dump", "write the relaxed program in sparse text form");
    dump->add_option("scenario", dump_file, "scenario JSON file")->required();
    dump->add_option("--out", dump_out, "dump path");

    // solve
    std::string solve_file, solve_out = "solution.json";
    double solve_tol = 1e-8;
    int solve_iters = 100;
    auto* solve_cmd = app.add_subcommand("solve", "solve a dumped program");
    solve_cmd->add_option("program", solve_file, "sparse text dump")->required();
    solve_cmd->add_option("--out", solve_out, "solution JSON path");
    solve_cmd->add_option("--tol", solve_tol, "solver tolerance");
    solve_cmd->add_option("--max-iter", solve_iters, "iteration cap");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            return cmd_run(scenario_files, run_opts, batch);
        }
        if (check->parsed()) {
            std::string summary;
            const int code = check_scenario(load_scenario(check_file), check_out, &summary);
            std::printf("%s\n", summary.c_str());
            return code;
        }
        if (oracle->parsed()) {
            std::string summary;
            const int code = oracle_scenario(load_scenario(oracle_file), oracle_opts, &summary);
            std::printf("%s", summary.c_str());
            return code;
        }
        if (dump->parsed()) {
            const Scenario sc = load_scenario(dump_file);
            dump_program_file(build_relaxation(build_problem(sc)), dump_out);
            std::printf("wrote %s\n", dump_out.c_str());
            return 0;
        }
        if (solve_cmd->parsed()) {
            const ConicProgram cp = load_program_file(solve_file);
            SolverSettings settings;
            settings.tol = solve_tol;
            settings.max_iter = solve_iters;
            const Solution sol = powernet::solve(cp, settings);
            nlohmann::json j;
            j["status"] = to_string(sol.status);
            j["objective"] = sol.metrics.primal_obj;
            j["dual_objective"] = sol.metrics.dual_obj;
            j["rel_gap"] = sol.metrics.rel_gap;
            j["primal_res"] = sol.metrics.primal_res;
            j["dual_res"] = sol.metrics.dual_res;
            j["iterations"] = sol.metrics.iterations;
            j["w"] = std::vector<double>(sol.w.data(), sol.w.data() + sol.w.size());
            std::ofstream os(solve_out);
            os << j.dump(2) << "\n";
            std::printf("%s: %s, objective %.12g\n", solve_file.c_str(), to_string(sol.status),
                        sol.metrics.primal_obj);
            return sol.status == SolveStatus::Optimal ? 0 : kExitSolverFailure;
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        if (e.code() == ErrorCode::RequirementUnmet) return kExitRequirementFailure;
        if (e.code() == ErrorCode::NotSolved) return kExitSolverFailure;
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    }
    return kExitUsage;
}
