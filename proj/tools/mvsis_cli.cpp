#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/cfg/helpers.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "mvsis/report.hpp"

namespace {

// Verbosity comes from MVSIS_LOG, using spdlog's level syntax
// ("debug", "info", "warn", ...). Logs go to stderr.
void setup_logging()
{
    auto logger = spdlog::stderr_color_mt("mvsis");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");
    spdlog::set_level(spdlog::level::warn);
    if (const char* env = std::getenv("MVSIS_LOG"))
        spdlog::cfg::helpers::load_levels(env);
}

enum Exit { ok = 0, validation = 1, runtime = 2 };

int cmd_run(const std::string& path, const std::string& out_dir, std::optional<std::uint64_t> seed)
{
    const auto scenario = mvsis::load_scenario(path);
    spdlog::info("scenario '{}': {} agents, {} viruses", scenario.name, scenario.agents, scenario.viruses.size());
    const auto res = mvsis::run_scenario(scenario, seed);
    for (const auto& run : res.runs) {
        const auto& clamp = run.trajectory.clamp;
        spdlog::info("run '{}': {} samples, {} repairs", run.label, run.trajectory.states.size(), clamp.repairs);
        if (clamp.warnings > 0)
            spdlog::warn("run '{}': {} steps needed simplex repair beyond {} (first at t={}); consider a smaller dt",
                         run.label, clamp.warnings, scenario.integrator.clamp_tol, *clamp.first_warning_t);
    }
    const std::filesystem::path dir = out_dir.empty() ? std::filesystem::path("out") / scenario.name : std::filesystem::path(out_dir);
    for (const auto& p : mvsis::write_outputs(res, dir))
        spdlog::info("wrote {}", p.string());
    std::cout << res.summary.dump(2) << '\n';
    return ok;
}

int cmd_analyze(const std::string& path, std::optional<std::uint64_t> seed)
{
    const auto scenario = mvsis::load_scenario(path);
    std::cout << mvsis::analyze_scenario(scenario, seed).dump(2) << '\n';
    return ok;
}

int cmd_control(const std::string& path, const std::string& solver, std::optional<std::uint64_t> seed)
{
    const auto scenario = mvsis::load_scenario(path);
    std::cout << mvsis::control_scenario(scenario, mvsis::parse_control_solver(solver), seed).dump(2) << '\n';
    return ok;
}

}  // namespace

int main(int argc, char** argv)
{
    setup_logging();

    CLI::App app{"Competing SIS viruses on static and time-varying graphs"};
    app.require_subcommand(1);

    std::string scenario_path, out_dir, solver;
    std::optional<std::uint64_t> seed;

    auto* run = app.add_subcommand("run", "simulate a scenario and write CSV and summary outputs");
    run->add_option("scenario", scenario_path, "scenario JSON file")->required();
    run->add_option("--out", out_dir, "output directory (default out/<name>)");
    run->add_option("--seed", seed, "override the scenario's master seed");

    auto* analyze = app.add_subcommand("analyze", "threshold classification only, no simulation");
    analyze->add_option("scenario", scenario_path, "scenario JSON file")->required();
    analyze->add_option("--seed", seed, "override the scenario's master seed");

    auto* control = app.add_subcommand("control", "antidote allocation from the infection matrices at t = 0");
    control->add_option("scenario", scenario_path, "scenario JSON file")->required();
    control->add_option("--solver", solver, "p1 or alg1")->required()->check(CLI::IsMember({"p1", "alg1"}));
    control->add_option("--seed", seed, "override the scenario's master seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : validation;
    }

    try {
        if (*run)
            return cmd_run(scenario_path, out_dir, seed);
        if (*analyze)
            return cmd_analyze(scenario_path, seed);
        return cmd_control(scenario_path, solver, seed);
    } catch (const mvsis::ValidationError& e) {
        spdlog::error("{}", e.what());
        return validation;
    } catch (const std::exception& e) {
        spdlog::error("{}: {}", scenario_path, e.what());
        return runtime;
    }
}
