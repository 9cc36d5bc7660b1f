#ifndef MVSIS_REPORT_HPP
#define MVSIS_REPORT_HPP

// Scenario pipeline: build, classify, simulate (once per control solver),
// analyse, and render CSV / JSON outputs.

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "mvsis/control.hpp"
#include "mvsis/equilibria.hpp"
#include "mvsis/integrator.hpp"
#include "mvsis/scenario.hpp"
#include "mvsis/spectral.hpp"
#include "mvsis/visual.hpp"

namespace mvsis {

/// Shortest round-trip decimal form of v.
inline std::string format_number(double v)
{
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

inline constexpr double eradication_level = 1e-6;
inline constexpr double ndfe_match_tolerance = 1e-5;

struct RunResult {
    std::string label;
    ControlSolver solver = ControlSolver::none;
    Trajectory trajectory;
    /// Allocation in force at the end of the run, one per virus (empty without control).
    std::vector<Allocation> final_allocations;
    /// Healing rates delta + u in force at the end of the run.
    std::vector<Vector> final_healing;
};

struct PipelineResult {
    Scenario scenario;
    std::uint64_t seed = 0;
    BuiltScenario built;
    std::vector<RunResult> runs;
    json summary;
};

namespace detail {

inline json vec_json(std::span<const double> v) { return json(std::vector<double>(v.begin(), v.end())); }

inline double total(std::span<const double> v)
{
    double s = 0.0;
    for (double x : v)
        s += x;
    return s;
}

inline bool all_symmetric(std::span<const Matrix> beta)
{
    return std::all_of(beta.begin(), beta.end(), [](const Matrix& b) { return is_symmetric(b); });
}

inline json spectral_json(const SystemSpec& spec)
{
    json j;
    const std::size_t m = spec.virus_count();
    Vector s(m);
    json connected = json::array();
    for (std::size_t k = 0; k < m; ++k) {
        const auto& v = spec.viruses[k];
        s[k] = spectral_abscissa(minus_diagonal(v.beta, v.delta)).value;
        connected.push_back(is_strongly_connected(v.beta));
    }
    j["s_values"] = vec_json(s);
    const auto beta = spec.static_beta();
    if (all_symmetric(beta)) {
        Vector lam(m);
        for (std::size_t k = 0; k < m; ++k)
            lam[k] = lambda_max_symmetric(minus_diagonal(beta[k], spec.viruses[k].delta)).value;
        j["lambda_max"] = vec_json(lam);
    }
    j["strongly_connected"] = connected;
    j["gershgorin_excess"] = json::array();
    for (std::size_t k = 0; k < m; ++k)
        j["gershgorin_excess"].push_back(vec_json(gershgorin_excess(beta[k], spec.viruses[k].delta)));
    return j;
}

inline json classification_json(const SystemSpec& spec, bool time_varying)
{
    json j;
    j["evaluated_at"] = time_varying ? "t=0" : "static";
    try {
        const auto c = classify(spec);
        j["outcome"] = to_string(c.outcome);
        j["survivor"] = c.survivor ? json(*c.survivor + 1) : json(nullptr);
        json above = json::array();
        for (const auto& v : c.viruses)
            above.push_back(v.above_threshold);
        j["above_threshold"] = above;
    } catch (const PreconditionError& e) {
        j["outcome"] = "Unavailable";
        j["error"] = e.what();
    }
    return j;
}

}  // namespace detail

/// Classification-only report (no simulation).
inline json analyze_scenario(const Scenario& s, std::optional<std::uint64_t> seed = {})
{
    const auto built = build(s, seed);
    json j;
    j["scenario"] = s.name;
    j["seed"] = seed.value_or(s.seed);
    j["agents"] = s.agents;
    j["viruses"] = s.viruses.size();
    j["time_varying"] = built.source != nullptr;
    j["spectral"] = detail::spectral_json(built.system);
    j["classification"] = detail::classification_json(built.system, built.source != nullptr);
    if (!built.source && j["classification"]["outcome"] == "SingleSurvivor") {
        const std::size_t k = j["classification"]["survivor"].get<std::size_t>() - 1;
        const auto eq = single_survivor_equilibrium(built.system, k);
        j["ndfe"] = {{"virus", k + 1}, {"p_tilde", detail::vec_json(eq.virus_state(k))}, {"residual", eq.residual},
                     {"iterations", eq.iterations}};
    }
    return j;
}

/// One-shot allocation from the infection matrices at t = 0.
inline json control_scenario(const Scenario& s, ControlSolver solver, std::optional<std::uint64_t> seed = {})
{
    if (!s.control)
        throw ValidationError("control: scenario has no \"control\" section");
    const auto built = build(s, seed);
    const auto beta = built.system.beta_at(0.0);
    const bool symmetric = detail::all_symmetric(beta);
    json j;
    j["scenario"] = s.name;
    j["solver"] = to_string(solver);
    j["budget"] = s.control->config.budget;
    j["kappa"] = s.control->config.kappa;
    j["allocations"] = json::array();
    for (std::size_t k = 0; k < built.system.virus_count(); ++k) {
        const auto& delta = built.system.viruses[k].delta;
        const Vector r = gershgorin_excess(beta[k], delta);
        const Allocation a = allocate(solver, r, s.control->config);
        Vector healed = delta;
        for (std::size_t i = 0; i < healed.size(); ++i)
            healed[i] += a.u[i];
        json e;
        e["virus"] = k + 1;
        e["u"] = detail::vec_json(a.u);
        e["eta"] = a.eta;
        e["objective"] = a.objective;
        e["cardinality_objective"] = cardinality_objective(a, s.control->config.kappa);
        e["iterations"] = a.iterations;
        e["support"] = a.support();
        e["spent"] = a.spent();
        e["objective_history"] = a.objective_history;
        e["s_before"] = spectral_abscissa(minus_diagonal(beta[k], delta)).value;
        e["s_after"] = spectral_abscissa(minus_diagonal(beta[k], healed)).value;
        if (symmetric)
            e["lambda_after"] = lambda_max_symmetric(minus_diagonal(beta[k], healed)).value;
        j["allocations"].push_back(std::move(e));
    }
    return j;
}

/// Runs every configured simulation and assembles the summary document.
inline PipelineResult run_scenario(const Scenario& s, std::optional<std::uint64_t> seed = {})
{
    PipelineResult out;
    out.scenario = s;
    out.seed = seed.value_or(s.seed);
    out.built = build(s, seed);
    const auto& spec = out.built.system;
    const std::size_t m = spec.virus_count();
    const std::size_t n = spec.agents();
    const bool varying = out.built.source != nullptr;

    std::vector<ControlSolver> solvers{ControlSolver::none};
    if (s.control)
        solvers = s.control->solvers;

    for (ControlSolver solver : solvers) {
        RunResult run;
        run.solver = solver;
        run.label = s.control ? to_string(solver) : "base";
        std::optional<AntidotePolicy> policy;
        if (s.control && solver != ControlSolver::none)
            policy.emplace(solver, std::vector<ControlConfig>(m, s.control->config), spec.healing(),
                           s.control->interval);
        run.trajectory = simulate(spec, out.built.initial, out.built.integrator, policy ? &*policy : nullptr);
        run.final_healing = spec.healing();
        if (policy) {
            run.final_allocations = policy->allocations();
            for (std::size_t k = 0; k < m; ++k)
                for (std::size_t i = 0; i < n; ++i)
                    run.final_healing[k][i] += run.final_allocations[k].u[i];
        }
        out.runs.push_back(std::move(run));
    }

    json& sum = out.summary;
    sum["scenario"] = s.name;
    sum["seed"] = out.seed;
    sum["agents"] = n;
    sum["viruses"] = m;
    sum["time_varying"] = varying;
    sum["t_end"] = s.integrator.t_end;
    sum["dt"] = s.integrator.dt;
    sum["spectral"] = detail::spectral_json(spec);
    sum["classification"] = detail::classification_json(spec, varying);

    std::optional<EquilibriumPoint> ndfe;
    if (!varying && sum["classification"]["outcome"] == "SingleSurvivor") {
        const std::size_t k = sum["classification"]["survivor"].get<std::size_t>() - 1;
        ndfe = single_survivor_equilibrium(spec, k);
        sum["ndfe"] = {{"virus", k + 1},
                       {"p_tilde", detail::vec_json(ndfe->virus_state(k))},
                       {"residual", ndfe->residual},
                       {"iterations", ndfe->iterations}};
    }

    sum["runs"] = json::array();
    for (const auto& run : out.runs) {
        const auto& traj = run.trajectory;
        const auto& last = traj.final_state();
        json r;
        r["label"] = run.label;
        r["solver"] = to_string(run.solver);
        r["final_time"] = last.t;
        Vector totals(m), peaks(m);
        json eradicated = json::array();
        for (std::size_t k = 0; k < m; ++k) {
            const Vector pk = last.virus(k);
            totals[k] = detail::total(pk);
            peaks[k] = *std::max_element(pk.begin(), pk.end());
            eradicated.push_back(peaks[k] < eradication_level);
        }
        r["final_infection"] = detail::vec_json(totals);
        r["total_infection"] = detail::total(totals);
        r["final_max_infection"] = detail::vec_json(peaks);
        r["eradicated"] = eradicated;

        const auto beta_end = spec.beta_at(last.t);
        Vector s_end(m);
        for (std::size_t k = 0; k < m; ++k)
            s_end[k] = spectral_abscissa(minus_diagonal(beta_end[k], run.final_healing[k])).value;
        r["final_s_values"] = detail::vec_json(s_end);
        if (detail::all_symmetric(beta_end)) {
            Vector lam(m);
            for (std::size_t k = 0; k < m; ++k)
                lam[k] = lambda_max_symmetric(minus_diagonal(beta_end[k], run.final_healing[k])).value;
            r["final_lambda_max"] = detail::vec_json(lam);
        }

        if (!run.final_allocations.empty()) {
            json alloc = json::array();
            for (std::size_t k = 0; k < m; ++k) {
                const auto& a = run.final_allocations[k];
                alloc.push_back({{"virus", k + 1},
                                 {"u", detail::vec_json(a.u)},
                                 {"eta", a.eta},
                                 {"objective", a.objective},
                                 {"cardinality_objective", cardinality_objective(a, s.control->config.kappa)},
                                 {"iterations", a.iterations},
                                 {"support", a.support()},
                                 {"spent", a.spent()},
                                 {"monotone_history", a.monotone()}});
            }
            r["allocations"] = alloc;
            r["recomputations"] = traj.control.size();
        }

        r["clamp"] = {{"repairs", traj.clamp.repairs},
                      {"max_violation", traj.clamp.max_violation},
                      {"warnings", traj.clamp.warnings}};

        if (ndfe && run.solver == ControlSolver::none) {
            const std::size_t k = *ndfe->virus;
            double dev = 0.0;
            bool others = true;
            for (std::size_t l = 0; l < m; ++l)
                for (std::size_t i = 0; i < n; ++i) {
                    if (l == k)
                        dev = std::max(dev, std::abs(last.p(l, i) - ndfe->p_tilde(l, i)));
                    else
                        others = others && last.p(l, i) < eradication_level;
                }
            r["ndfe_check"] = {{"max_abs_deviation", dev},
                               {"matches", dev <= ndfe_match_tolerance},
                               {"others_eradicated", others}};
        }

        if (m >= 2) {
            const auto pc = detect_parallel_equilibrium(traj, s.analysis.tail_window);
            json pj;
            pj["status"] = to_string(pc.status);
            if (pc.status != ParallelStatus::not_applicable) {
                pj["alpha"] = detail::vec_json(pc.alpha_to_first);
                pj["base"] = detail::vec_json(pc.base);
                pj["max_relative_deviation"] = pc.max_relative_deviation;
                pj["tail_variation"] = pc.tail_variation;
            }
            r["parallel"] = pj;
        }

        if (s.analysis.average_window > 0.0 && traj.spectral.size() >= 2) {
            json mon = json::array();
            for (std::size_t k = 0; k < m; ++k) {
                std::vector<AbscissaSample> samples;
                samples.reserve(traj.spectral.size());
                for (const auto& sp : traj.spectral)
                    samples.push_back({sp.t, sp.s_values[k]});
                const double span = samples.back().t - samples.front().t;
                if (span < s.analysis.average_window)
                    continue;
                const auto rep = average_abscissa_monitor(samples, s.analysis.average_window);
                json e{{"virus", k + 1},
                       {"max_window_average", rep.max_window_average},
                       {"final_running_average", rep.running.back().average},
                       {"max_sample", std::max_element(samples.begin(), samples.end(),
                                                       [](auto& a, auto& b) { return a.value < b.value; })
                                          ->value},
                       {"min_sample", std::min_element(samples.begin(), samples.end(),
                                                       [](auto& a, auto& b) { return a.value < b.value; })
                                          ->value}};
                if (s.analysis.alpha_bar)
                    e["below_alpha_bar"] = rep.below(*s.analysis.alpha_bar);
                mon.push_back(std::move(e));
            }
            r["average_abscissa"] = mon;
        }
        sum["runs"].push_back(std::move(r));
    }

    if (out.runs.size() > 1) {
        json cmp;
        json totals, lambdas;
        std::optional<double> t_none, t_p1, t_alg1, l_none, l_p1, l_alg1;
        for (const auto& r : sum["runs"]) {
            const std::string label = r["label"];
            const double tot = r["total_infection"];
            const double lam = r.contains("final_lambda_max") ? r["final_lambda_max"][0].get<double>()
                                                              : r["final_s_values"][0].get<double>();
            totals[label] = tot;
            lambdas[label] = lam;
            if (label == "none") {
                t_none = tot;
                l_none = lam;
            } else if (label == "p1") {
                t_p1 = tot;
                l_p1 = lam;
            } else if (label == "alg1") {
                t_alg1 = tot;
                l_alg1 = lam;
            }
        }
        cmp["total_infection"] = totals;
        cmp["lambda_first_virus"] = lambdas;
        if (t_none && t_p1 && t_alg1) {
            cmp["infection_ordering"] = *t_none > *t_p1 && *t_p1 > *t_alg1;
            cmp["lambda_ordering"] = *l_none > *l_p1 && *l_p1 > *l_alg1;
        }
        if (t_none && *t_none > 0.0) {
            if (t_p1)
                cmp["reduction_p1"] = 1.0 - *t_p1 / *t_none;
            if (t_alg1)
                cmp["reduction_alg1"] = 1.0 - *t_alg1 / *t_none;
        }
        sum["comparison"] = cmp;
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV rendering

class CsvWriter {
public:
    void header(const std::vector<std::string>& cols)
    {
        for (std::size_t i = 0; i < cols.size(); ++i) {
            if (i)
                out_ += ',';
            out_ += cols[i];
        }
        out_ += '\n';
    }

    void cell(double v)
    {
        if (!first_)
            out_ += ',';
        out_ += format_number(v);
        first_ = false;
    }

    void end_row()
    {
        out_ += '\n';
        first_ = true;
    }

    const std::string& str() const noexcept { return out_; }

private:
    std::string out_;
    bool first_ = true;
};

/// t, p{k}_{i}, then u{k}_{i}, eta{k}, objective{k} when a controller ran,
/// then x_{i}, y_{i} when positions are requested. Indices are 1-based.
inline std::string trajectory_csv(const Trajectory& traj, const MobilityBetaSource* positions = nullptr)
{
    const std::size_t m = traj.states.front().virus_count();
    const std::size_t n = traj.states.front().agents();
    const bool control = !traj.control.empty();
    const bool with_pos = positions && positions->mobility();
    std::vector<std::string> cols{"t"};
    for (std::size_t k = 1; k <= m; ++k)
        for (std::size_t i = 1; i <= n; ++i)
            cols.push_back("p" + std::to_string(k) + "_" + std::to_string(i));
    if (control) {
        for (std::size_t k = 1; k <= m; ++k)
            for (std::size_t i = 1; i <= n; ++i)
                cols.push_back("u" + std::to_string(k) + "_" + std::to_string(i));
        for (std::size_t k = 1; k <= m; ++k)
            cols.push_back("eta" + std::to_string(k));
        for (std::size_t k = 1; k <= m; ++k)
            cols.push_back("objective" + std::to_string(k));
    }
    if (with_pos) {
        for (std::size_t i = 1; i <= n; ++i) {
            cols.push_back("x_" + std::to_string(i));
            cols.push_back("y_" + std::to_string(i));
        }
    }
    CsvWriter w;
    w.header(cols);
    std::size_t rec = 0;
    for (const auto& s : traj.states) {
        w.cell(s.t);
        for (double v : s.p.data())
            w.cell(v);
        if (control) {
            while (rec + 1 < traj.control.size() && traj.control[rec + 1].t <= s.t)
                ++rec;
            const auto& c = traj.control[rec];
            for (std::size_t k = 0; k < m; ++k)
                for (double u : c.u[k])
                    w.cell(u);
            for (double e : c.eta)
                w.cell(e);
            for (double o : c.objective)
                w.cell(o);
        }
        if (with_pos)
            for (const auto& z : positions->positions_at(s.t)) {
                w.cell(z[0]);
                w.cell(z[1]);
            }
        w.end_row();
    }
    return w.str();
}

/// t, s{k}: spectral abscissa of B^k(t) - D^k - U^k(t) at each sample.
inline std::string spectral_trace_csv(const Trajectory& traj, std::size_t m)
{
    std::vector<std::string> cols{"t"};
    for (std::size_t k = 1; k <= m; ++k)
        cols.push_back("s" + std::to_string(k));
    CsvWriter w;
    w.header(cols);
    for (const auto& sp : traj.spectral) {
        w.cell(sp.t);
        for (double v : sp.s_values)
            w.cell(v);
        w.end_row();
    }
    return w.str();
}

/// t, then per agent r_{i}, g_{i}, b_{i} (three viruses only) and d_{i}.
inline std::string plot_data_csv(const Trajectory& traj, double d0, double r0)
{
    const std::size_t m = traj.states.front().virus_count();
    const std::size_t n = traj.states.front().agents();
    const bool color = m == 3;
    std::vector<std::string> cols{"t"};
    for (std::size_t i = 1; i <= n; ++i) {
        const std::string idx = std::to_string(i);
        if (color) {
            cols.push_back("r_" + idx);
            cols.push_back("g_" + idx);
            cols.push_back("b_" + idx);
        }
        cols.push_back("d_" + idx);
    }
    CsvWriter w;
    w.header(cols);
    for (const auto& s : traj.states) {
        w.cell(s.t);
        for (const auto& g : plot_columns(s, d0, r0, color)) {
            if (g.rgb)
                for (double c : *g.rgb)
                    w.cell(c);
            w.cell(g.diameter);
        }
        w.end_row();
    }
    return w.str();
}

/// Writes the configured outputs into `dir` and returns the written paths.
inline std::vector<std::filesystem::path> write_outputs(const PipelineResult& res, const std::filesystem::path& dir)
{
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::vector<fs::path> written;
    auto put = [&](const std::string& name, const std::string& body) {
        const fs::path p = dir / name;
        std::ofstream f(p, std::ios::binary);
        if (!f)
            throw Error("cannot write " + p.string());
        f << body;
        if (!f)
            throw Error("failed writing " + p.string());
        written.push_back(p);
    };
    const auto& o = res.scenario.outputs;
    const bool many = res.runs.size() > 1;
    const std::size_t m = res.built.system.virus_count();
    for (const auto& run : res.runs) {
        const std::string suffix = many ? "_" + run.label : "";
        if (o.trajectory_csv)
            put("trajectory" + suffix + ".csv",
                trajectory_csv(run.trajectory, o.positions ? res.built.source.get() : nullptr));
        if (o.spectral_trace_csv && !run.trajectory.spectral.empty())
            put("spectral_trace" + suffix + ".csv", spectral_trace_csv(run.trajectory, m));
        if (o.plot_data_csv)
            put("plot_data" + suffix + ".csv", plot_data_csv(run.trajectory, res.scenario.plot.d0, res.scenario.plot.r0));
    }
    if (o.summary_json)
        put("summary.json", res.summary.dump(2) + "\n");
    return written;
}

}  // namespace mvsis

#endif  // MVSIS_REPORT_HPP
