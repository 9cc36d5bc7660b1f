#ifndef MVSIS_SCENARIO_HPP
#define MVSIS_SCENARIO_HPP

// Declarative scenario files (JSON) and their translation into a system,
// an initial state and an integrator configuration.

#include <array>
#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "mvsis/control.hpp"
#include "mvsis/errors.hpp"
#include "mvsis/integrator.hpp"
#include "mvsis/matrix.hpp"
#include "mvsis/mobility.hpp"
#include "mvsis/model.hpp"

namespace mvsis {

using json = nlohmann::ordered_json;

struct CompleteGraph {
    bool self_loops = false;
    friend bool operator==(const CompleteGraph&, const CompleteGraph&) = default;
};

struct RingGraph {
    bool bidirectional = true;
    friend bool operator==(const RingGraph&, const RingGraph&) = default;
};

/// Erdos-Renyi arcs with uniform weights; `connected` adds a directed ring
/// so the result is irreducible.
struct RandomGraph {
    double density = 0.3;
    double weight_min = 0.1;
    double weight_max = 1.0;
    bool symmetric = false;
    bool connected = true;
    std::optional<std::uint64_t> seed;
    friend bool operator==(const RandomGraph&, const RandomGraph&) = default;
};

/// Frozen proximity graph: agents placed uniformly in a square, weights
/// exp(-d^2) below the cutoff.
struct GeometricGraph {
    double side = 4.0;
    double r_hat = 10.0;
    bool zero_diagonal = false;
    std::optional<std::uint64_t> seed;
    friend bool operator==(const GeometricGraph&, const GeometricGraph&) = default;
};

struct MatrixGraph {
    Matrix weights;
    friend bool operator==(const MatrixGraph&, const MatrixGraph&) = default;
};

using GraphSpec = std::variant<CompleteGraph, RingGraph, RandomGraph, GeometricGraph, MatrixGraph>;

/// Healing rates: one value for every agent or one per agent.
using Healing = std::variant<double, Vector>;

struct VirusEntry {
    /// Static spread graph, scaled by `beta`.
    std::optional<GraphSpec> graph;
    double beta = 1.0;
    /// Base rate over the mobility proximity graph (instead of `graph`).
    std::optional<double> mobility_beta;
    Healing delta = 1.0;
    friend bool operator==(const VirusEntry&, const VirusEntry&) = default;
};

struct MobilityEntry {
    Box box{{0.0, 0.0}, 4.0};
    double r_hat = 10.0;
    double speed_min = 0.5;
    double speed_max = 1.5;
    bool zero_diagonal = false;
    std::optional<std::vector<Point>> positions;
    std::optional<std::vector<Point>> drifts;
    std::optional<std::uint64_t> seed;
    friend bool operator==(const MobilityEntry&, const MobilityEntry&) = default;
};

struct PerturbationEntry {
    double magnitude = 0.0;
    double interval = 1.0;
    std::optional<std::uint64_t> seed;
    friend bool operator==(const PerturbationEntry&, const PerturbationEntry&) = default;
};

/// Each agent draws (p^1, ..., p^m, healthy) uniformly on the simplex and
/// the infected part is scaled by `scale`.
struct RandomInitial {
    double scale = 1.0;
    std::optional<std::uint64_t> seed;
    friend bool operator==(const RandomInitial&, const RandomInitial&) = default;
};

struct UniformInitial {
    double value = 0.1;
    friend bool operator==(const UniformInitial&, const UniformInitial&) = default;
};

struct MatrixInitial {
    Matrix p;
    friend bool operator==(const MatrixInitial&, const MatrixInitial&) = default;
};

using InitialSpec = std::variant<RandomInitial, UniformInitial, MatrixInitial>;

struct ControlEntry {
    std::vector<ControlSolver> solvers{ControlSolver::none, ControlSolver::problem1, ControlSolver::algorithm1};
    ControlConfig config;
    /// Recomputation period; 0 recomputes at every step.
    double interval = 0.0;
    friend bool operator==(const ControlEntry&, const ControlEntry&) = default;
};

struct OutputEntry {
    bool trajectory_csv = true;
    bool spectral_trace_csv = true;
    bool summary_json = true;
    bool plot_data_csv = false;
    bool positions = false;
    friend bool operator==(const OutputEntry&, const OutputEntry&) = default;
};

struct PlotEntry {
    double d0 = 1.0;
    double r0 = 10.0;
    friend bool operator==(const PlotEntry&, const PlotEntry&) = default;
};

struct AnalysisEntry {
    double tail_window = 10.0;
    /// Window of the running-average abscissa monitor; 0 disables it.
    double average_window = 0.0;
    std::optional<double> alpha_bar;
    friend bool operator==(const AnalysisEntry&, const AnalysisEntry&) = default;
};

struct Scenario {
    std::string name;
    std::string description;
    std::uint64_t seed = 0;
    std::size_t agents = 0;
    std::vector<VirusEntry> viruses;
    std::optional<MobilityEntry> mobility;
    std::optional<PerturbationEntry> perturbation;
    InitialSpec initial = RandomInitial{};
    IntegratorConfig integrator;
    std::optional<ControlEntry> control;
    OutputEntry outputs;
    PlotEntry plot;
    AnalysisEntry analysis;
    friend bool operator==(const Scenario&, const Scenario&) = default;
};

// ---------------------------------------------------------------------------
// Seeds

/// Sub-seed for one random component, derived from the master seed, a
/// component tag and an index so components never share a stream.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag, std::uint64_t index = 0)
{
    std::uint32_t h = 2166136261u;  // FNV-1a
    for (unsigned char ch : tag) {
        h ^= ch;
        h *= 16777619u;
    }
    std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32), h,
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    std::array<std::uint32_t, 2> w{};
    seq.generate(w.begin(), w.end());
    return (static_cast<std::uint64_t>(w[0]) << 32) | w[1];
}

// ---------------------------------------------------------------------------
// JSON reading with path-qualified diagnostics

namespace detail {

class Node {
public:
    Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

    const json& raw() const { return j_; }
    const std::string& path() const { return path_; }

    [[noreturn]] void fail(const std::string& what) const { throw ValidationError(path_ + ": " + what); }

    Node child(const std::string& key) const { return {j_.at(key), path_ + "." + key}; }
    Node item(std::size_t i) const { return {j_.at(i), path_ + "[" + std::to_string(i) + "]"}; }
    bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

    void expect_object(std::initializer_list<std::string_view> allowed) const
    {
        if (!j_.is_object())
            fail("expected an object");
        for (const auto& [key, value] : j_.items()) {
            bool ok = false;
            for (auto a : allowed)
                ok = ok || key == a;
            if (!ok)
                throw ValidationError(path_ + "." + key + ": unknown field");
        }
    }

    double number() const
    {
        if (!j_.is_number())
            fail("expected a number");
        const double v = j_.get<double>();
        if (!std::isfinite(v))
            fail("expected a finite number");
        return v;
    }

    std::uint64_t unsigned_int() const
    {
        if (!j_.is_number_unsigned() && !(j_.is_number_integer() && j_.get<std::int64_t>() >= 0))
            fail("expected a non-negative integer");
        return j_.get<std::uint64_t>();
    }

    bool boolean() const
    {
        if (!j_.is_boolean())
            fail("expected true or false");
        return j_.get<bool>();
    }

    std::string string() const
    {
        if (!j_.is_string())
            fail("expected a string");
        return j_.get<std::string>();
    }

    std::size_t size() const
    {
        if (!j_.is_array())
            fail("expected an array");
        return j_.size();
    }

    Vector vector() const
    {
        Vector v(size());
        for (std::size_t i = 0; i < v.size(); ++i)
            v[i] = item(i).number();
        return v;
    }

    Matrix matrix() const
    {
        const std::size_t rows = size();
        if (rows == 0)
            fail("expected a non-empty matrix");
        const std::size_t cols = item(0).size();
        Matrix m(rows, cols);
        for (std::size_t i = 0; i < rows; ++i) {
            const Node row = item(i);
            if (row.size() != cols)
                row.fail("expected " + std::to_string(cols) + " columns, got " + std::to_string(row.size()));
            for (std::size_t j = 0; j < cols; ++j)
                m(i, j) = row.item(j).number();
        }
        return m;
    }

    Point point() const
    {
        if (size() != 2)
            fail("expected a point [x, y]");
        return {item(0).number(), item(1).number()};
    }

    std::vector<Point> points() const
    {
        std::vector<Point> out(size());
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = item(i).point();
        return out;
    }

    template <class T, class F>
    T get(const std::string& key, T fallback, F read) const
    {
        return has(key) ? read(child(key)) : fallback;
    }

    double num(const std::string& key, double fallback) const
    {
        return get(key, fallback, [](const Node& n) { return n.number(); });
    }
    bool flag(const std::string& key, bool fallback) const
    {
        return get(key, fallback, [](const Node& n) { return n.boolean(); });
    }
    std::optional<std::uint64_t> seed(const std::string& key) const
    {
        if (!has(key))
            return std::nullopt;
        return child(key).unsigned_int();
    }

private:
    const json& j_;
    std::string path_;
};

inline json matrix_json(const Matrix& m)
{
    json a = json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto r = m.row(i);
        a.push_back(json(std::vector<double>(r.begin(), r.end())));
    }
    return a;
}

inline json points_json(const std::vector<Point>& pts)
{
    json a = json::array();
    for (const auto& p : pts)
        a.push_back({p[0], p[1]});
    return a;
}

inline GraphSpec read_graph(const Node& n)
{
    if (!n.raw().is_object() || !n.has("type"))
        n.fail("expected an object with a \"type\" field");
    const std::string type = n.child("type").string();
    if (type == "complete") {
        n.expect_object({"type", "self_loops"});
        return CompleteGraph{n.flag("self_loops", false)};
    }
    if (type == "ring") {
        n.expect_object({"type", "bidirectional"});
        return RingGraph{n.flag("bidirectional", true)};
    }
    if (type == "random") {
        n.expect_object({"type", "density", "weight_min", "weight_max", "symmetric", "connected", "seed"});
        RandomGraph g;
        g.density = n.num("density", g.density);
        g.weight_min = n.num("weight_min", g.weight_min);
        g.weight_max = n.num("weight_max", g.weight_max);
        g.symmetric = n.flag("symmetric", g.symmetric);
        g.connected = n.flag("connected", g.connected);
        g.seed = n.seed("seed");
        if (!(g.density >= 0.0 && g.density <= 1.0))
            n.child("density").fail("must lie in [0, 1]");
        if (!(g.weight_min >= 0.0 && g.weight_max >= g.weight_min))
            n.fail("need 0 <= weight_min <= weight_max");
        return g;
    }
    if (type == "geometric") {
        n.expect_object({"type", "side", "r_hat", "zero_diagonal", "seed"});
        GeometricGraph g;
        g.side = n.num("side", g.side);
        g.r_hat = n.num("r_hat", g.r_hat);
        g.zero_diagonal = n.flag("zero_diagonal", g.zero_diagonal);
        g.seed = n.seed("seed");
        if (!(g.side > 0.0))
            n.child("side").fail("must be positive");
        if (!(g.r_hat > 0.0))
            n.child("r_hat").fail("must be positive");
        return g;
    }
    if (type == "matrix") {
        n.expect_object({"type", "weights"});
        if (!n.has("weights"))
            n.fail("missing field \"weights\"");
        return MatrixGraph{n.child("weights").matrix()};
    }
    n.child("type").fail("unknown graph type '" + type + "' (expected complete, ring, random, geometric or matrix)");
}

inline json write_graph(const GraphSpec& g)
{
    return std::visit(
        [](const auto& v) -> json {
            using T = std::decay_t<decltype(v)>;
            json j;
            if constexpr (std::is_same_v<T, CompleteGraph>) {
                j["type"] = "complete";
                j["self_loops"] = v.self_loops;
            } else if constexpr (std::is_same_v<T, RingGraph>) {
                j["type"] = "ring";
                j["bidirectional"] = v.bidirectional;
            } else if constexpr (std::is_same_v<T, RandomGraph>) {
                j["type"] = "random";
                j["density"] = v.density;
                j["weight_min"] = v.weight_min;
                j["weight_max"] = v.weight_max;
                j["symmetric"] = v.symmetric;
                j["connected"] = v.connected;
                if (v.seed)
                    j["seed"] = *v.seed;
            } else if constexpr (std::is_same_v<T, GeometricGraph>) {
                j["type"] = "geometric";
                j["side"] = v.side;
                j["r_hat"] = v.r_hat;
                j["zero_diagonal"] = v.zero_diagonal;
                if (v.seed)
                    j["seed"] = *v.seed;
            } else {
                j["type"] = "matrix";
                j["weights"] = matrix_json(v.weights);
            }
            return j;
        },
        g);
}

inline InitialSpec read_initial(const Node& n)
{
    if (!n.raw().is_object() || !n.has("type"))
        n.fail("expected an object with a \"type\" field");
    const std::string type = n.child("type").string();
    if (type == "random") {
        n.expect_object({"type", "scale", "seed"});
        RandomInitial r;
        r.scale = n.num("scale", r.scale);
        r.seed = n.seed("seed");
        if (!(r.scale >= 0.0 && r.scale <= 1.0))
            n.child("scale").fail("must lie in [0, 1]");
        return r;
    }
    if (type == "uniform") {
        n.expect_object({"type", "value"});
        return UniformInitial{n.num("value", 0.1)};
    }
    if (type == "matrix") {
        n.expect_object({"type", "p"});
        if (!n.has("p"))
            n.fail("missing field \"p\"");
        return MatrixInitial{n.child("p").matrix()};
    }
    n.child("type").fail("unknown initial type '" + type + "' (expected random, uniform or matrix)");
}

inline json write_initial(const InitialSpec& s)
{
    return std::visit(
        [](const auto& v) -> json {
            using T = std::decay_t<decltype(v)>;
            json j;
            if constexpr (std::is_same_v<T, RandomInitial>) {
                j["type"] = "random";
                j["scale"] = v.scale;
                if (v.seed)
                    j["seed"] = *v.seed;
            } else if constexpr (std::is_same_v<T, UniformInitial>) {
                j["type"] = "uniform";
                j["value"] = v.value;
            } else {
                j["type"] = "matrix";
                j["p"] = matrix_json(v.p);
            }
            return j;
        },
        s);
}

inline Method parse_method(const Node& n)
{
    const std::string s = n.string();
    if (s == "rk4")
        return Method::rk4;
    if (s == "euler")
        return Method::euler;
    n.fail("unknown method '" + s + "' (expected rk4 or euler)");
}

}  // namespace detail

/// Checks cross-field consistency; throws ValidationError naming the field.
inline void validate(const Scenario& s)
{
    auto fail = [](const std::string& path, const std::string& what) { throw ValidationError(path + ": " + what); };
    if (s.agents == 0)
        fail("agents", "must be at least 1");
    if (s.viruses.empty())
        fail("viruses", "at least one virus is required");
    const std::size_t n = s.agents;
    const std::size_t m = s.viruses.size();
    for (std::size_t k = 0; k < m; ++k) {
        const auto& v = s.viruses[k];
        const std::string path = "viruses[" + std::to_string(k) + "]";
        if (v.graph.has_value() == v.mobility_beta.has_value())
            fail(path, "exactly one of \"graph\" and \"mobility_beta\" must be given");
        if (v.mobility_beta && !s.mobility)
            fail(path + ".mobility_beta", "requires a \"mobility\" section");
        if (v.mobility_beta && !(*v.mobility_beta >= 0.0))
            fail(path + ".mobility_beta", "must be non-negative");
        if (!(v.beta >= 0.0))
            fail(path + ".beta", "must be non-negative");
        if (v.graph)
            if (const auto* mg = std::get_if<MatrixGraph>(&*v.graph)) {
                if (mg->weights.rows() != n || mg->weights.cols() != n)
                    fail(path + ".graph.weights", "expected a " + std::to_string(n) + "x" + std::to_string(n) +
                                                      " matrix, got " + std::to_string(mg->weights.rows()) + "x" +
                                                      std::to_string(mg->weights.cols()));
                if (!is_nonnegative(mg->weights))
                    fail(path + ".graph.weights", "entries must be non-negative");
            }
        if (const auto* d = std::get_if<Vector>(&v.delta)) {
            if (d->size() != n)
                fail(path + ".delta", "expected " + std::to_string(n) + " entries, got " + std::to_string(d->size()));
            for (double x : *d)
                if (!(x >= 0.0))
                    fail(path + ".delta", "healing rates must be non-negative");
        } else if (!(std::get<double>(v.delta) >= 0.0)) {
            fail(path + ".delta", "healing rate must be non-negative");
        }
    }
    if (s.mobility) {
        const auto& mob = *s.mobility;
        if (!(mob.box.side > 0.0))
            fail("mobility.side", "must be positive");
        if (!(mob.r_hat > 0.0))
            fail("mobility.r_hat", "must be positive");
        if (!(mob.speed_min >= 0.0 && mob.speed_max >= mob.speed_min))
            fail("mobility", "need 0 <= speed_min <= speed_max");
        if (mob.positions.has_value() != mob.drifts.has_value())
            fail("mobility", "\"positions\" and \"drifts\" must be given together");
        if (mob.positions) {
            if (mob.positions->size() != n)
                fail("mobility.positions", "expected " + std::to_string(n) + " points, got " +
                                               std::to_string(mob.positions->size()));
            if (mob.drifts->size() != n)
                fail("mobility.drifts", "expected " + std::to_string(n) + " points, got " +
                                            std::to_string(mob.drifts->size()));
            for (std::size_t i = 0; i < n; ++i)
                if (!mob.box.contains((*mob.positions)[i]))
                    fail("mobility.positions[" + std::to_string(i) + "]", "outside the box");
        }
    }
    if (s.perturbation) {
        if (!(s.perturbation->magnitude >= 0.0 && s.perturbation->magnitude <= 1.0))
            fail("perturbation.magnitude", "must lie in [0, 1]");
        if (!(s.perturbation->interval > 0.0))
            fail("perturbation.interval", "must be positive");
    }
    if (const auto* mi = std::get_if<MatrixInitial>(&s.initial)) {
        if (mi->p.rows() != m)
            fail("initial.p", "expected " + std::to_string(m) + " rows (one per virus), got " +
                                  std::to_string(mi->p.rows()));
        if (mi->p.cols() != n)
            fail("initial.p", "expected " + std::to_string(n) + " columns (one per agent), got " +
                                  std::to_string(mi->p.cols()));
        if (!InfectionState{mi->p, 0.0}.in_simplex(1e-12))
            fail("initial.p", "state must satisfy p >= 0 and sum over viruses <= 1 per agent");
    } else if (const auto* ui = std::get_if<UniformInitial>(&s.initial)) {
        if (!(ui->value >= 0.0) || ui->value * static_cast<double>(m) > 1.0 + 1e-12)
            fail("initial.value", "need value >= 0 and value * viruses <= 1");
    }
    const auto& ic = s.integrator;
    if (!(ic.dt > 0.0))
        fail("integrator.dt", "must be positive");
    if (!(ic.t_end >= 0.0))
        fail("integrator.t_end", "must be non-negative");
    if (!(ic.clamp_tol >= 0.0))
        fail("integrator.clamp_tol", "must be non-negative");
    if (ic.record_every == 0)
        fail("integrator.record_every", "must be at least 1");
    if (s.control) {
        try {
            s.control->config.validate();
        } catch (const Error& e) {
            fail("control", e.what());
        }
        if (!(s.control->interval >= 0.0))
            fail("control.interval", "must be non-negative");
        if (s.control->solvers.empty())
            fail("control.solvers", "at least one solver is required");
    }
    if (!(s.plot.d0 >= 0.0) || !(s.plot.r0 >= 0.0))
        fail("plot", "d0 and r0 must be non-negative");
    if (!(s.analysis.tail_window >= 0.0))
        fail("analysis.tail_window", "must be non-negative");
    if (!(s.analysis.average_window >= 0.0))
        fail("analysis.average_window", "must be non-negative");
}

inline Scenario scenario_from_json(const json& root)
{
    using detail::Node;
    const Node n(root, "$");
    n.expect_object({"name", "description", "seed", "agents", "viruses", "mobility", "perturbation", "initial",
                     "integrator", "control", "outputs", "plot", "analysis"});
    Scenario s;
    if (!n.has("name"))
        n.fail("missing field \"name\"");
    s.name = n.child("name").string();
    if (n.has("description"))
        s.description = n.child("description").string();
    s.seed = n.seed("seed").value_or(0);
    if (!n.has("agents"))
        n.fail("missing field \"agents\"");
    s.agents = n.child("agents").unsigned_int();
    if (!n.has("viruses"))
        n.fail("missing field \"viruses\"");
    const Node vs = n.child("viruses");
    for (std::size_t k = 0; k < vs.size(); ++k) {
        const Node v = vs.item(k);
        v.expect_object({"graph", "beta", "mobility_beta", "delta"});
        VirusEntry e;
        if (v.has("graph"))
            e.graph = detail::read_graph(v.child("graph"));
        e.beta = v.num("beta", e.beta);
        if (v.has("mobility_beta"))
            e.mobility_beta = v.child("mobility_beta").number();
        if (!v.has("delta"))
            v.fail("missing field \"delta\"");
        const Node d = v.child("delta");
        if (d.raw().is_array())
            e.delta = d.vector();
        else
            e.delta = d.number();
        s.viruses.push_back(std::move(e));
    }
    if (n.has("mobility")) {
        const Node mn = n.child("mobility");
        mn.expect_object({"center", "side", "r_hat", "speed_min", "speed_max", "zero_diagonal", "positions",
                          "drifts", "seed"});
        MobilityEntry mob;
        if (mn.has("center"))
            mob.box.center = mn.child("center").point();
        mob.box.side = mn.num("side", mob.box.side);
        mob.r_hat = mn.num("r_hat", mob.r_hat);
        mob.speed_min = mn.num("speed_min", mob.speed_min);
        mob.speed_max = mn.num("speed_max", mob.speed_max);
        mob.zero_diagonal = mn.flag("zero_diagonal", mob.zero_diagonal);
        if (mn.has("positions"))
            mob.positions = mn.child("positions").points();
        if (mn.has("drifts"))
            mob.drifts = mn.child("drifts").points();
        mob.seed = mn.seed("seed");
        s.mobility = std::move(mob);
    }
    if (n.has("perturbation")) {
        const Node pn = n.child("perturbation");
        pn.expect_object({"magnitude", "interval", "seed"});
        PerturbationEntry p;
        p.magnitude = pn.num("magnitude", p.magnitude);
        p.interval = pn.num("interval", p.interval);
        p.seed = pn.seed("seed");
        s.perturbation = p;
    }
    if (n.has("initial"))
        s.initial = detail::read_initial(n.child("initial"));
    if (n.has("integrator")) {
        const Node in = n.child("integrator");
        in.expect_object({"dt", "t_end", "method", "clamp_tol", "record_every", "spectral_every"});
        auto& ic = s.integrator;
        ic.dt = in.num("dt", ic.dt);
        ic.t_end = in.num("t_end", ic.t_end);
        if (in.has("method"))
            ic.method = detail::parse_method(in.child("method"));
        ic.clamp_tol = in.num("clamp_tol", ic.clamp_tol);
        if (in.has("record_every"))
            ic.record_every = in.child("record_every").unsigned_int();
        if (in.has("spectral_every"))
            ic.spectral_every = in.child("spectral_every").unsigned_int();
    }
    if (n.has("control")) {
        const Node cn = n.child("control");
        cn.expect_object({"solvers", "budget", "kappa", "weight_eps", "stop_eps", "max_reweight_iters", "interval"});
        ControlEntry c;
        if (cn.has("solvers")) {
            const Node sn = cn.child("solvers");
            c.solvers.clear();
            for (std::size_t i = 0; i < sn.size(); ++i) {
                const Node item = sn.item(i);
                try {
                    c.solvers.push_back(parse_control_solver(item.string()));
                } catch (const ValidationError& e) {
                    item.fail(e.what());
                }
            }
        }
        if (!cn.has("budget"))
            cn.fail("missing field \"budget\"");
        c.config.budget = cn.child("budget").number();
        c.config.kappa = cn.num("kappa", c.config.kappa);
        c.config.weight_eps = cn.num("weight_eps", c.config.weight_eps);
        c.config.stop_eps = cn.num("stop_eps", c.config.stop_eps);
        if (cn.has("max_reweight_iters"))
            c.config.max_reweight_iters = cn.child("max_reweight_iters").unsigned_int();
        c.interval = cn.num("interval", c.interval);
        s.control = std::move(c);
    }
    if (n.has("outputs")) {
        const Node on = n.child("outputs");
        on.expect_object({"trajectory_csv", "spectral_trace_csv", "summary_json", "plot_data_csv", "positions"});
        auto& o = s.outputs;
        o.trajectory_csv = on.flag("trajectory_csv", o.trajectory_csv);
        o.spectral_trace_csv = on.flag("spectral_trace_csv", o.spectral_trace_csv);
        o.summary_json = on.flag("summary_json", o.summary_json);
        o.plot_data_csv = on.flag("plot_data_csv", o.plot_data_csv);
        o.positions = on.flag("positions", o.positions);
    }
    if (n.has("plot")) {
        const Node pn = n.child("plot");
        pn.expect_object({"d0", "r0"});
        s.plot.d0 = pn.num("d0", s.plot.d0);
        s.plot.r0 = pn.num("r0", s.plot.r0);
    }
    if (n.has("analysis")) {
        const Node an = n.child("analysis");
        an.expect_object({"tail_window", "average_window", "alpha_bar"});
        s.analysis.tail_window = an.num("tail_window", s.analysis.tail_window);
        s.analysis.average_window = an.num("average_window", s.analysis.average_window);
        if (an.has("alpha_bar"))
            s.analysis.alpha_bar = an.child("alpha_bar").number();
    }
    validate(s);
    return s;
}

inline json scenario_to_json(const Scenario& s)
{
    json j;
    j["name"] = s.name;
    if (!s.description.empty())
        j["description"] = s.description;
    j["seed"] = s.seed;
    j["agents"] = s.agents;
    j["viruses"] = json::array();
    for (const auto& v : s.viruses) {
        json e;
        if (v.graph)
            e["graph"] = detail::write_graph(*v.graph);
        e["beta"] = v.beta;
        if (v.mobility_beta)
            e["mobility_beta"] = *v.mobility_beta;
        if (const auto* d = std::get_if<Vector>(&v.delta))
            e["delta"] = *d;
        else
            e["delta"] = std::get<double>(v.delta);
        j["viruses"].push_back(std::move(e));
    }
    if (s.mobility) {
        const auto& m = *s.mobility;
        json e;
        e["center"] = {m.box.center[0], m.box.center[1]};
        e["side"] = m.box.side;
        e["r_hat"] = m.r_hat;
        e["speed_min"] = m.speed_min;
        e["speed_max"] = m.speed_max;
        e["zero_diagonal"] = m.zero_diagonal;
        if (m.positions)
            e["positions"] = detail::points_json(*m.positions);
        if (m.drifts)
            e["drifts"] = detail::points_json(*m.drifts);
        if (m.seed)
            e["seed"] = *m.seed;
        j["mobility"] = std::move(e);
    }
    if (s.perturbation) {
        json e;
        e["magnitude"] = s.perturbation->magnitude;
        e["interval"] = s.perturbation->interval;
        if (s.perturbation->seed)
            e["seed"] = *s.perturbation->seed;
        j["perturbation"] = std::move(e);
    }
    j["initial"] = detail::write_initial(s.initial);
    const auto& ic = s.integrator;
    j["integrator"] = {{"dt", ic.dt},
                       {"t_end", ic.t_end},
                       {"method", ic.method == Method::rk4 ? "rk4" : "euler"},
                       {"clamp_tol", ic.clamp_tol},
                       {"record_every", ic.record_every},
                       {"spectral_every", ic.spectral_every}};
    if (s.control) {
        const auto& c = *s.control;
        json solvers = json::array();
        for (auto sv : c.solvers)
            solvers.push_back(to_string(sv));
        j["control"] = {{"solvers", solvers},
                        {"budget", c.config.budget},
                        {"kappa", c.config.kappa},
                        {"weight_eps", c.config.weight_eps},
                        {"stop_eps", c.config.stop_eps},
                        {"max_reweight_iters", c.config.max_reweight_iters},
                        {"interval", c.interval}};
    }
    j["outputs"] = {{"trajectory_csv", s.outputs.trajectory_csv},
                    {"spectral_trace_csv", s.outputs.spectral_trace_csv},
                    {"summary_json", s.outputs.summary_json},
                    {"plot_data_csv", s.outputs.plot_data_csv},
                    {"positions", s.outputs.positions}};
    j["plot"] = {{"d0", s.plot.d0}, {"r0", s.plot.r0}};
    json a = {{"tail_window", s.analysis.tail_window}, {"average_window", s.analysis.average_window}};
    if (s.analysis.alpha_bar)
        a["alpha_bar"] = *s.analysis.alpha_bar;
    j["analysis"] = std::move(a);
    return j;
}

/// Parses scenario text. Syntax errors report line and column; semantic
/// errors name the offending field.
inline Scenario parse_scenario(std::string_view text, const std::string& origin = "<scenario>")
{
    json root;
    try {
        root = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        std::size_t line = 1, col = 1;
        const std::size_t upto = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
        for (std::size_t i = 0; i < upto; ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        std::string msg = e.what();
        if (const auto pos = msg.find("parse error"); pos != std::string::npos)
            msg = msg.substr(pos);
        throw ValidationError(origin + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + msg);
    }
    try {
        return scenario_from_json(root);
    } catch (const ValidationError& e) {
        throw ValidationError(origin + ": " + e.what());
    }
}

inline Scenario load_scenario(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ValidationError(path + ": cannot open scenario file");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str(), path);
}

inline std::string serialize(const Scenario& s) { return scenario_to_json(s).dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Building

struct BuiltScenario {
    SystemSpec system;
    std::shared_ptr<const MobilityBetaSource> source;
    InfectionState initial;
    IntegratorConfig integrator;
};

namespace detail {

inline Matrix generate_graph(const GraphSpec& g, std::size_t n, std::uint64_t fallback_seed)
{
    return std::visit(
        [&](const auto& v) -> Matrix {
            using T = std::decay_t<decltype(v)>;
            Matrix b(n, n);
            if constexpr (std::is_same_v<T, CompleteGraph>) {
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < n; ++j)
                        b(i, j) = (i != j || v.self_loops) ? 1.0 : 0.0;
            } else if constexpr (std::is_same_v<T, RingGraph>) {
                for (std::size_t i = 0; i < n && n > 1; ++i) {
                    b(i, (i + n - 1) % n) = 1.0;
                    if (v.bidirectional)
                        b(i, (i + 1) % n) = 1.0;
                }
                if (n == 1)
                    b(0, 0) = 1.0;
            } else if constexpr (std::is_same_v<T, RandomGraph>) {
                std::mt19937_64 rng(v.seed.value_or(fallback_seed));
                std::uniform_real_distribution<double> unit(0.0, 1.0);
                auto weight = [&] { return v.weight_min + (v.weight_max - v.weight_min) * unit(rng); };
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < n; ++j)
                        if (i != j && unit(rng) < v.density)
                            b(i, j) = weight();
                if (v.connected) {
                    for (std::size_t i = 0; i < n && n > 1; ++i)
                        if (b(i, (i + n - 1) % n) == 0.0)
                            b(i, (i + n - 1) % n) = std::max(weight(), 1e-3);
                    if (n == 1)
                        b(0, 0) = std::max(weight(), 1e-3);
                }
                if (v.symmetric)
                    for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = i + 1; j < n; ++j) {
                            const double w = std::max(b(i, j), b(j, i));
                            b(i, j) = w;
                            b(j, i) = w;
                        }
            } else if constexpr (std::is_same_v<T, GeometricGraph>) {
                const Box box{{0.0, 0.0}, v.side};
                const auto z = random_agents(n, box, 0.0, 0.0, v.seed.value_or(fallback_seed)).first;
                b = beta_matrix(z, 1.0, v.r_hat, v.zero_diagonal);
            } else {
                b = v.weights;
            }
            return b;
        },
        g);
}

}  // namespace detail

/// Materialises the system and initial state. `seed_override` replaces the
/// master seed (every derived sub-seed changes with it).
inline BuiltScenario build(const Scenario& s, std::optional<std::uint64_t> seed_override = {})
{
    validate(s);
    const std::uint64_t master = seed_override.value_or(s.seed);
    const std::size_t n = s.agents;
    const std::size_t m = s.viruses.size();

    BuiltScenario out;
    out.integrator = s.integrator;

    std::optional<MobilityConfig> mob;
    if (s.mobility) {
        const auto& e = *s.mobility;
        MobilityConfig cfg;
        cfg.box = e.box;
        cfg.r_hat = e.r_hat;
        cfg.zero_diagonal = e.zero_diagonal;
        if (e.positions) {
            cfg.positions = *e.positions;
            cfg.drifts = *e.drifts;
        } else {
            std::tie(cfg.positions, cfg.drifts) = random_agents(
                n, e.box, e.speed_min, e.speed_max, e.seed.value_or(derive_seed(master, "mobility")));
        }
        mob = std::move(cfg);
    }

    std::vector<Matrix> static_beta;
    std::vector<std::optional<double>> mobility_beta;
    for (std::size_t k = 0; k < m; ++k) {
        const auto& v = s.viruses[k];
        if (v.graph) {
            Matrix b = detail::generate_graph(*v.graph, n, derive_seed(master, "graph", k));
            for (auto& x : b.data())
                x *= v.beta;
            static_beta.push_back(std::move(b));
            mobility_beta.push_back(std::nullopt);
        } else {
            static_beta.emplace_back(n, n);
            mobility_beta.push_back(*v.mobility_beta);
        }
    }

    std::optional<PerturbationConfig> pert;
    if (s.perturbation && s.perturbation->magnitude > 0.0)
        pert = PerturbationConfig{s.perturbation->magnitude,
                                  s.perturbation->seed.value_or(derive_seed(master, "perturbation")),
                                  s.perturbation->interval};

    const bool varying = mob.has_value() || pert.has_value();
    std::vector<Matrix> beta0 = static_beta;
    if (varying) {
        out.source = std::make_shared<MobilityBetaSource>(mob, mobility_beta, static_beta, pert);
        beta0 = out.source->at(0.0);
        out.system.time_variation = out.source;
    }
    for (std::size_t k = 0; k < m; ++k) {
        const auto& v = s.viruses[k];
        Vector delta = std::holds_alternative<double>(v.delta) ? Vector(n, std::get<double>(v.delta))
                                                               : std::get<Vector>(v.delta);
        out.system.viruses.push_back({std::move(beta0[k]), std::move(delta)});
    }
    out.system.validate();

    out.initial.t = 0.0;
    std::visit(
        [&](const auto& init) {
            using T = std::decay_t<decltype(init)>;
            if constexpr (std::is_same_v<T, MatrixInitial>) {
                out.initial.p = init.p;
            } else if constexpr (std::is_same_v<T, UniformInitial>) {
                out.initial.p = Matrix(m, n, init.value);
            } else {
                std::mt19937_64 rng(init.seed.value_or(derive_seed(master, "initial")));
                std::exponential_distribution<double> expo(1.0);
                out.initial.p = Matrix(m, n);
                for (std::size_t i = 0; i < n; ++i) {
                    std::vector<double> w(m + 1);
                    double total = 0.0;
                    for (auto& x : w) {
                        x = expo(rng);
                        total += x;
                    }
                    for (std::size_t k = 0; k < m; ++k)
                        out.initial.p(k, i) = init.scale * w[k] / total;
                }
            }
        },
        s.initial);
    return out;
}

}  // namespace mvsis

#endif  // MVSIS_SCENARIO_HPP
