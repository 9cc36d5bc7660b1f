#ifndef MVSIS_CONTROL_HPP
#define MVSIS_CONTROL_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mvsis/errors.hpp"
#include "mvsis/integrator.hpp"
#include "mvsis/matrix.hpp"

namespace mvsis {

struct ControlConfig {
    /// Total antidote available to one virus: sum_i u_i <= budget.
    double budget = 0.0;
    double kappa = 0.05;
    /// epsilon in the reweighting w_i = 1 / (|u_i| + epsilon).
    double weight_eps = 1e-4;
    /// Reweighting stops once ||u_k - u_{k-1}||_2 <= stop_eps.
    double stop_eps = 1e-8;
    std::size_t max_reweight_iters = 50;

    void validate() const
    {
        if (!(budget >= 0.0) || !std::isfinite(budget))
            throw PreconditionError("control: budget must be finite and non-negative");
        if (!(kappa >= 0.0) || !std::isfinite(kappa))
            throw PreconditionError("control: kappa must be finite and non-negative");
        if (!(weight_eps > 0.0))
            throw PreconditionError("control: weight_eps must be positive");
        if (!(stop_eps > 0.0))
            throw PreconditionError("control: stop_eps must be positive");
        if (max_reweight_iters == 0)
            throw PreconditionError("control: max_reweight_iters must be at least 1");
    }

    friend bool operator==(const ControlConfig&, const ControlConfig&) = default;
};

struct Allocation {
    Vector u;
    /// max_i (r_i - u_i) at the returned u.
    double eta = 0.0;
    /// eta + kappa * sum_i w_i u_i with the weights used in the last solve
    /// (equals eta for the unweighted problem).
    double objective = 0.0;
    /// Solves performed; 1 for the direct solvers.
    std::size_t iterations = 1;
    /// Objective after every reweighting solve.
    std::vector<double> objective_history;

    std::size_t support() const
    {
        return static_cast<std::size_t>(std::count_if(u.begin(), u.end(), [](double x) { return x > 0.0; }));
    }

    double spent() const { return std::accumulate(u.begin(), u.end(), 0.0); }

    /// True when objective_history never increases by more than `slack`.
    bool monotone(double slack = 1e-12) const
    {
        for (std::size_t i = 1; i < objective_history.size(); ++i)
            if (objective_history[i] > objective_history[i - 1] + slack)
                return false;
        return true;
    }
};

/// r_i = sum_j beta(i, j) - delta_i, the Gershgorin bound on row i of B - D.
inline Vector gershgorin_excess(const Matrix& beta_now, std::span<const double> delta)
{
    if (!beta_now.square() || beta_now.rows() != delta.size())
        throw DimensionError("gershgorin_excess: beta and delta dimensions differ");
    Vector r(delta.size());
    for (std::size_t i = 0; i < delta.size(); ++i) {
        double s = 0.0;
        for (double b : beta_now.row(i))
            s += b;
        r[i] = s - delta[i];
    }
    return r;
}

namespace detail {

inline void check_excess(std::span<const double> r, double budget)
{
    if (r.empty())
        throw DimensionError("control: excess vector is empty");
    for (double v : r)
        if (!std::isfinite(v))
            throw PreconditionError("control: excess vector has non-finite entries");
    if (!(budget >= 0.0) || !std::isfinite(budget))
        throw PreconditionError("control: budget must be finite and non-negative");
}

inline Vector excess_above(std::span<const double> r, double eta)
{
    Vector u(r.size());
    for (std::size_t i = 0; i < r.size(); ++i)
        u[i] = std::max(0.0, r[i] - eta);
    return u;
}

}  // namespace detail

/// Level eta with sum_i max(0, r_i - eta) = budget (max r when the budget is zero).
inline double water_fill_level(std::span<const double> r, double budget)
{
    detail::check_excess(r, budget);
    Vector sorted(r.begin(), r.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    if (budget == 0.0)
        return sorted.front();
    double prefix = 0.0;
    for (std::size_t k = 1; k <= sorted.size(); ++k) {
        prefix += sorted[k - 1];
        const double level = (prefix - budget) / static_cast<double>(k);
        if (k == sorted.size() || level >= sorted[k])
            return level;
    }
    return sorted.back();  // unreachable
}

/// Minimise eta = max_i (r_i - u_i) subject to sum u <= budget, u >= 0.
inline Allocation solve_problem1(std::span<const double> r, double budget)
{
    const double level = water_fill_level(r, budget);
    Allocation a;
    a.u = detail::excess_above(r, level);
    a.eta = level;
    a.objective = level;
    a.objective_history = {level};
    return a;
}

/// Minimise eta + kappa * sum_i w_i u_i subject to eta >= r_i - u_i,
/// sum u <= budget, u >= 0.
///
/// For fixed eta the cheapest feasible u is max(0, r - eta), so the problem
/// reduces to the convex piecewise-linear
///   f(eta) = eta + kappa * sum_i w_i max(0, r_i - eta)
/// on [water-fill level, max r]; its minimum sits on a breakpoint.
inline Allocation solve_problem2(std::span<const double> r, double budget, std::span<const double> weights,
                                 double kappa)
{
    detail::check_excess(r, budget);
    if (weights.size() != r.size())
        throw DimensionError("solve_problem2: weights and excess differ in length");
    for (double w : weights)
        if (!(w > 0.0) || !std::isfinite(w))
            throw PreconditionError("solve_problem2: weights must be positive");
    if (!(kappa >= 0.0) || !std::isfinite(kappa))
        throw PreconditionError("solve_problem2: kappa must be non-negative");

    const double lo = water_fill_level(r, budget);
    const double hi = *std::max_element(r.begin(), r.end());

    auto f = [&](double eta) {
        double pen = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i)
            pen += weights[i] * std::max(0.0, r[i] - eta);
        return eta + kappa * pen;
    };

    Vector candidates{lo, hi};
    for (double v : r)
        if (v > lo && v < hi)
            candidates.push_back(v);
    std::sort(candidates.begin(), candidates.end());

    double best_eta = lo;
    double best = f(lo);
    for (double eta : candidates) {
        const double val = f(eta);
        if (val < best) {
            best = val;
            best_eta = eta;
        }
    }

    Allocation a;
    a.u = detail::excess_above(r, best_eta);
    a.eta = best_eta;
    a.objective = best;
    a.objective_history = {best};
    return a;
}

/// Reweighted-l1 loop: start from uniform weights 1/n, solve the weighted
/// problem, reweight with 1 / (|u_i| + weight_eps), repeat until two
/// successive allocations agree to stop_eps.
inline Allocation algorithm1(std::span<const double> r, const ControlConfig& config)
{
    config.validate();
    const std::size_t n = r.size();
    Vector w(n, 1.0 / static_cast<double>(n));
    Allocation current;
    Vector previous;
    std::vector<double> history;

    for (std::size_t it = 1; it <= config.max_reweight_iters; ++it) {
        current = solve_problem2(r, config.budget, w, config.kappa);
        history.push_back(current.objective);
        current.iterations = it;
        if (!previous.empty()) {
            double d = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                d += (current.u[i] - previous[i]) * (current.u[i] - previous[i]);
            if (std::sqrt(d) <= config.stop_eps)
                break;
        }
        for (std::size_t i = 0; i < n; ++i)
            w[i] = 1.0 / (std::abs(current.u[i]) + config.weight_eps);
        previous = current.u;
    }
    current.objective_history = std::move(history);
    return current;
}

inline Allocation algorithm1(std::span<const double> r, double budget, double kappa, ControlConfig config)
{
    config.budget = budget;
    config.kappa = kappa;
    return algorithm1(r, config);
}

/// eta + kappa * ||u||_0: the cardinality-penalised objective the
/// reweighting approximates.
inline double cardinality_objective(const Allocation& a, double kappa)
{
    return a.eta + kappa * static_cast<double>(a.support());
}

enum class ControlSolver { none, problem1, algorithm1 };

inline std::string to_string(ControlSolver s)
{
    switch (s) {
    case ControlSolver::none: return "none";
    case ControlSolver::problem1: return "p1";
    case ControlSolver::algorithm1: return "alg1";
    }
    return "none";
}

inline ControlSolver parse_control_solver(const std::string& s)
{
    if (s == "none")
        return ControlSolver::none;
    if (s == "p1" || s == "problem1")
        return ControlSolver::problem1;
    if (s == "alg1" || s == "algorithm1")
        return ControlSolver::algorithm1;
    throw ValidationError("unknown control solver '" + s + "' (expected none, p1 or alg1)");
}

inline Allocation allocate(ControlSolver solver, std::span<const double> r, const ControlConfig& config)
{
    switch (solver) {
    case ControlSolver::problem1: return solve_problem1(r, config.budget);
    case ControlSolver::algorithm1: return algorithm1(r, config);
    case ControlSolver::none: break;
    }
    Allocation a;
    a.u.assign(r.size(), 0.0);
    a.eta = *std::max_element(r.begin(), r.end());
    a.objective = a.eta;
    a.objective_history = {a.eta};
    return a;
}

/// Piecewise-constant antidote schedule: recomputes per-virus allocations
/// from the current infection matrices at t0, t0 + interval, ... and holds
/// them in between. interval == 0 recomputes at every call.
class AntidotePolicy final : public HealingController {
public:
    AntidotePolicy(ControlSolver solver, std::vector<ControlConfig> per_virus, std::vector<Vector> healing,
                   double interval)
        : solver_(solver), config_(std::move(per_virus)), healing_(std::move(healing)), interval_(interval)
    {
        if (config_.size() != healing_.size())
            throw DimensionError("control policy: one control config per virus is required");
        for (const auto& c : config_)
            c.validate();
        if (!(interval_ >= 0.0))
            throw PreconditionError("control policy: interval must be non-negative");
    }

    const ControlRecord& update(double t, std::span<const Matrix> beta_now, bool& recomputed) override
    {
        recomputed = false;
        if (started_ && interval_ > 0.0 && t < next_ - 1e-9 * std::max(1.0, std::abs(t)))
            return record_;
        if (started_ && interval_ == 0.0 && t == record_.t)
            return record_;
        if (!started_) {
            started_ = true;
            origin_ = t;
        }
        recompute(t, beta_now);
        recomputed = true;
        if (interval_ > 0.0) {
            ++count_;
            next_ = origin_ + static_cast<double>(count_) * interval_;
        }
        return record_;
    }

    const std::vector<Allocation>& allocations() const noexcept { return last_; }

private:
    void recompute(double t, std::span<const Matrix> beta_now)
    {
        if (beta_now.size() != healing_.size())
            throw DimensionError("control policy: wrong number of infection matrices");
        const std::size_t m = healing_.size();
        record_.t = t;
        record_.u.assign(m, {});
        record_.eta.assign(m, 0.0);
        record_.objective.assign(m, 0.0);
        last_.clear();
        for (std::size_t k = 0; k < m; ++k) {
            const Vector r = gershgorin_excess(beta_now[k], healing_[k]);
            Allocation a = allocate(solver_, r, config_[k]);
            record_.u[k] = a.u;
            record_.eta[k] = a.eta;
            record_.objective[k] = a.objective;
            last_.push_back(std::move(a));
        }
    }

    ControlSolver solver_;
    std::vector<ControlConfig> config_;
    std::vector<Vector> healing_;
    double interval_;
    bool started_ = false;
    double origin_ = 0.0;
    double next_ = 0.0;
    std::size_t count_ = 0;
    ControlRecord record_;
    std::vector<Allocation> last_;
};

}  // namespace mvsis

#endif  // MVSIS_CONTROL_HPP
