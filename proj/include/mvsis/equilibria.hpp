#ifndef MVSIS_EQUILIBRIA_HPP
#define MVSIS_EQUILIBRIA_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvsis/errors.hpp"
#include "mvsis/integrator.hpp"
#include "mvsis/matrix.hpp"
#include "mvsis/model.hpp"
#include "mvsis/spectral.hpp"

namespace mvsis {

/// Raised when a virus has no endemic equilibrium (s(B - D) <= 0).
class NoEquilibriumError : public PreconditionError {
public:
    using PreconditionError::PreconditionError;
};

enum class Outcome { all_eradicated, single_survivor, indeterminate };

inline std::string to_string(Outcome o)
{
    switch (o) {
    case Outcome::all_eradicated: return "AllEradicated";
    case Outcome::single_survivor: return "SingleSurvivor";
    case Outcome::indeterminate: return "Indeterminate";
    }
    return "Indeterminate";
}

struct VirusThreshold {
    std::size_t virus = 0;  // zero-based
    double s_value = 0.0;
    bool above_threshold = false;
};

struct ThresholdClassification {
    std::vector<VirusThreshold> viruses;
    Outcome outcome = Outcome::indeterminate;
    /// Zero-based survivor index when outcome == single_survivor.
    std::optional<std::size_t> survivor;
};

/// s-values within this distance of zero count as "not above threshold";
/// it absorbs the power-iteration error at exactly critical systems.
inline constexpr double threshold_tolerance = 1e-9;

/// Applies the eradication / single-survivor dichotomy to the static
/// infection matrices of `spec`. Every B^k must be irreducible.
inline ThresholdClassification classify(const SystemSpec& spec)
{
    spec.validate();
    ThresholdClassification out;
    std::size_t above = 0;
    for (std::size_t k = 0; k < spec.virus_count(); ++k) {
        const auto& v = spec.viruses[k];
        if (!is_strongly_connected(v.beta))
            throw PreconditionError("classify: infection matrix of virus " + std::to_string(k + 1) +
                                    " is reducible (its spread graph is not strongly connected)");
        const double s = spectral_abscissa(minus_diagonal(v.beta, v.delta)).value;
        const bool up = s > threshold_tolerance;
        out.viruses.push_back({k, s, up});
        if (up) {
            ++above;
            out.survivor = k;
        }
    }
    if (above == 0) {
        out.outcome = Outcome::all_eradicated;
        out.survivor.reset();
    } else if (above == 1) {
        out.outcome = Outcome::single_survivor;
    } else {
        out.outcome = Outcome::indeterminate;
        out.survivor.reset();
    }
    return out;
}

enum class EquilibriumKind { dfe, single_virus_ndfe, coexisting };

struct EquilibriumPoint {
    Matrix p_tilde;
    /// max |dp/dt| at p_tilde.
    double residual = 0.0;
    EquilibriumKind kind = EquilibriumKind::dfe;
    std::optional<std::size_t> virus;
    std::size_t iterations = 0;

    Vector virus_state(std::size_t k = 0) const
    {
        auto r = p_tilde.row(k);
        return {r.begin(), r.end()};
    }
};

struct NdfeOptions {
    double tolerance = 1e-12;
    std::size_t max_iterations = 1'000'000;
};

/// Endemic equilibrium of the single-virus model by the monotone fixed point
/// p_i <- (Bp)_i / (delta_i + (Bp)_i), started at p = 1/2.
inline EquilibriumPoint solve_single_virus_ndfe(const Matrix& beta, std::span<const double> delta,
                                                NdfeOptions opts = {})
{
    const VirusSpec v{beta, Vector(delta.begin(), delta.end())};
    v.validate();
    if (!is_strongly_connected(beta))
        throw PreconditionError("solve_single_virus_ndfe: infection matrix is reducible");
    const double s = spectral_abscissa(minus_diagonal(beta, delta)).value;
    if (!(s > threshold_tolerance))
        throw NoEquilibriumError("solve_single_virus_ndfe: s(B - D) = " + std::to_string(s) +
                                 " <= 0, the healthy state is the only equilibrium");

    const std::size_t n = delta.size();
    Vector p(n, 0.5);
    std::size_t it = 0;
    for (; it < opts.max_iterations; ++it) {
        const Vector bp = multiply(beta, p);
        double change = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double denom = delta[i] + bp[i];
            const double next = denom > 0.0 ? bp[i] / denom : 0.0;
            change = std::max(change, std::abs(next - p[i]));
            p[i] = next;
        }
        if (change < opts.tolerance)
            break;
    }
    if (it == opts.max_iterations)
        throw ConvergenceError("solve_single_virus_ndfe: no convergence after " +
                               std::to_string(opts.max_iterations) + " iterations");

    EquilibriumPoint out;
    out.p_tilde = Matrix(1, n);
    for (std::size_t i = 0; i < n; ++i)
        out.p_tilde(0, i) = p[i];
    const Matrix rate = derivative(out.p_tilde, std::span<const Matrix>(&beta, 1),
                                   std::vector<Vector>{Vector(delta.begin(), delta.end())});
    out.residual = norm_inf(rate.data());
    out.kind = EquilibriumKind::single_virus_ndfe;
    out.virus = 0;
    out.iterations = it + 1;
    if (*std::min_element(p.begin(), p.end()) <= 0.0)
        throw ConvergenceError("solve_single_virus_ndfe: iteration collapsed to a boundary point");
    return out;
}

/// The equilibrium (0, ..., p~^k, ..., 0) of the full system.
inline EquilibriumPoint single_survivor_equilibrium(const SystemSpec& spec, std::size_t k, NdfeOptions opts = {})
{
    spec.validate();
    if (k >= spec.virus_count())
        throw DimensionError("single_survivor_equilibrium: virus index out of range");
    const auto& v = spec.viruses[k];
    EquilibriumPoint single = solve_single_virus_ndfe(v.beta, v.delta, opts);
    EquilibriumPoint out;
    out.p_tilde = Matrix(spec.virus_count(), spec.agents());
    for (std::size_t i = 0; i < spec.agents(); ++i)
        out.p_tilde(k, i) = single.p_tilde(0, i);
    const auto beta = spec.static_beta();
    const auto delta = spec.healing();
    out.residual = norm_inf(derivative(out.p_tilde, beta, delta).data());
    out.kind = EquilibriumKind::single_virus_ndfe;
    out.virus = k;
    out.iterations = single.iterations;
    return out;
}

enum class ParallelStatus { parallel, not_parallel, not_applicable, not_converged };

inline std::string to_string(ParallelStatus s)
{
    switch (s) {
    case ParallelStatus::parallel: return "parallel";
    case ParallelStatus::not_parallel: return "not_parallel";
    case ParallelStatus::not_applicable: return "not_applicable";
    case ParallelStatus::not_converged: return "not_converged";
    }
    return "not_applicable";
}

struct ParallelOptions {
    double ratio_tolerance = 1e-5;
    double variation_tolerance = 1e-8;
    double floor = 1e-12;
};

struct ParallelCheck {
    ParallelStatus status = ParallelStatus::not_applicable;
    /// alpha_to_first[k] = mean_i p~^k_i / p~^1_i.
    Vector alpha_to_first;
    /// alpha(i, k) = alpha_to_first[i] / alpha_to_first[k].
    Matrix alpha;
    /// Shared direction: the first virus's final state.
    Vector base;
    double max_relative_deviation = 0.0;
    double tail_variation = 0.0;

    bool detected() const noexcept { return status == ParallelStatus::parallel; }
};

/// Tests whether every virus's final vector is a positive multiple of the
/// first virus's, after checking the trajectory tail has settled.
inline ParallelCheck detect_parallel_equilibrium(const Trajectory& traj, double tail_window,
                                                 ParallelOptions opts = {})
{
    if (traj.states.empty())
        throw PreconditionError("detect_parallel_equilibrium: empty trajectory");
    const InfectionState& last = traj.final_state();
    const std::size_t m = last.virus_count();
    const std::size_t n = last.agents();

    ParallelCheck out;
    for (std::size_t i = 0; i < n; ++i)
        if (!(last.p(0, i) >= opts.floor))
            return out;  // not applicable: division guard on the first virus

    for (std::size_t s = traj.states.size(); s-- > 0;) {
        if (traj.states[s].t < last.t - tail_window)
            break;
        for (std::size_t k = 0; k < m; ++k)
            for (std::size_t i = 0; i < n; ++i)
                out.tail_variation =
                    std::max(out.tail_variation, std::abs(traj.states[s].p(k, i) - last.p(k, i)));
    }

    out.base = last.virus(0);
    out.alpha_to_first.assign(m, 0.0);
    for (std::size_t k = 0; k < m; ++k) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            mean += last.p(k, i) / last.p(0, i);
        mean /= static_cast<double>(n);
        out.alpha_to_first[k] = mean;
        if (!(mean > opts.floor)) {
            out.max_relative_deviation = INFINITY;
            continue;
        }
        for (std::size_t i = 0; i < n; ++i)
            out.max_relative_deviation = std::max(out.max_relative_deviation,
                                                  std::abs(last.p(k, i) / last.p(0, i) - mean) / mean);
    }
    out.alpha = Matrix(m, m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t k = 0; k < m; ++k)
            out.alpha(i, k) = out.alpha_to_first[k] > 0.0 ? out.alpha_to_first[i] / out.alpha_to_first[k] : 0.0;

    if (out.tail_variation > opts.variation_tolerance)
        out.status = ParallelStatus::not_converged;
    else if (out.max_relative_deviation < opts.ratio_tolerance)
        out.status = ParallelStatus::parallel;
    else
        out.status = ParallelStatus::not_parallel;
    return out;
}

}  // namespace mvsis

#endif  // MVSIS_EQUILIBRIA_HPP
