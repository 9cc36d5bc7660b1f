#ifndef MVSIS_INTEGRATOR_HPP
#define MVSIS_INTEGRATOR_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvsis/errors.hpp"
#include "mvsis/matrix.hpp"
#include "mvsis/model.hpp"
#include "mvsis/spectral.hpp"

namespace mvsis {

enum class Method { rk4, euler };

struct IntegratorConfig {
    double dt = 1e-3;
    double t_end = 0.0;
    Method method = Method::rk4;
    double clamp_tol = 1e-9;
    /// Keep every k-th step in the trajectory (the final step is always kept).
    std::size_t record_every = 1;
    /// Record s(B^k(t) - D^k - U^k(t)) at every k-th recorded sample; 0 disables.
    std::size_t spectral_every = 0;

    void validate() const
    {
        if (!(dt > 0.0) || !std::isfinite(dt))
            throw PreconditionError("integrator: dt must be positive");
        if (!(t_end >= 0.0) || !std::isfinite(t_end))
            throw PreconditionError("integrator: t_end must be non-negative");
        if (!(clamp_tol >= 0.0))
            throw PreconditionError("integrator: clamp_tol must be non-negative");
        if (record_every == 0)
            throw PreconditionError("integrator: record_every must be at least 1");
    }

    friend bool operator==(const IntegratorConfig&, const IntegratorConfig&) = default;
};

/// One control recomputation: per-virus healing boosts and solver outcome.
struct ControlRecord {
    double t = 0.0;
    std::vector<Vector> u;
    Vector eta;
    Vector objective;
};

/// Supplies additive healing boosts u^k(t). Owned by a single simulation.
class HealingController {
public:
    virtual ~HealingController() = default;
    /// Returns the boost in force at time t; `recomputed` is set when a new
    /// allocation was computed at this call.
    virtual const ControlRecord& update(double t, std::span<const Matrix> beta_now, bool& recomputed) = 0;
};

struct SpectralSample {
    double t = 0.0;
    Vector s_values;
};

struct ClampStats {
    std::size_t repairs = 0;
    /// Largest pre-repair distance outside the simplex over the whole run.
    double max_violation = 0.0;
    std::size_t warnings = 0;
    std::optional<double> first_warning_t;
};

struct Trajectory {
    std::vector<double> times;
    std::vector<InfectionState> states;
    std::vector<SpectralSample> spectral;
    std::vector<ControlRecord> control;
    ClampStats clamp;

    const InfectionState& final_state() const { return states.back(); }
};

struct StepOutcome {
    InfectionState state;
    /// Distance outside the simplex before repair (0 when no repair was needed).
    double violation = 0.0;
};

namespace detail {

inline void axpy_into(Matrix& out, const Matrix& x, double a, const Matrix& y)
{
    for (std::size_t k = 0; k < out.rows(); ++k) {
        auto o = out.row(k);
        auto xr = x.row(k);
        auto yr = y.row(k);
        for (std::size_t i = 0; i < o.size(); ++i)
            o[i] = xr[i] + a * yr[i];
    }
}

/// Clamp to [0, 1] and rescale rows whose sum exceeds 1. Returns the
/// distance the raw state was outside the simplex.
inline double repair_simplex(Matrix& p)
{
    double violation = 0.0;
    for (std::size_t i = 0; i < p.cols(); ++i) {
        double total = 0.0;
        for (std::size_t k = 0; k < p.rows(); ++k) {
            double& v = p(k, i);
            total += v;
            if (v < 0.0) {
                violation = std::max(violation, -v);
                v = 0.0;
            } else if (v > 1.0) {
                violation = std::max(violation, v - 1.0);
                v = 1.0;
            }
        }
        violation = std::max(violation, total - 1.0);
        double clamped = 0.0;
        for (std::size_t k = 0; k < p.rows(); ++k)
            clamped += p(k, i);
        if (clamped > 1.0)
            for (std::size_t k = 0; k < p.rows(); ++k)
                p(k, i) /= clamped;
    }
    return violation;
}

}  // namespace detail

/// One explicit step with infection matrices sampled by `beta_at` at the
/// method's stage times, followed by simplex repair.
template <typename BetaAt>
StepOutcome step_with(const InfectionState& state, BetaAt&& beta_at, std::span<const Vector> healing,
                      double dt, Method method)
{
    if (!(dt > 0.0))
        throw PreconditionError("step: dt must be positive");
    const double t = state.t;
    Matrix next;
    if (method == Method::euler) {
        const Matrix k1 = derivative(state.p, beta_at(t), healing);
        next = state.p;
        detail::axpy_into(next, state.p, dt, k1);
    } else {
        const auto b0 = beta_at(t);
        const auto bh = beta_at(t + 0.5 * dt);
        const auto b1 = beta_at(t + dt);
        Matrix tmp = state.p;
        const Matrix k1 = derivative(state.p, b0, healing);
        detail::axpy_into(tmp, state.p, 0.5 * dt, k1);
        const Matrix k2 = derivative(tmp, bh, healing);
        detail::axpy_into(tmp, state.p, 0.5 * dt, k2);
        const Matrix k3 = derivative(tmp, bh, healing);
        detail::axpy_into(tmp, state.p, dt, k3);
        const Matrix k4 = derivative(tmp, b1, healing);
        next = state.p;
        for (std::size_t k = 0; k < next.rows(); ++k) {
            auto o = next.row(k);
            for (std::size_t i = 0; i < o.size(); ++i)
                o[i] += dt / 6.0 * (k1(k, i) + 2.0 * k2(k, i) + 2.0 * k3(k, i) + k4(k, i));
        }
    }

    for (double v : next.data())
        if (!std::isfinite(v))
            throw IntegrationBlowup(t, dt);

    StepOutcome out;
    out.violation = detail::repair_simplex(next);
    out.state = {std::move(next), t + dt};
    return out;
}

/// Step with fixed infection matrices and the spec's own healing rates.
inline StepOutcome step(const InfectionState& state, const SystemSpec& spec, std::span<const Matrix> beta_now,
                        double dt, Method method = Method::rk4)
{
    if (state.virus_count() != spec.virus_count() || state.agents() != spec.agents())
        throw DimensionError("step: state does not match the system dimensions");
    const auto healing = spec.healing();
    return step_with(state, [&](double) { return std::vector<Matrix>(beta_now.begin(), beta_now.end()); },
                     healing, dt, method);
}

/// s(B^k - D^k - U^k) for each virus.
inline Vector abscissa_per_virus(std::span<const Matrix> beta, std::span<const Vector> healing)
{
    Vector s(beta.size());
    for (std::size_t k = 0; k < beta.size(); ++k)
        s[k] = spectral_abscissa(minus_diagonal(beta[k], healing[k])).value;
    return s;
}

inline Trajectory simulate(const SystemSpec& spec, const InfectionState& initial, const IntegratorConfig& config,
                           HealingController* control = nullptr)
{
    spec.validate();
    config.validate();
    if (initial.virus_count() != spec.virus_count() || initial.agents() != spec.agents())
        throw DimensionError("simulate: initial state is " + std::to_string(initial.virus_count()) + "x" +
                             std::to_string(initial.agents()) + ", expected " +
                             std::to_string(spec.virus_count()) + "x" + std::to_string(spec.agents()));
    if (!initial.in_simplex(1e-12))
        throw PreconditionError("simulate: initial state lies outside the simplex set");

    const std::size_t m = spec.virus_count();
    const std::size_t n = spec.agents();
    const auto base_healing = spec.healing();
    auto beta_at = [&](double t) { return spec.beta_at(t); };

    Trajectory traj;
    std::vector<Vector> healing = base_healing;
    std::size_t recorded = 0;

    auto record = [&](const InfectionState& s, std::span<const Matrix> beta_now) {
        traj.times.push_back(s.t);
        traj.states.push_back(s);
        if (config.spectral_every > 0 && recorded % config.spectral_every == 0)
            traj.spectral.push_back({s.t, abscissa_per_virus(beta_now, healing)});
        ++recorded;
    };

    auto apply_control = [&](double t, std::span<const Matrix> beta_now) {
        if (!control)
            return;
        bool recomputed = false;
        const ControlRecord& rec = control->update(t, beta_now, recomputed);
        if (rec.u.size() != m)
            throw DimensionError("simulate: controller returned boosts for the wrong number of viruses");
        for (std::size_t k = 0; k < m; ++k) {
            if (rec.u[k].size() != n)
                throw DimensionError("simulate: controller boost has the wrong length");
            for (std::size_t i = 0; i < n; ++i)
                healing[k][i] = base_healing[k][i] + rec.u[k][i];
        }
        if (recomputed)
            traj.control.push_back(rec);
    };

    InfectionState state = initial;
    {
        const auto b0 = beta_at(state.t);
        apply_control(state.t, b0);
        record(state, b0);
    }

    const double t0 = initial.t;
    const double horizon = config.t_end;
    if (horizon <= 0.0)
        return traj;

    const auto steps = static_cast<std::size_t>(std::ceil(horizon / config.dt - 1e-9));
    for (std::size_t s = 1; s <= steps; ++s) {
        const double t_next = (s == steps) ? t0 + horizon : t0 + static_cast<double>(s) * config.dt;
        const double h = t_next - state.t;
        StepOutcome out = step_with(state, beta_at, healing, h, config.method);
        out.state.t = t_next;
        if (out.violation > 0.0) {
            ++traj.clamp.repairs;
            traj.clamp.max_violation = std::max(traj.clamp.max_violation, out.violation);
            if (out.violation > config.clamp_tol) {
                ++traj.clamp.warnings;
                if (!traj.clamp.first_warning_t)
                    traj.clamp.first_warning_t = t_next;
            }
        }
        state = std::move(out.state);

        const bool keep = s % config.record_every == 0 || s == steps;
        if (control || (keep && config.spectral_every > 0)) {
            const auto b = beta_at(state.t);
            apply_control(state.t, b);
            if (keep)
                record(state, b);
        } else if (keep) {
            record(state, {});
        }
    }
    return traj;
}

}  // namespace mvsis

#endif  // MVSIS_INTEGRATOR_HPP
