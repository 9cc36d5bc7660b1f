#ifndef MVSIS_MODEL_HPP
#define MVSIS_MODEL_HPP

#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mvsis/errors.hpp"
#include "mvsis/matrix.hpp"

namespace mvsis {

/// One virus: infection rates beta(i, j) (arc j -> i) and healing rates delta(i).
struct VirusSpec {
    Matrix beta;
    Vector delta;

    std::size_t agents() const noexcept { return delta.size(); }

    void validate() const
    {
        if (!beta.square() || beta.rows() != delta.size())
            throw DimensionError("virus spec: beta is " + std::to_string(beta.rows()) + "x" +
                                 std::to_string(beta.cols()) + " but delta has " +
                                 std::to_string(delta.size()) + " entries");
        if (!is_nonnegative(beta))
            throw PreconditionError("virus spec: infection rates must be finite and non-negative");
        for (double d : delta)
            if (!(d >= 0.0) || !std::isfinite(d))
                throw PreconditionError("virus spec: healing rates must be finite and non-negative");
    }

    friend bool operator==(const VirusSpec&, const VirusSpec&) = default;
};

/// Source of time-varying infection matrices, one per virus.
/// Implementations are pure functions of t so a shared source can be
/// evaluated from concurrent simulations.
class BetaSource {
public:
    virtual ~BetaSource() = default;
    virtual std::vector<Matrix> at(double t) const = 0;
};

struct SystemSpec {
    std::vector<VirusSpec> viruses;
    /// When set, overrides the static beta of every virus at each evaluation time.
    std::shared_ptr<const BetaSource> time_variation;

    std::size_t virus_count() const noexcept { return viruses.size(); }
    std::size_t agents() const noexcept { return viruses.empty() ? 0 : viruses.front().agents(); }

    void validate() const
    {
        if (viruses.empty())
            throw PreconditionError("system spec: at least one virus is required");
        const std::size_t n = agents();
        if (n == 0)
            throw PreconditionError("system spec: at least one agent is required");
        for (std::size_t k = 0; k < viruses.size(); ++k) {
            viruses[k].validate();
            if (viruses[k].agents() != n)
                throw DimensionError("system spec: virus " + std::to_string(k + 1) + " has " +
                                     std::to_string(viruses[k].agents()) + " agents, expected " +
                                     std::to_string(n));
        }
    }

    std::vector<Matrix> static_beta() const
    {
        std::vector<Matrix> out;
        out.reserve(viruses.size());
        for (const auto& v : viruses)
            out.push_back(v.beta);
        return out;
    }

    std::vector<Matrix> beta_at(double t) const
    {
        return time_variation ? time_variation->at(t) : static_beta();
    }

    std::vector<Vector> healing() const
    {
        std::vector<Vector> out;
        out.reserve(viruses.size());
        for (const auto& v : viruses)
            out.push_back(v.delta);
        return out;
    }
};

/// p(k, i): fraction of agent i carrying virus k.
struct InfectionState {
    Matrix p;
    double t = 0.0;

    std::size_t virus_count() const noexcept { return p.rows(); }
    std::size_t agents() const noexcept { return p.cols(); }

    static InfectionState healthy(std::size_t viruses, std::size_t agents, double t = 0.0)
    {
        return {Matrix(viruses, agents, 0.0), t};
    }

    /// Largest violation of the simplex constraints p >= 0, sum_k p(k, i) <= 1.
    double simplex_violation() const
    {
        double worst = 0.0;
        for (std::size_t i = 0; i < agents(); ++i) {
            double total = 0.0;
            for (std::size_t k = 0; k < virus_count(); ++k) {
                const double v = p(k, i);
                if (!std::isfinite(v))
                    return INFINITY;
                worst = std::max({worst, -v, v - 1.0});
                total += v;
            }
            worst = std::max(worst, total - 1.0);
        }
        return worst;
    }

    bool in_simplex(double tol = 0.0) const { return simplex_violation() <= tol; }

    Vector virus(std::size_t k) const
    {
        auto r = p.row(k);
        return {r.begin(), r.end()};
    }

    friend bool operator==(const InfectionState&, const InfectionState&) = default;
};

/// Right-hand side of the coupled SIS model
///   dp(k,i)/dt = (1 - sum_l p(l,i)) * sum_j beta_k(i,j) p(k,j) - delta_k(i) p(k,i).
/// `delta` already includes any control boost.
inline Matrix derivative(const Matrix& p, std::span<const Matrix> beta, std::span<const Vector> delta)
{
    const std::size_t m = p.rows();
    const std::size_t n = p.cols();
    if (beta.size() != m || delta.size() != m)
        throw DimensionError("derivative: state has " + std::to_string(m) + " viruses but " +
                             std::to_string(beta.size()) + " infection matrices were supplied");
    for (std::size_t k = 0; k < m; ++k)
        if (beta[k].rows() != n || beta[k].cols() != n || delta[k].size() != n)
            throw DimensionError("derivative: virus " + std::to_string(k + 1) +
                                 " does not match the state's " + std::to_string(n) + " agents");

    Vector susceptible(n, 1.0);
    for (std::size_t k = 0; k < m; ++k)
        for (std::size_t i = 0; i < n; ++i)
            susceptible[i] -= p(k, i);

    Matrix rate(m, n);
    for (std::size_t k = 0; k < m; ++k) {
        const auto pk = p.row(k);
        for (std::size_t i = 0; i < n; ++i) {
            const auto bi = beta[k].row(i);
            double pressure = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                pressure += bi[j] * pk[j];
            rate(k, i) = susceptible[i] * pressure - delta[k][i] * pk[i];
        }
    }
    return rate;
}

inline Matrix derivative(const InfectionState& state, const SystemSpec& spec,
                         std::span<const Matrix> beta_now)
{
    if (state.virus_count() != spec.virus_count() || state.agents() != spec.agents())
        throw DimensionError("derivative: state is " + std::to_string(state.virus_count()) + "x" +
                             std::to_string(state.agents()) + " but spec has " +
                             std::to_string(spec.virus_count()) + " viruses over " +
                             std::to_string(spec.agents()) + " agents");
    const auto delta = spec.healing();
    return derivative(state.p, beta_now, delta);
}

inline Matrix derivative(const InfectionState& state, const SystemSpec& spec)
{
    return derivative(state, spec, spec.beta_at(state.t));
}

}  // namespace mvsis

#endif  // MVSIS_MODEL_HPP
