#ifndef MVSIS_MOBILITY_HPP
#define MVSIS_MOBILITY_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mvsis/errors.hpp"
#include "mvsis/matrix.hpp"
#include "mvsis/model.hpp"

namespace mvsis {

using Point = std::array<double, 2>;

/// Axis-aligned square of side `side` centred at `center`.
struct Box {
    Point center{0.0, 0.0};
    double side = 1.0;

    double lower(std::size_t l) const { return center[l] - 0.5 * side; }
    double upper(std::size_t l) const { return center[l] + 0.5 * side; }

    bool contains(const Point& z) const
    {
        return z[0] >= lower(0) && z[0] <= upper(0) && z[1] >= lower(1) && z[1] <= upper(1);
    }

    friend bool operator==(const Box&, const Box&) = default;
};

struct MobilityConfig {
    std::vector<Point> positions;
    std::vector<Point> drifts;
    Box box;
    double r_hat = 10.0;
    /// Zero the self-infection entries beta_ii.
    bool zero_diagonal = false;

    std::size_t agents() const noexcept { return positions.size(); }

    void validate() const
    {
        if (!(box.side > 0.0))
            throw PreconditionError("mobility: box side must be positive");
        if (!(r_hat > 0.0))
            throw PreconditionError("mobility: cutoff radius must be positive");
        if (drifts.size() != positions.size())
            throw DimensionError("mobility: " + std::to_string(positions.size()) + " positions but " +
                                 std::to_string(drifts.size()) + " drifts");
        for (std::size_t i = 0; i < positions.size(); ++i)
            if (!box.contains(positions[i]))
                throw PreconditionError("mobility: agent " + std::to_string(i + 1) + " starts outside the box");
    }
};

/// Uniform positions in the box; drift speeds uniform in [speed_min, speed_max]
/// with uniformly random headings.
inline std::pair<std::vector<Point>, std::vector<Point>> random_agents(std::size_t n, const Box& box,
                                                                       double speed_min, double speed_max,
                                                                       std::uint64_t seed)
{
    if (!(speed_min >= 0.0) || !(speed_max >= speed_min))
        throw PreconditionError("mobility: need 0 <= speed_min <= speed_max");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Point> z(n), phi(n);
    for (std::size_t i = 0; i < n; ++i) {
        z[i] = {box.lower(0) + box.side * unit(rng), box.lower(1) + box.side * unit(rng)};
        const double speed = speed_min + (speed_max - speed_min) * unit(rng);
        const double heading = 2.0 * std::numbers::pi * unit(rng);
        phi[i] = {speed * std::cos(heading), speed * std::sin(heading)};
    }
    return {std::move(z), std::move(phi)};
}

/// Moves every agent by drift * dt inside the box. Wall crossings reflect
/// the overshoot back into the box and negate the drift component; any
/// number of crossings per step is handled by folding on the period 2 * side.
inline std::pair<std::vector<Point>, std::vector<Point>> advance_positions(std::vector<Point> positions,
                                                                           std::vector<Point> drifts,
                                                                           double dt, const Box& box)
{
    if (positions.size() != drifts.size())
        throw DimensionError("advance_positions: positions and drifts differ in length");
    const double period = 2.0 * box.side;
    for (std::size_t i = 0; i < positions.size(); ++i) {
        for (std::size_t l = 0; l < 2; ++l) {
            const double lo = box.lower(l);
            double y = std::fmod(positions[i][l] - lo + drifts[i][l] * dt, period);
            if (y < 0.0)
                y += period;
            if (y >= box.side) {
                positions[i][l] = lo + (period - y);
                drifts[i][l] = -drifts[i][l];
            } else {
                positions[i][l] = lo + y;
            }
            positions[i][l] = std::clamp(positions[i][l], lo, box.upper(l));
        }
    }
    return {std::move(positions), std::move(drifts)};
}

/// beta_ij = beta * exp(-|z_i - z_j|^2) when |z_i - z_j| < r_hat, else 0.
inline Matrix beta_matrix(const std::vector<Point>& positions, double beta_base, double r_hat,
                          bool zero_diagonal = false)
{
    if (!(beta_base >= 0.0))
        throw PreconditionError("beta_matrix: beta must be non-negative");
    const std::size_t n = positions.size();
    Matrix b(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            const double dx = positions[i][0] - positions[j][0];
            const double dy = positions[i][1] - positions[j][1];
            const double d2 = dx * dx + dy * dy;
            const double v = std::sqrt(d2) < r_hat ? beta_base * std::exp(-d2) : 0.0;
            b(i, j) = v;
            b(j, i) = v;
        }
        if (zero_diagonal)
            b(i, i) = 0.0;
    }
    return b;
}

/// beta + Delta with Delta_ij uniform in [-magnitude * beta_ij, magnitude * beta_ij].
inline Matrix perturb_beta(const Matrix& beta, double magnitude, std::uint64_t seed)
{
    if (!(magnitude >= 0.0 && magnitude <= 1.0))
        throw PreconditionError("perturb_beta: magnitude must lie in [0, 1]");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    Matrix out = beta;
    for (std::size_t i = 0; i < beta.rows(); ++i)
        for (std::size_t j = 0; j < beta.cols(); ++j) {
            const double delta = magnitude * beta(i, j) * unit(rng);
            out(i, j) = std::max(0.0, beta(i, j) + delta);
        }
    return out;
}

struct PerturbationConfig {
    double magnitude = 0.0;
    std::uint64_t seed = 0;
    /// Delta is redrawn at t = 0, interval, 2 * interval, ...
    double interval = 1.0;

    friend bool operator==(const PerturbationConfig&, const PerturbationConfig&) = default;
};

/// Infection matrices for a mix of mobility-driven and static viruses,
/// optionally with a piecewise-constant bounded perturbation. Positions at
/// time t are obtained in closed form from the initial state, so `at` is a
/// pure function of t.
class MobilityBetaSource final : public BetaSource {
public:
    /// `mobility_beta[k]` set means virus k spreads over the proximity graph
    /// with that base rate; otherwise `static_beta[k]` is used.
    MobilityBetaSource(std::optional<MobilityConfig> mobility, std::vector<std::optional<double>> mobility_beta,
                       std::vector<Matrix> static_beta, std::optional<PerturbationConfig> perturbation = {})
        : mobility_(std::move(mobility)), mobility_beta_(std::move(mobility_beta)),
          static_beta_(std::move(static_beta)), perturbation_(perturbation)
    {
        if (mobility_beta_.size() != static_beta_.size())
            throw DimensionError("mobility source: per-virus lists differ in length");
        if (mobility_)
            mobility_->validate();
        for (std::size_t k = 0; k < mobility_beta_.size(); ++k)
            if (mobility_beta_[k] && !mobility_)
                throw PreconditionError("mobility source: virus " + std::to_string(k + 1) +
                                        " uses mobility but no mobility model is configured");
        if (perturbation_) {
            if (!(perturbation_->magnitude >= 0.0 && perturbation_->magnitude <= 1.0))
                throw PreconditionError("perturbation magnitude must lie in [0, 1]");
            if (!(perturbation_->interval > 0.0))
                throw PreconditionError("perturbation interval must be positive");
        }
    }

    std::vector<Point> positions_at(double t) const
    {
        if (!mobility_)
            return {};
        return advance_positions(mobility_->positions, mobility_->drifts, t, mobility_->box).first;
    }

    std::vector<Matrix> at(double t) const override
    {
        std::vector<Matrix> out;
        out.reserve(static_beta_.size());
        std::vector<Point> z;
        if (mobility_)
            z = positions_at(t);
        for (std::size_t k = 0; k < static_beta_.size(); ++k) {
            Matrix b = mobility_beta_[k]
                           ? beta_matrix(z, *mobility_beta_[k], mobility_->r_hat, mobility_->zero_diagonal)
                           : static_beta_[k];
            if (perturbation_ && perturbation_->magnitude > 0.0) {
                const auto slot = static_cast<std::uint64_t>(std::floor(t / perturbation_->interval));
                std::seed_seq seq{static_cast<std::uint32_t>(perturbation_->seed),
                                  static_cast<std::uint32_t>(perturbation_->seed >> 32),
                                  static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(slot),
                                  static_cast<std::uint32_t>(slot >> 32)};
                std::array<std::uint32_t, 2> words{};
                seq.generate(words.begin(), words.end());
                const std::uint64_t seed = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
                b = perturb_beta(b, perturbation_->magnitude, seed);
            }
            out.push_back(std::move(b));
        }
        return out;
    }

    const std::optional<MobilityConfig>& mobility() const noexcept { return mobility_; }

private:
    std::optional<MobilityConfig> mobility_;
    std::vector<std::optional<double>> mobility_beta_;
    std::vector<Matrix> static_beta_;
    std::optional<PerturbationConfig> perturbation_;
};

}  // namespace mvsis

#endif  // MVSIS_MOBILITY_HPP
