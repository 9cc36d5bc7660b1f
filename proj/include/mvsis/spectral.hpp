#ifndef MVSIS_SPECTRAL_HPP
#define MVSIS_SPECTRAL_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mvsis/errors.hpp"
#include "mvsis/matrix.hpp"

namespace mvsis {

struct PowerIterationOptions {
    double tolerance = 1e-10;
    std::size_t max_iterations = 10000;
};

struct SpectralReport {
    double value = 0.0;
    /// Normalised to unit infinity norm.
    Vector dominant_vector;
    std::size_t iterations = 0;
    bool converged = false;
    /// ||M v - value v||_inf / ||v||_inf at the returned pair.
    double residual = 0.0;
    /// False when the off-diagonal pattern is not strongly connected; the
    /// dominant vector may then have zero entries.
    bool irreducible = true;
};

/// True iff the digraph with an arc j -> i whenever b(i, j) > 0 (i != j) is
/// strongly connected. Equivalent to irreducibility of b.
inline bool is_strongly_connected(const Matrix& b)
{
    if (!b.square())
        throw DimensionError("is_strongly_connected: matrix must be square");
    const std::size_t n = b.rows();
    if (n <= 1)
        return true;

    auto sweep = [&](bool transpose) {
        std::vector<char> seen(n, 0);
        std::vector<std::size_t> stack{0};
        seen[0] = 1;
        std::size_t count = 1;
        while (!stack.empty()) {
            const std::size_t j = stack.back();
            stack.pop_back();
            for (std::size_t i = 0; i < n; ++i) {
                if (i == j || seen[i])
                    continue;
                const double w = transpose ? b(j, i) : b(i, j);
                if (w > 0.0) {
                    seen[i] = 1;
                    ++count;
                    stack.push_back(i);
                }
            }
        }
        return count == n;
    };
    return sweep(false) && sweep(true);
}

namespace detail {

inline void normalise_inf(Vector& v)
{
    const double s = norm_inf(v);
    if (s > 0.0)
        for (auto& x : v)
            x /= s;
}

inline double residual_inf(const Vector& av, const Vector& v, double lambda)
{
    double r = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i)
        r = std::max(r, std::abs(av[i] - lambda * v[i]));
    return r / std::max(norm_inf(v), std::numeric_limits<double>::min());
}

/// Solves (a - sigma I) y = b by Gaussian elimination with partial pivoting.
/// Zero pivots are nudged, which is what inverse iteration wants near an
/// exact eigenvalue.
inline Vector shifted_solve(const Matrix& a, double sigma, Vector b)
{
    const std::size_t n = a.rows();
    Matrix lu = shifted(a, -sigma);
    const double tiny = std::numeric_limits<double>::epsilon() * std::max(1.0, norm_inf(a));
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        for (std::size_t i = k + 1; i < n; ++i)
            if (std::abs(lu(i, k)) > std::abs(lu(piv, k)))
                piv = i;
        if (piv != k) {
            for (std::size_t j = 0; j < n; ++j)
                std::swap(lu(k, j), lu(piv, j));
            std::swap(b[k], b[piv]);
        }
        if (std::abs(lu(k, k)) < tiny)
            lu(k, k) = tiny;
        for (std::size_t i = k + 1; i < n; ++i) {
            const double f = lu(i, k) / lu(k, k);
            if (f == 0.0)
                continue;
            for (std::size_t j = k; j < n; ++j)
                lu(i, j) -= f * lu(k, j);
            b[i] -= f * b[k];
        }
    }
    for (std::size_t k = n; k-- > 0;) {
        double acc = b[k];
        for (std::size_t j = k + 1; j < n; ++j)
            acc -= lu(k, j) * b[j];
        b[k] = acc / lu(k, k);
    }
    return b;
}

/// A few shifted inverse-iteration steps from a power-iteration pair.
/// Each step is kept only if it lowers the eigen-residual, so a poor
/// refinement never makes the estimate worse.
inline void polish_eigenpair(const Matrix& a, Vector& v, double& estimate, double& residual)
{
    for (int step = 0; step < 3; ++step) {
        Vector y = shifted_solve(a, estimate, v);
        double sum = 0.0;
        for (double x : y)
            sum += x;
        if (!std::isfinite(sum) || sum == 0.0)
            return;
        if (sum < 0.0)
            for (auto& x : y)
                x = -x;
        normalise_inf(y);
        for (auto& x : y)
            if (x < 0.0 && x > -1e-14)
                x = 0.0;
        const Vector ay = multiply(a, y);
        const double e = dot(y, ay) / dot(y, y);
        const double r = residual_inf(ay, y, e);
        if (!(r < residual))
            return;
        v = std::move(y);
        estimate = e;
        residual = r;
    }
}

}  // namespace detail

/// Spectral abscissa s(M) of a Metzler matrix.
///
/// M + cI with c = max_i(max(-M_ii, 0)) + 1 is non-negative with a positive
/// diagonal, so its Perron root rho is dominant and s(M) = rho - c. Power
/// iteration from the all-ones vector; when the iterate is strictly
/// positive the Collatz-Wielandt bracket min_i (Av)_i/v_i <= rho <=
/// max_i (Av)_i/v_i gives a certified stopping test, otherwise the
/// eigen-residual is used.
inline SpectralReport spectral_abscissa(const Matrix& m, PowerIterationOptions opts = {})
{
    if (!m.square() || m.rows() == 0)
        throw DimensionError("spectral_abscissa: matrix must be square and non-empty");
    if (!is_metzler(m))
        throw PreconditionError("spectral_abscissa: matrix is not Metzler (negative off-diagonal entry)");

    const std::size_t n = m.rows();
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        c = std::max(c, -m(i, i));
    c += 1.0;
    const Matrix a = shifted(m, c);

    SpectralReport rep;
    rep.irreducible = is_strongly_connected(m);

    Vector v(n, 1.0);
    double estimate = 0.0;
    for (std::size_t it = 1; it <= opts.max_iterations; ++it) {
        const Vector av = multiply(a, v);
        rep.iterations = it;

        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        bool positive = true;
        for (std::size_t i = 0; i < n; ++i) {
            if (v[i] <= 0.0) {
                positive = false;
                break;
            }
            const double q = av[i] / v[i];
            lo = std::min(lo, q);
            hi = std::max(hi, q);
        }

        estimate = dot(v, av) / dot(v, v);
        const double scale = std::max(1.0, std::abs(estimate));
        const double res = detail::residual_inf(av, v, estimate);

        if (positive && hi - lo <= opts.tolerance * scale) {
            estimate = 0.5 * (lo + hi);
            rep.converged = true;
        } else if (res <= opts.tolerance * scale) {
            rep.converged = true;
        }
        if (rep.converged)
            break;

        v = av;
        detail::normalise_inf(v);
    }

    if (!rep.converged) {
        const Vector av = multiply(a, v);
        estimate = dot(v, av) / dot(v, v);
    }
    rep.residual = detail::residual_inf(multiply(a, v), v, estimate);
    detail::polish_eigenpair(a, v, estimate, rep.residual);
    rep.value = estimate - c;
    rep.dominant_vector = v;
    return rep;
}

/// Largest eigenvalue of a symmetric matrix by power iteration on the
/// positive definite shift M + (||M||_inf + 1) I, with the Rayleigh quotient
/// as estimate. Stops on the eigen-residual, which for symmetric matrices
/// bounds the distance to the spectrum.
inline SpectralReport lambda_max_symmetric(const Matrix& m, PowerIterationOptions opts = {})
{
    if (!m.square() || m.rows() == 0)
        throw DimensionError("lambda_max_symmetric: matrix must be square and non-empty");
    if (!is_symmetric(m, 1e-12))
        throw PreconditionError("lambda_max_symmetric: matrix is not symmetric");

    const std::size_t n = m.rows();
    const double c = norm_inf(m) + 1.0;
    const Matrix a = shifted(m, c);

    SpectralReport rep;
    rep.irreducible = is_strongly_connected(m);

    // Deterministic start with no exact symmetry, so eigenvectors orthogonal
    // to the all-ones vector are still reached.
    Vector v(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double g = static_cast<double>(i) * 0.6180339887498949;
        v[i] = 1.0 + (g - std::floor(g));
    }
    detail::normalise_inf(v);

    double estimate = 0.0;
    for (std::size_t it = 1; it <= opts.max_iterations; ++it) {
        const Vector av = multiply(a, v);
        rep.iterations = it;
        estimate = dot(v, av) / dot(v, v);
        const double scale = std::max(1.0, std::abs(estimate));
        Vector r(n);
        for (std::size_t i = 0; i < n; ++i)
            r[i] = av[i] - estimate * v[i];
        if (norm2(r) / norm2(v) <= opts.tolerance * scale) {
            rep.converged = true;
            rep.value = estimate - c;
            rep.residual = detail::residual_inf(av, v, estimate);
            rep.dominant_vector = v;
            return rep;
        }
        v = av;
        detail::normalise_inf(v);
    }

    const Vector av = multiply(a, v);
    estimate = dot(v, av) / dot(v, v);
    rep.value = estimate - c;
    rep.residual = detail::residual_inf(av, v, estimate);
    rep.dominant_vector = v;
    return rep;
}

struct AbscissaSample {
    double t = 0.0;
    double value = 0.0;
};

struct WindowAverage {
    double start = 0.0;
    double end = 0.0;
    double average = 0.0;
};

struct AverageMonitorReport {
    /// Sliding windows [t_j, t_j + T], one per distinct sample time that leaves room for a full window.
    std::vector<WindowAverage> windows;
    /// Average from the first sample up to each later sample time.
    std::vector<WindowAverage> running;
    double max_window_average = -std::numeric_limits<double>::infinity();

    /// True iff every window average is at most alpha_bar.
    bool below(double alpha_bar) const { return !windows.empty() && max_window_average <= alpha_bar; }
};

namespace detail {

/// Cumulative trapezoid integral of a piecewise-linear signal. Equal
/// consecutive times encode jumps.
class PiecewiseLinearIntegral {
public:
    explicit PiecewiseLinearIntegral(std::span<const AbscissaSample> s) : s_(s), cum_(s.size(), 0.0)
    {
        for (std::size_t i = 1; i < s.size(); ++i)
            cum_[i] = cum_[i - 1] + 0.5 * (s[i].t - s[i - 1].t) * (s[i].value + s[i - 1].value);
    }

    double at(double t) const
    {
        if (t <= s_.front().t)
            return 0.0;
        if (t >= s_.back().t)
            return cum_.back();
        auto it = std::upper_bound(s_.begin(), s_.end(), t,
                                   [](double x, const AbscissaSample& a) { return x < a.t; });
        const std::size_t hi = static_cast<std::size_t>(it - s_.begin());
        const std::size_t lo = hi - 1;
        const double h = s_[hi].t - s_[lo].t;
        const double x = t - s_[lo].t;
        const double at_t = s_[lo].value + (s_[hi].value - s_[lo].value) * (x / h);
        return cum_[lo] + 0.5 * x * (s_[lo].value + at_t);
    }

private:
    std::span<const AbscissaSample> s_;
    std::vector<double> cum_;
};

}  // namespace detail

/// Trapezoidal running and sliding-window averages of s(B(t) - D) samples.
inline AverageMonitorReport average_abscissa_monitor(std::span<const AbscissaSample> samples, double window)
{
    if (samples.size() < 2)
        throw PreconditionError("average_abscissa_monitor: at least two samples are required");
    if (!(window > 0.0))
        throw PreconditionError("average_abscissa_monitor: window must be positive");
    for (std::size_t i = 1; i < samples.size(); ++i)
        if (samples[i].t < samples[i - 1].t)
            throw PreconditionError("average_abscissa_monitor: samples are not time-sorted");

    const double t0 = samples.front().t;
    const double t1 = samples.back().t;
    if (!(t1 > t0))
        throw PreconditionError("average_abscissa_monitor: samples span zero time");

    const detail::PiecewiseLinearIntegral integral(samples);
    AverageMonitorReport rep;
    const double slack = 1e-12 * std::max(1.0, std::abs(t1));

    for (std::size_t j = 0; j < samples.size(); ++j) {
        const double a = samples[j].t;
        if (j > 0 && a == samples[j - 1].t)
            continue;
        if (a > t0)
            rep.running.push_back({t0, a, integral.at(a) / (a - t0)});
        const double b = a + window;
        if (b > t1 + slack)
            continue;
        const double avg = (integral.at(std::min(b, t1)) - integral.at(a)) / window;
        rep.windows.push_back({a, b, avg});
        rep.max_window_average = std::max(rep.max_window_average, avg);
    }
    return rep;
}

}  // namespace mvsis

#endif  // MVSIS_SPECTRAL_HPP
