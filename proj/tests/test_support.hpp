#ifndef MVSIS_TEST_SUPPORT_HPP
#define MVSIS_TEST_SUPPORT_HPP

// Random instance generators shared by the unit and acceptance suites.

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "mvsis/matrix.hpp"
#include "mvsis/model.hpp"
#include "mvsis/spectral.hpp"

namespace mvsis::testing {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi)
{
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi)
{
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

/// Non-negative matrix whose support contains a directed ring, hence irreducible.
inline Matrix random_irreducible(Rng& rng, std::size_t n, double density = 0.4, double wmax = 1.0,
                                 bool symmetric = false)
{
    Matrix b(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        if (n > 1) {
            const std::size_t j = (i + n - 1) % n;
            b(i, j) = uniform(rng, 0.1, wmax);
        }
        for (std::size_t j = 0; j < n; ++j)
            if (i != j && b(i, j) == 0.0 && uniform(rng, 0.0, 1.0) < density)
                b(i, j) = uniform(rng, 0.05, wmax);
    }
    if (n == 1)
        b(0, 0) = uniform(rng, 0.1, wmax);
    if (symmetric)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const double v = 0.5 * (b(i, j) + b(j, i));
                b(i, j) = v;
                b(j, i) = v;
            }
    return b;
}

/// Random Metzler matrix: off-diagonal in [0, 1] with some zeros, diagonal in [-3, 1].
inline Matrix random_metzler(Rng& rng, std::size_t n)
{
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            m(i, j) = (i == j) ? uniform(rng, -3.0, 1.0) : (uniform(rng, 0.0, 1.0) < 0.25 ? 0.0 : uniform(rng, 0.0, 1.0));
    return m;
}

inline Vector random_vector(Rng& rng, std::size_t n, double lo, double hi)
{
    Vector v(n);
    for (auto& x : v)
        x = uniform(rng, lo, hi);
    return v;
}

/// Healing rates chosen so that s(B - D) equals `target` exactly.
inline Vector healing_for_abscissa(Rng& rng, const Matrix& beta, double target)
{
    const std::size_t n = beta.rows();
    Vector d0 = random_vector(rng, n, 0.0, 1.0);
    const double s0 = spectral_abscissa(minus_diagonal(beta, d0)).value;
    const double shift = s0 - target;
    for (auto& d : d0)
        d += shift;
    return d0;
}

/// Uniform-ish point in the interior of the simplex set: each agent's
/// (p^1, ..., p^m, healthy) is a normalised vector of uniforms.
inline Matrix random_interior_state(Rng& rng, std::size_t m, std::size_t n)
{
    Matrix p(m, n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> w(m + 1);
        double total = 0.0;
        for (auto& x : w) {
            x = uniform(rng, 0.05, 1.0);
            total += x;
        }
        for (std::size_t k = 0; k < m; ++k)
            p(k, i) = w[k] / total;
    }
    return p;
}

}  // namespace mvsis::testing

#endif  // MVSIS_TEST_SUPPORT_HPP
