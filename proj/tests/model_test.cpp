#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mvsis/model.hpp"
#include "test_support.hpp"

using namespace mvsis;
using mvsis::testing::Rng;

namespace {

// Straight transcription of the scalar equations, independent of derivative().
double rate_loop(const std::vector<Matrix>& beta, const std::vector<Vector>& delta, const Matrix& p, std::size_t k,
                 std::size_t i)
{
    double healthy = 1.0;
    for (std::size_t l = 0; l < p.rows(); ++l)
        healthy -= p(l, i);
    double sum = 0.0;
    for (std::size_t j = 0; j < p.cols(); ++j)
        sum += beta[k](i, j) * p(k, j);
    return healthy * sum - delta[k][i] * p(k, i);
}

// d(rate(k,i)) / d p(l,j)
double jacobian_entry(const std::vector<Matrix>& beta, const std::vector<Vector>& delta, const Matrix& p,
                      std::size_t k, std::size_t i, std::size_t l, std::size_t j)
{
    double healthy = 1.0;
    for (std::size_t q = 0; q < p.rows(); ++q)
        healthy -= p(q, i);
    double pressure = 0.0;
    for (std::size_t c = 0; c < p.cols(); ++c)
        pressure += beta[k](i, c) * p(k, c);
    double d = 0.0;
    if (j == i)
        d -= pressure;
    if (l == k) {
        d += healthy * beta[k](i, j);
        if (j == i)
            d -= delta[k][i];
    }
    return d;
}

struct Instance {
    SystemSpec spec;
    std::vector<Matrix> beta;
    std::vector<Vector> delta;
};

Instance random_instance(Rng& rng, std::size_t m, std::size_t n)
{
    Instance in;
    for (std::size_t k = 0; k < m; ++k) {
        VirusSpec v{mvsis::testing::random_irreducible(rng, n, 0.5, 2.0), mvsis::testing::random_vector(rng, n, 0.0, 2.0)};
        in.beta.push_back(v.beta);
        in.delta.push_back(v.delta);
        in.spec.viruses.push_back(std::move(v));
    }
    return in;
}

}  // namespace

TEST(Derivative, HealthyStateIsEquilibrium)
{
    Rng rng(1);
    auto in = random_instance(rng, 3, 5);
    const auto rate = derivative(InfectionState::healthy(3, 5), in.spec);
    for (double v : rate.data())
        EXPECT_EQ(v, 0.0);
}

TEST(Derivative, ScalarClosedFormEquilibrium)
{
    SystemSpec spec{{VirusSpec{Matrix{{2.0}}, {1.0}}}, nullptr};
    InfectionState s{Matrix{{0.5}}, 0.0};
    EXPECT_DOUBLE_EQ(derivative(s, spec)(0, 0), 0.0);
}

TEST(Derivative, MatchesScalarLoopOracle)
{
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        auto in = random_instance(rng, 2, 2);
        const Matrix p = mvsis::testing::random_interior_state(rng, 2, 2);
        const Matrix rate = derivative(p, in.beta, in.delta);
        for (std::size_t k = 0; k < 2; ++k)
            for (std::size_t i = 0; i < 2; ++i)
                EXPECT_NEAR(rate(k, i), rate_loop(in.beta, in.delta, p, k, i), 1e-14);
    }
}

TEST(Derivative, JacobianMatchesFiniteDifferences)
{
    Rng rng(11);
    const std::size_t m = 3, n = 4;
    for (int trial = 0; trial < 10; ++trial) {
        auto in = random_instance(rng, m, n);
        const Matrix p = mvsis::testing::random_interior_state(rng, m, n);
        const double h = 1e-6;
        for (std::size_t l = 0; l < m; ++l)
            for (std::size_t j = 0; j < n; ++j) {
                Matrix up = p, down = p;
                up(l, j) += h;
                down(l, j) -= h;
                const Matrix fu = derivative(up, in.beta, in.delta);
                const Matrix fd = derivative(down, in.beta, in.delta);
                for (std::size_t k = 0; k < m; ++k)
                    for (std::size_t i = 0; i < n; ++i) {
                        const double fdiff = (fu(k, i) - fd(k, i)) / (2 * h);
                        const double exact = jacobian_entry(in.beta, in.delta, p, k, i, l, j);
                        EXPECT_LE(std::abs(fdiff - exact), 1e-6 * std::max(1.0, std::abs(exact)));
                    }
            }
    }
}

TEST(Derivative, AffineInOtherViruses)
{
    // Holding virus k fixed, rate(k, .) is affine in every p^l with l != k.
    Rng rng(5);
    const std::size_t m = 3, n = 4;
    auto in = random_instance(rng, m, n);
    const Matrix x = mvsis::testing::random_interior_state(rng, m, n);
    Matrix y = x;
    for (std::size_t i = 0; i < n; ++i)
        y(2, i) *= 0.3;
    const double a = 0.37;
    Matrix mix = x;
    for (std::size_t i = 0; i < n; ++i)
        mix(2, i) = a * x(2, i) + (1 - a) * y(2, i);
    const Matrix fx = derivative(x, in.beta, in.delta);
    const Matrix fy = derivative(y, in.beta, in.delta);
    const Matrix fm = derivative(mix, in.beta, in.delta);
    for (std::size_t k = 0; k < 2; ++k)
        for (std::size_t i = 0; i < n; ++i)
            EXPECT_NEAR(fm(k, i), a * fx(k, i) + (1 - a) * fy(k, i), 1e-14);
}

TEST(Derivative, BoundaryPointsInward)
{
    Rng rng(3);
    const std::size_t m = 3, n = 5;
    for (int trial = 0; trial < 100; ++trial) {
        auto in = random_instance(rng, m, n);
        Matrix p = mvsis::testing::random_interior_state(rng, m, n);
        const std::size_t k0 = mvsis::testing::pick(rng, 0, m - 1);
        const std::size_t i0 = mvsis::testing::pick(rng, 0, n - 1);
        p(k0, i0) = 0.0;
        // agent i1 fully infected: push its row sum to exactly 1
        const std::size_t i1 = (i0 + 1) % n;
        double total = 0.0;
        for (std::size_t k = 0; k < m; ++k)
            total += p(k, i1);
        for (std::size_t k = 0; k < m; ++k)
            p(k, i1) /= total;
        const Matrix rate = derivative(p, in.beta, in.delta);
        EXPECT_GE(rate(k0, i0), 0.0);
        for (std::size_t k = 0; k < m; ++k)
            EXPECT_LE(rate(k, i1), 1e-15);
    }
}

TEST(Derivative, SingleVirusReducesToBasicModel)
{
    Rng rng(9);
    auto in = random_instance(rng, 1, 6);
    const Matrix p = mvsis::testing::random_interior_state(rng, 1, 6);
    const Matrix rate = derivative(p, in.beta, in.delta);
    // dp/dt = (B - P B - D) p
    const Vector pv(p.row(0).begin(), p.row(0).end());
    const Vector bp = multiply(in.beta[0], pv);
    for (std::size_t i = 0; i < 6; ++i)
        EXPECT_NEAR(rate(0, i), bp[i] - pv[i] * bp[i] - in.delta[0][i] * pv[i], 1e-15);
}

TEST(Derivative, DimensionMismatchIsReported)
{
    Rng rng(2);
    auto in = random_instance(rng, 2, 3);
    EXPECT_THROW(derivative(InfectionState::healthy(2, 4), in.spec), DimensionError);
    EXPECT_THROW(derivative(InfectionState::healthy(3, 3), in.spec), DimensionError);
}

TEST(SystemSpec, ValidationRejectsBadInput)
{
    SystemSpec empty;
    EXPECT_THROW(empty.validate(), PreconditionError);
    SystemSpec neg{{VirusSpec{Matrix{{0.0, -1.0}, {1.0, 0.0}}, {1.0, 1.0}}}, nullptr};
    EXPECT_THROW(neg.validate(), PreconditionError);
    SystemSpec mixed{{VirusSpec{Matrix{{0.0, 1.0}, {1.0, 0.0}}, {1.0, 1.0}}, VirusSpec{Matrix{{1.0}}, {1.0}}},
                     nullptr};
    EXPECT_THROW(mixed.validate(), DimensionError);
    SystemSpec zero_heal{{VirusSpec{Matrix{{0.0, 1.0}, {1.0, 0.0}}, {0.0, 0.0}}}, nullptr};
    EXPECT_NO_THROW(zero_heal.validate());
}

TEST(InfectionState, SimplexMembership)
{
    InfectionState s{Matrix{{0.5, 0.2}, {0.5, 0.1}}, 0.0};
    EXPECT_TRUE(s.in_simplex());
    s.p(1, 0) = 0.6;
    EXPECT_NEAR(s.simplex_violation(), 0.1, 1e-15);
    s.p(1, 0) = -0.01;
    EXPECT_NEAR(s.simplex_violation(), 0.01, 1e-15);
}
