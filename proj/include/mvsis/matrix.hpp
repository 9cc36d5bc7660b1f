#ifndef MVSIS_MATRIX_HPP
#define MVSIS_MATRIX_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "mvsis/errors.hpp"

namespace mvsis {

using Vector = std::vector<double>;

/// Dense row-major matrix. The systems handled here are small (tens of
/// agents), so there is no sparse path.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    Matrix(std::initializer_list<std::initializer_list<double>> rows)
        : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0)
    {
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_)
                throw DimensionError("ragged matrix initializer");
            data_.insert(data_.end(), r.begin(), r.end());
        }
    }

    static Matrix identity(std::size_t n)
    {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i)
            m(i, i) = 1.0;
        return m;
    }

    static Matrix diagonal(std::span<const double> d)
    {
        Matrix m(d.size(), d.size());
        for (std::size_t i = 0; i < d.size(); ++i)
            m(i, i) = d[i];
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool square() const noexcept { return rows_ == cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline Vector multiply(const Matrix& m, std::span<const double> x)
{
    if (m.cols() != x.size())
        throw DimensionError("matrix-vector product: column count does not match vector length");
    Vector y(m.rows(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double acc = 0.0;
        auto r = m.row(i);
        for (std::size_t j = 0; j < r.size(); ++j)
            acc += r[j] * x[j];
        y[i] = acc;
    }
    return y;
}

inline Matrix operator+(Matrix a, const Matrix& b)
{
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DimensionError("matrix sum: shape mismatch");
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            a(i, j) += b(i, j);
    return a;
}

inline Matrix operator-(Matrix a, const Matrix& b)
{
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DimensionError("matrix difference: shape mismatch");
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            a(i, j) -= b(i, j);
    return a;
}

inline Matrix operator*(double s, Matrix a)
{
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (auto& v : a.row(i))
            v *= s;
    return a;
}

/// Adds `shift` to every diagonal entry.
inline Matrix shifted(Matrix a, double shift)
{
    for (std::size_t i = 0; i < std::min(a.rows(), a.cols()); ++i)
        a(i, i) += shift;
    return a;
}

/// B - diag(delta): the linearisation of one virus about the healthy state.
inline Matrix minus_diagonal(Matrix b, std::span<const double> delta)
{
    if (!b.square() || b.rows() != delta.size())
        throw DimensionError("B - diag(delta): dimension mismatch");
    for (std::size_t i = 0; i < delta.size(); ++i)
        b(i, i) -= delta[i];
    return b;
}

inline double norm_inf(std::span<const double> x)
{
    double m = 0.0;
    for (double v : x)
        m = std::max(m, std::abs(v));
    return m;
}

inline double norm2(std::span<const double> x)
{
    double s = 0.0;
    for (double v : x)
        s += v * v;
    return std::sqrt(s);
}

inline double dot(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

/// Max absolute row sum.
inline double norm_inf(const Matrix& m)
{
    double best = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double s = 0.0;
        for (double v : m.row(i))
            s += std::abs(v);
        best = std::max(best, s);
    }
    return best;
}

inline bool is_symmetric(const Matrix& m, double rel_tol = 1e-12)
{
    if (!m.square())
        return false;
    const double scale = std::max(1.0, norm_inf(m));
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = i + 1; j < m.cols(); ++j)
            if (std::abs(m(i, j) - m(j, i)) > rel_tol * scale)
                return false;
    return true;
}

inline bool is_metzler(const Matrix& m)
{
    if (!m.square())
        return false;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j)
            if (i != j && !(m(i, j) >= 0.0))
                return false;
    return true;
}

inline bool is_nonnegative(const Matrix& m)
{
    return std::all_of(m.data().begin(), m.data().end(),
                       [](double v) { return v >= 0.0 && std::isfinite(v); });
}

}  // namespace mvsis

#endif  // MVSIS_MATRIX_HPP
