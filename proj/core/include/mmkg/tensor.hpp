#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace mmkg {

using Vec = std::vector<double>;

// Dense row-major matrix. Embedding tables and the two projections are small
// enough (vocab x 32, 32 x 32) that hand-rolled loops beat pulling in a BLAS.
struct Matrix {
    size_t rows = 0;
    size_t cols = 0;
    Vec data;

    Matrix() = default;
    Matrix(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double* row(size_t r) { return data.data() + r * cols; }
    const double* row(size_t r) const { return data.data() + r * cols; }
    double& at(size_t r, size_t c) { return data[r * cols + c]; }
    double at(size_t r, size_t c) const { return data[r * cols + c]; }
    void fill(double v) { data.assign(rows * cols, v); }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

inline double dot(const Vec& a, const Vec& b) {
    assert(a.size() == b.size());
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

inline void axpy(double alpha, const Vec& x, Vec& y) {
    assert(x.size() == y.size());
    for (size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline void scale(Vec& x, double alpha) {
    for (auto& v : x) v *= alpha;
}

// y = M * x
inline Vec matvec(const Matrix& m, const Vec& x) {
    assert(m.cols == x.size());
    Vec y(m.rows, 0.0);
    for (size_t r = 0; r < m.rows; ++r) {
        const double* row = m.row(r);
        double s = 0.0;
        for (size_t c = 0; c < m.cols; ++c) s += row[c] * x[c];
        y[r] = s;
    }
    return y;
}

// y = M^T * x
inline Vec matvec_t(const Matrix& m, const Vec& x) {
    assert(m.rows == x.size());
    Vec y(m.cols, 0.0);
    for (size_t r = 0; r < m.rows; ++r) {
        const double* row = m.row(r);
        for (size_t c = 0; c < m.cols; ++c) y[c] += row[c] * x[r];
    }
    return y;
}

// M += alpha * a b^T
inline void add_outer(Matrix& m, double alpha, const Vec& a, const Vec& b) {
    assert(m.rows == a.size() && m.cols == b.size());
    for (size_t r = 0; r < m.rows; ++r) {
        double* row = m.row(r);
        const double ar = alpha * a[r];
        for (size_t c = 0; c < m.cols; ++c) row[c] += ar * b[c];
    }
}

// cosine with the zero-vector convention cos(0, v) = 0
inline double cosine(const Vec& a, const Vec& b) {
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// probabilities are clamped away from {0, 1} before any logarithm
inline constexpr double kProbEps = 1e-6;
inline double clamp_prob(double p) {
    if (p < kProbEps) return kProbEps;
    if (p > 1.0 - kProbEps) return 1.0 - kProbEps;
    return p;
}

}  // namespace mmkg
