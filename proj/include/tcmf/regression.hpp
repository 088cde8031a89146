#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "tcmf/errors.hpp"

namespace tcmf {

/// Polynomial feature map in (x, lamB, lamH) up to a total degree, plus a
/// ridge parameter for the normal equations.
struct RegressionBasis {
    std::size_t degree = 2;
    double ridge = 1e-8;

    std::size_t n_features() const {
        // monomials x^a lamB^b lamH^c with a+b+c <= degree
        const std::size_t d = degree;
        return (d + 1) * (d + 2) * (d + 3) / 6;
    }

    void eval(double x, double lamB, double lamH, double* out) const {
        std::size_t idx = 0;
        for (std::size_t total = 0; total <= degree; ++total)
            for (std::size_t a = 0; a <= total; ++a)
                for (std::size_t b = 0; a + b <= total; ++b) {
                    const std::size_t c = total - a - b;
                    out[idx++] = std::pow(x, static_cast<double>(a)) *
                                 std::pow(lamB, static_cast<double>(b)) *
                                 std::pow(lamH, static_cast<double>(c));
                }
    }
};

namespace detail {

// Cholesky solve of (A + ridge I) beta = rhs for symmetric A (F x F,
// row-major). Returns false if the factorization breaks down.
inline bool cholesky_solve(std::vector<double> A, std::vector<double> rhs,
                           std::size_t F, double ridge, std::vector<double>& beta) {
    for (std::size_t i = 0; i < F; ++i) A[i * F + i] += ridge;
    // in-place LL^T
    for (std::size_t j = 0; j < F; ++j) {
        double d = A[j * F + j];
        for (std::size_t k = 0; k < j; ++k) d -= A[j * F + k] * A[j * F + k];
        if (!(d > 0.0) || !std::isfinite(d)) return false;
        const double l = std::sqrt(d);
        A[j * F + j] = l;
        for (std::size_t i = j + 1; i < F; ++i) {
            double s = A[i * F + j];
            for (std::size_t k = 0; k < j; ++k) s -= A[i * F + k] * A[j * F + k];
            A[i * F + j] = s / l;
        }
    }
    // forward then backward substitution
    for (std::size_t i = 0; i < F; ++i) {
        double s = rhs[i];
        for (std::size_t k = 0; k < i; ++k) s -= A[i * F + k] * rhs[k];
        rhs[i] = s / A[i * F + i];
    }
    beta.assign(F, 0.0);
    for (std::size_t ii = F; ii-- > 0;) {
        double s = rhs[ii];
        for (std::size_t k = ii + 1; k < F; ++k) s -= A[k * F + ii] * beta[k];
        beta[ii] = s / A[ii * F + ii];
    }
    return true;
}

}  // namespace detail

/// Ridge least squares on a row-major design matrix X (N x F). Escalates the
/// ridge a few times if the normal equations stay non-positive-definite.
inline std::vector<double> ridge_fit(const std::vector<double>& X,
                                     const std::vector<double>& y, std::size_t N,
                                     std::size_t F, double ridge) {
    std::vector<double> A(F * F, 0.0), rhs(F, 0.0);
    for (std::size_t n = 0; n < N; ++n) {
        const double* row = &X[n * F];
        for (std::size_t i = 0; i < F; ++i) {
            rhs[i] += row[i] * y[n];
            for (std::size_t j = 0; j <= i; ++j) A[i * F + j] += row[i] * row[j];
        }
    }
    for (std::size_t i = 0; i < F; ++i)
        for (std::size_t j = i + 1; j < F; ++j) A[i * F + j] = A[j * F + i];

    std::vector<double> beta;
    double r = ridge > 0.0 ? ridge : 1e-12;
    for (int attempt = 0; attempt < 8; ++attempt, r *= 100.0)
        if (detail::cholesky_solve(A, rhs, F, r, beta)) return beta;
    throw regression_error("ridge_fit: normal equations singular");
}

inline double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

/// Fit on (X, y) and evaluate the fit at the same rows.
inline std::vector<double> fit_and_predict(const std::vector<double>& X,
                                           const std::vector<double>& y,
                                           std::size_t N, std::size_t F,
                                           double ridge) {
    const std::vector<double> beta = ridge_fit(X, y, N, F, ridge);
    std::vector<double> out(N);
    for (std::size_t n = 0; n < N; ++n) out[n] = dot(&X[n * F], beta.data(), F);
    return out;
}

}  // namespace tcmf
