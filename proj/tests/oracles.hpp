#pragma once

// Reference computations used only by the tests. None of these call into the
// SVD/eigensolver paths they are used to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace pisco::oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Largest entrywise violation of the four Penrose conditions.
inline double penrose_violation(const Matrix& m, const Matrix& mp) {
    const double a = (m * mp * m - m).cwiseAbs().maxCoeff();
    const double b = (mp * m * mp - mp).cwiseAbs().maxCoeff();
    const Matrix mmp = m * mp;
    const Matrix mpm = mp * m;
    const double c = (mmp - mmp.transpose()).cwiseAbs().maxCoeff();
    const double d = (mpm - mpm.transpose()).cwiseAbs().maxCoeff();
    return std::max({a, b, c, d});
}

struct PowerPairs {
    std::vector<double> values;
    std::vector<Vector> vectors;
};

/// Eigenpairs of a symmetric matrix by shifted power iteration with Hotelling
/// deflation. The shift makes the matrix positive definite so the iteration
/// always converges to the algebraically largest remaining eigenvalue.
inline PowerPairs power_iteration(Matrix m, int max_iters = 200000, double tol = 1e-15) {
    const Index n = m.rows();
    double shift = 0.0;
    for (Index i = 0; i < n; ++i) shift = std::max(shift, m.row(i).cwiseAbs().sum());
    shift += 1.0;
    Matrix a = m + shift * Matrix::Identity(n, n);
    PowerPairs out;
    for (Index k = 0; k < n; ++k) {
        Vector v = Vector::LinSpaced(n, 1.0, 2.0);
        for (const Vector& u : out.vectors) v -= u.dot(v) * u;
        v.normalize();
        double lambda = 0.0;
        for (int it = 0; it < max_iters; ++it) {
            Vector w = a * v;
            for (const Vector& u : out.vectors) w -= u.dot(w) * u;
            const double next = v.dot(w);
            w.normalize();
            const double change = std::min((w - v).norm(), (w + v).norm());
            v = w;
            if (std::abs(next - lambda) < tol * std::abs(next) && change < 1e-13) {
                lambda = next;
                break;
            }
            lambda = next;
        }
        lambda = v.dot(a * v);
        out.values.push_back(lambda - shift);
        out.vectors.push_back(v);
        a -= lambda * v * v.transpose();
    }
    return out;
}

/// Ridge-penalized least squares with an unpenalized intercept, solved
/// directly from the normal equations of the augmented design [X, 1].
inline Vector ridge_direction(const Matrix& x, const Vector& y, double mu) {
    const Index n = x.rows();
    const Index p = x.cols();
    Matrix design(n, p + 1);
    design << x, Vector::Ones(n);
    Matrix gram = design.transpose() * design / static_cast<double>(n);
    for (Index i = 0; i < p; ++i) gram(i, i) += mu;
    const Vector rhs = design.transpose() * y / static_cast<double>(n);
    const Vector sol = gram.fullPivLu().solve(rhs);
    return sol.head(p);
}

/// Richardson extrapolation to mu -> 0 from the two smallest penalties,
/// assuming the ridge path is linear in mu near the origin.
inline Vector extrapolate_ridge(const Matrix& x, const Vector& y, const std::vector<double>& mus) {
    std::vector<double> sorted = mus;
    std::sort(sorted.begin(), sorted.end());
    const double m1 = sorted[0];
    const double m2 = sorted[1];
    const Vector p1 = ridge_direction(x, y, m1);
    const Vector p2 = ridge_direction(x, y, m2);
    return (m2 * p1 - m1 * p2) / (m2 - m1);
}

/// Central finite differences of a scalar function of a flat parameter vector.
inline Vector central_difference(const std::function<double(const Vector&)>& f, const Vector& at, double h) {
    Vector g(at.size());
    for (Index i = 0; i < at.size(); ++i) {
        Vector plus = at;
        Vector minus = at;
        plus(i) += h;
        minus(i) -= h;
        g(i) = (f(plus) - f(minus)) / (2.0 * h);
    }
    return g;
}

/// Pearson correlation of two columns computed by the textbook two-pass sum.
inline double pearson(const Vector& a, const Vector& b) {
    const double ma = a.mean();
    const double mb = b.mean();
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (Index i = 0; i < a.size(); ++i) {
        sab += (a(i) - ma) * (b(i) - mb);
        saa += (a(i) - ma) * (a(i) - ma);
        sbb += (b(i) - mb) * (b(i) - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

}  // namespace pisco::oracle
