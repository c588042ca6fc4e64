#pragma once

// Dense kernels shared by the estimator, the synthetic benchmark and the
// metrics: pseudoinverse, symmetric eigendecomposition, Haar sampling,
// Pearson correlation and the normalized Frobenius norm.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pisco/errors.hpp"

namespace pisco {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;
using Rng = std::mt19937_64;

namespace linalg {

inline void require_nonempty(const Matrix& m, const char* what) {
    if (m.rows() < 1 || m.cols() < 1) {
        throw InvalidArgument(std::string(what) + ": matrix must have at least one row and one column");
    }
}

inline void require_finite(const Matrix& m, const char* what) {
    if (!m.allFinite()) {
        throw InvalidArgument(std::string(what) + ": matrix contains NaN or Inf");
    }
}

/// i.i.d. N(0, 1) entries, filled column-major from `rng`.
inline Matrix standard_normal(Index rows, Index cols, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix out(rows, cols);
    for (Index j = 0; j < cols; ++j) {
        for (Index i = 0; i < rows; ++i) {
            out(i, j) = normal(rng);
        }
    }
    return out;
}

inline Vector singular_values(const Matrix& m) {
    require_nonempty(m, "singular_values");
    return Eigen::JacobiSVD<Matrix>(m).singularValues();
}

inline double min_singular_value(const Matrix& m) {
    const Vector s = singular_values(m);
    return s(s.size() - 1);
}

/// Moore-Penrose pseudoinverse via SVD. Singular values below
/// `rel_tol * sigma_max` are treated as exact zeros.
inline Matrix pinv(const Matrix& m, double rel_tol = 1e-12) {
    require_nonempty(m, "pinv");
    require_finite(m, "pinv");
    if (!(rel_tol > 0.0 && rel_tol < 1.0)) {
        throw InvalidArgument("pinv: rel_tol must lie in (0, 1)");
    }
    Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector& s = svd.singularValues();
    const double cutoff = rel_tol * (s.size() > 0 ? s(0) : 0.0);
    Vector s_inv = Vector::Zero(s.size());
    for (Index i = 0; i < s.size(); ++i) {
        if (s(i) > 0.0 && s(i) >= cutoff) s_inv(i) = 1.0 / s(i);
    }
    return svd.matrixV() * s_inv.asDiagonal() * svd.matrixU().transpose();
}

struct EigenResult {
    Vector eigenvalues;   // descending
    Matrix eigenvectors;  // column i pairs with eigenvalues(i)
};

/// Flip `v` so that its largest-magnitude entry is positive. Entries whose
/// magnitude is within 1e-12 (relative) of the maximum count as ties and the
/// lowest index wins.
inline void fix_sign(Eigen::Ref<Vector> v) {
    if (v.size() == 0) return;
    const double peak = v.cwiseAbs().maxCoeff();
    for (Index i = 0; i < v.size(); ++i) {
        if (std::abs(v(i)) >= peak * (1.0 - 1e-12)) {
            if (v(i) < 0.0) v = -v;
            return;
        }
    }
}

/// Full spectral decomposition of a symmetric matrix, eigenvalues sorted in
/// descending order and eigenvector signs normalized by `fix_sign`.
inline EigenResult sym_eig(const Matrix& m) {
    require_nonempty(m, "sym_eig");
    if (m.rows() != m.cols()) {
        throw InvalidArgument("sym_eig: matrix must be square, got " + std::to_string(m.rows()) + "x" +
                              std::to_string(m.cols()));
    }
    require_finite(m, "sym_eig");
    const double scale = 1.0 + m.cwiseAbs().maxCoeff();
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
        throw InvalidArgument("sym_eig: matrix is not symmetric");
    }
    const Matrix sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
    if (solver.info() != Eigen::Success) {
        throw NumericalFailure("sym_eig: eigensolver did not converge for a " + std::to_string(m.rows()) + "x" +
                               std::to_string(m.cols()) + " matrix");
    }
    // Eigen returns ascending order.
    const Index n = m.rows();
    EigenResult out{Vector(n), Matrix(n, n)};
    for (Index i = 0; i < n; ++i) {
        out.eigenvalues(i) = solver.eigenvalues()(n - 1 - i);
        out.eigenvectors.col(i) = solver.eigenvectors().col(n - 1 - i);
        fix_sign(out.eigenvectors.col(i));
    }
    return out;
}

/// Haar-distributed d x d orthogonal matrix: QR of a Gaussian matrix with
/// the columns of Q multiplied by sign(diag(R)).
inline Matrix haar_orthogonal(Index d, std::uint64_t seed) {
    if (d < 1) throw InvalidArgument("haar_orthogonal: dimension must be >= 1");
    Rng rng(seed);
    const Matrix g = standard_normal(d, d, rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(d, d);
    const Matrix& r = qr.matrixQR();
    for (Index j = 0; j < d; ++j) {
        if (r(j, j) < 0.0) q.col(j) = -q.col(j);
    }
    return q;
}

/// Pearson correlation. Columns whose sample standard deviation falls below
/// 1e-12 produce zero rows/columns and are listed in `degenerate_rows` /
/// `degenerate_cols`.
struct Correlation {
    Matrix values;
    std::vector<Index> degenerate_rows;
    std::vector<Index> degenerate_cols;

    bool degenerate() const { return !degenerate_rows.empty() || !degenerate_cols.empty(); }
};

namespace detail {

inline constexpr double kDegenerateStd = 1e-12;

// Centers each column and scales it to unit norm; zero-variance columns are
// zeroed and reported.
inline Matrix standardize(const Matrix& x, std::vector<Index>& degenerate) {
    Matrix out = x.rowwise() - x.colwise().mean();
    const double denom = static_cast<double>(x.rows() - 1);
    for (Index j = 0; j < out.cols(); ++j) {
        const double ss = out.col(j).squaredNorm();
        const double sd = std::sqrt(ss / denom);
        if (sd < kDegenerateStd) {
            out.col(j).setZero();
            degenerate.push_back(j);
        } else {
            out.col(j) /= std::sqrt(ss);
        }
    }
    return out;
}

}  // namespace detail

inline Correlation corr(const Matrix& x) {
    if (x.rows() < 2) throw InvalidArgument("corr: need at least 2 samples (rows)");
    require_finite(x, "corr");
    Correlation out;
    const Matrix xs = detail::standardize(x, out.degenerate_rows);
    out.degenerate_cols = out.degenerate_rows;
    const Matrix gram = xs.transpose() * xs;
    out.values = 0.5 * (gram + gram.transpose());
    for (Index j = 0; j < out.values.cols(); ++j) {
        const bool flagged =
            std::find(out.degenerate_rows.begin(), out.degenerate_rows.end(), j) != out.degenerate_rows.end();
        if (!flagged) out.values(j, j) = 1.0;
    }
    return out;
}

inline Correlation cross_corr(const Matrix& x, const Matrix& y) {
    if (x.rows() < 2 || y.rows() < 2) {
        throw InvalidArgument("corr: need at least 2 samples (rows)");
    }
    if (x.rows() != y.rows()) {
        throw InvalidArgument("cross_corr: row counts differ (" + std::to_string(x.rows()) + " vs " +
                              std::to_string(y.rows()) + ")");
    }
    require_finite(x, "cross_corr");
    require_finite(y, "cross_corr");
    // Identical inputs take the symmetric path so cross_corr(x, x) == corr(x) bitwise.
    if (x.cols() == y.cols() && x == y) return corr(x);
    Correlation out;
    const Matrix xs = detail::standardize(x, out.degenerate_rows);
    const Matrix ys = detail::standardize(y, out.degenerate_cols);
    out.values = xs.transpose() * ys;
    return out;
}

/// sqrt(sum of squared entries / (rows * cols)).
inline double norm_fro(const Matrix& a) {
    require_nonempty(a, "norm_fro");
    return a.norm() / std::sqrt(static_cast<double>(a.rows()) * static_cast<double>(a.cols()));
}

}  // namespace linalg
}  // namespace pisco
