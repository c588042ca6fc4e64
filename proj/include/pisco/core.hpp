#pragma once

// The post-processing estimator: one minimum-norm regression per style
// factor and an eigenproblem for the content subspace, assembled into a
// projection P(lambda) that maps entangled features to style and content
// factors.

#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pisco/linalg.hpp"
#include "pisco/synthetic.hpp"

namespace pisco {

inline constexpr double kInfiniteLambda = std::numeric_limits<double>::infinity();

struct StyleFit {
    Vector direction;  // p_j, length d'
    double intercept = 0.0;
    std::string style_name;
    double mse = 0.0;  // residual mean squared error over the stacked rows

    Vector normalized_direction() const {
        const double norm = direction.norm();
        return norm > 0.0 ? Vector(direction / norm) : direction;
    }
};

/// Style rows on top, orthonormal content rows below. `lambda` is
/// kInfiniteLambda for the exact null-space mode.
struct ProjectionMatrix {
    Matrix style_rows;    // m x d'
    Matrix content_rows;  // k x d'
    double lambda = 0.0;
    Index k = 0;
    double eta = 0.95;
    std::vector<std::string> style_names;

    Index m() const { return style_rows.rows(); }
    Index d_prime() const { return content_rows.cols(); }
    bool exact() const { return std::isinf(lambda); }

    Matrix matrix() const {
        Matrix p(m() + k, d_prime());
        p.topRows(m()) = style_rows;
        p.bottomRows(k) = content_rows;
        return p;
    }
};

struct FactorizedFeatures {
    Matrix style_factors;    // n x m
    Matrix content_factors;  // n x k
};

/// k = round(eta * d') - m.
inline Index content_dim(Index d_prime, Index m, double eta) {
    if (!(eta > 0.0 && eta <= 1.0)) throw InvalidArgument("eta: must lie in (0, 1]");
    const Index k = static_cast<Index>(std::llround(eta * static_cast<double>(d_prime))) - m;
    if (k < 1) {
        throw InvalidArgument("eta: round(eta * d') - m = " + std::to_string(k) + " leaves no content factors");
    }
    return k;
}

/// Minimum-norm least squares of annotations on features over the 2n stacked
/// rows {(base_i, ann_base_i)} and {(modified_i, ann_modified_i)}, as the
/// pseudoinverse of the centered feature covariance applied to the centered
/// cross-covariance. The intercept is left unpenalized.
inline StyleFit fit_style_direction(const Matrix& base, const Matrix& modified, const Vector& ann_base,
                                    const Vector& ann_modified, std::string style_name = {}) {
    if (base.rows() != modified.rows() || base.cols() != modified.cols()) {
        throw InvalidArgument("fit_style_direction: base and modified features differ in shape");
    }
    if (base.rows() < 2 || base.cols() < 1) {
        throw InvalidArgument("fit_style_direction: need at least 2 samples");
    }
    if (ann_base.size() != base.rows() || ann_modified.size() != base.rows()) {
        throw InvalidArgument("fit_style_direction: annotation length must equal the sample count");
    }
    linalg::require_finite(base, "fit_style_direction");
    linalg::require_finite(modified, "fit_style_direction");
    if (!ann_base.allFinite() || !ann_modified.allFinite()) {
        throw InvalidArgument("fit_style_direction: annotations contain NaN or Inf");
    }

    const Index n = base.rows();
    Matrix x(2 * n, base.cols());
    x << base, modified;
    Vector y(2 * n);
    y << ann_base, ann_modified;
    if ((y.array() == y(0)).all()) {
        throw DegenerateRegression("fit_style_direction: annotations are constant" +
                                   (style_name.empty() ? std::string() : " for style '" + style_name + "'"));
    }

    const double rows = static_cast<double>(2 * n);
    const Eigen::RowVectorXd x_mean = x.colwise().mean();
    const double y_mean = y.mean();
    const Matrix xc = x.rowwise() - x_mean;
    const Vector yc = y.array() - y_mean;
    const Matrix cov = (xc.transpose() * xc) / rows;
    const Vector cross = (xc.transpose() * yc) / rows;

    StyleFit fit;
    fit.direction = linalg::pinv(0.5 * (cov + cov.transpose())) * cross;
    fit.intercept = y_mean - x_mean.dot(fit.direction);
    fit.style_name = std::move(style_name);
    const Vector residual = (y - x * fit.direction).array() - fit.intercept;
    fit.mse = residual.squaredNorm() / rows;
    return fit;
}

namespace detail {

inline void check_content_inputs(const Matrix& all_features, const std::vector<Matrix>& deltas, const char* what) {
    linalg::require_nonempty(all_features, what);
    linalg::require_finite(all_features, what);
    if (deltas.empty()) return;
    const Index n = deltas.front().rows();
    for (const Matrix& d : deltas) {
        if (d.rows() != n || d.cols() != all_features.cols()) {
            throw InvalidArgument(std::string(what) + ": every difference matrix must be " + std::to_string(n) +
                                  "x" + std::to_string(all_features.cols()));
        }
        linalg::require_finite(d, what);
    }
    const Index m = static_cast<Index>(deltas.size());
    if (n < 1 || all_features.rows() != (m + 1) * n) {
        throw InvalidArgument(std::string(what) + ": feature stack has " + std::to_string(all_features.rows()) +
                              " rows, expected (m+1)n = " + std::to_string((m + 1) * n));
    }
}

inline Matrix second_moment(const Matrix& all_features) {
    const Matrix s = (all_features.transpose() * all_features) / static_cast<double>(all_features.rows());
    return 0.5 * (s + s.transpose());
}

inline Matrix rows_of(const Matrix& columns) { return columns.transpose(); }

}  // namespace detail

/// Average of Delta_j^T Delta_j / n over styles.
inline Matrix style_change_matrix(const std::vector<Matrix>& deltas, Index d_prime) {
    Matrix out = Matrix::Zero(d_prime, d_prime);
    if (deltas.empty()) return out;
    for (const Matrix& d : deltas) out += (d.transpose() * d) / static_cast<double>(d.rows());
    out /= static_cast<double>(deltas.size());
    return 0.5 * (out + out.transpose());
}

/// U^T U / ((m+1)n) - lambda * mean_j Delta_j^T Delta_j / n; its top-k
/// eigenvectors maximize retained second moment minus the style-change
/// penalty.
inline Matrix content_objective_matrix(const Matrix& all_features, const std::vector<Matrix>& deltas,
                                       double lambda) {
    detail::check_content_inputs(all_features, deltas, "content_objective_matrix");
    if (!std::isfinite(lambda) || lambda < 0.0) {
        throw InvalidArgument("content_objective_matrix: lambda must be finite and >= 0");
    }
    const Matrix moment = detail::second_moment(all_features);
    if (lambda == 0.0 || deltas.empty()) return moment;
    return moment - lambda * style_change_matrix(deltas, all_features.cols());
}

/// Content rows for finite lambda: top-k eigenvectors of the objective.
inline Matrix fit_content(const Matrix& all_features, const std::vector<Matrix>& deltas, double lambda, Index k) {
    if (k < 1 || k > all_features.cols()) {
        throw InvalidArgument("fit_content: k must lie in [1, d'] (k = " + std::to_string(k) +
                              ", d' = " + std::to_string(all_features.cols()) + ")");
    }
    const linalg::EigenResult eig = linalg::sym_eig(content_objective_matrix(all_features, deltas, lambda));
    return detail::rows_of(eig.eigenvectors.leftCols(k));
}

/// Orthonormal basis (columns) of the subspace left untouched by every style
/// change: the null space of the stacked differences at relative tolerance
/// `null_tol`.
inline Matrix style_null_basis(const std::vector<Matrix>& deltas, Index d_prime, double null_tol = 1e-10) {
    if (deltas.empty()) return Matrix::Identity(d_prime, d_prime);
    Index rows = 0;
    for (const Matrix& d : deltas) rows += d.rows();
    Matrix stacked(rows, d_prime);
    Index at = 0;
    for (const Matrix& d : deltas) {
        stacked.middleRows(at, d.rows()) = d;
        at += d.rows();
    }
    Eigen::JacobiSVD<Matrix> svd(stacked, Eigen::ComputeFullV);
    const Vector& s = svd.singularValues();
    if (s.size() == 0 || s(0) == 0.0) return Matrix::Identity(d_prime, d_prime);
    Index rank = 0;
    while (rank < s.size() && s(rank) >= null_tol * s(0)) ++rank;
    return svd.matrixV().rightCols(d_prime - rank);
}

namespace detail {

struct ContentSolution {
    Matrix rows;      // k x d'
    Vector spectrum;  // all eigenvalues of the solved problem, descending
};

inline ContentSolution solve_content_exact(const Matrix& all_features, const std::vector<Matrix>& deltas, Index k,
                                           double null_tol) {
    check_content_inputs(all_features, deltas, "fit_content_exact");
    if (k < 1) throw InvalidArgument("fit_content_exact: k must be >= 1");
    if (!(null_tol > 0.0 && null_tol < 1.0)) throw InvalidArgument("fit_content_exact: null_tol must lie in (0, 1)");
    const Matrix null_basis = style_null_basis(deltas, all_features.cols(), null_tol);
    if (null_basis.cols() < k) {
        throw InsufficientNullSpace(static_cast<std::size_t>(k), static_cast<std::size_t>(null_basis.cols()));
    }
    const Matrix projected = null_basis.transpose() * second_moment(all_features) * null_basis;
    const linalg::EigenResult eig = linalg::sym_eig(0.5 * (projected + projected.transpose()));
    Matrix q = rows_of(null_basis * eig.eigenvectors.leftCols(k));
    for (Index r = 0; r < q.rows(); ++r) {
        Vector row = q.row(r).transpose();
        linalg::fix_sign(row);
        q.row(r) = row.transpose();
    }
    return {std::move(q), eig.eigenvalues};
}

}  // namespace detail

/// Content rows for lambda = +inf: the top-k eigenvectors of the second
/// moment restricted to the null space of the stacked style differences, so
/// content factors are exactly invariant to every observed manipulation.
inline Matrix fit_content_exact(const Matrix& all_features, const std::vector<Matrix>& deltas, Index k,
                                double null_tol = 1e-10) {
    return detail::solve_content_exact(all_features, deltas, k, null_tol).rows;
}

inline ProjectionMatrix assemble(const std::vector<StyleFit>& style_fits, const Matrix& content, double lambda,
                                 double eta) {
    if (style_fits.empty()) throw InvalidArgument("assemble: at least one style fit is required");
    linalg::require_nonempty(content, "assemble");
    const Index dp = content.cols();
    const Index m = static_cast<Index>(style_fits.size());
    const Index k = content.rows();
    if (m + k > dp) {
        throw InvalidArgument("assemble: m + k = " + std::to_string(m + k) + " exceeds d' = " + std::to_string(dp));
    }
    if (std::isnan(lambda) || lambda < 0.0) throw InvalidArgument("assemble: lambda must be >= 0 or +inf");
    if (!(eta > 0.0 && eta <= 1.0)) throw InvalidArgument("assemble: eta must lie in (0, 1]");
    const double ortho = (content * content.transpose() - Matrix::Identity(k, k)).cwiseAbs().maxCoeff();
    if (ortho > 1e-8) throw InvalidArgument("assemble: content rows are not orthonormal");

    ProjectionMatrix p;
    p.style_rows.resize(m, dp);
    std::set<std::string> seen;
    for (Index j = 0; j < m; ++j) {
        const StyleFit& fit = style_fits[static_cast<std::size_t>(j)];
        if (fit.direction.size() != dp) throw InvalidArgument("assemble: style direction length differs from d'");
        std::string name = fit.style_name.empty() ? "style" + std::to_string(j) : fit.style_name;
        if (!seen.insert(name).second) throw InvalidArgument("assemble: duplicate style name '" + name + "'");
        p.style_rows.row(j) = fit.direction.transpose();
        p.style_names.push_back(std::move(name));
    }
    p.content_rows = content;
    p.lambda = lambda;
    p.k = k;
    p.eta = eta;
    return p;
}

inline FactorizedFeatures transform(const ProjectionMatrix& p, const Matrix& features) {
    if (features.cols() != p.d_prime()) {
        throw InvalidArgument("transform: features have " + std::to_string(features.cols()) +
                              " columns, projection expects " + std::to_string(p.d_prime()));
    }
    return {features * p.style_rows.transpose(), features * p.content_rows.transpose()};
}

inline Matrix content_only(const ProjectionMatrix& p, const Matrix& features) {
    return transform(p, features).content_factors;
}

struct FitOptions {
    double lambda = kInfiniteLambda;
    std::optional<Index> k;  // defaults to round(eta * d') - m
    double eta = 0.95;
    double null_tol = 1e-10;
    std::vector<std::string> style_names;  // defaults to "z<index>"
};

struct FitResult {
    ProjectionMatrix projection;
    std::vector<StyleFit> styles;
    Vector spectrum;  // eigenvalues of the content problem, descending
};

/// End-to-end fit on a paired dataset: one regression per style on the
/// (minus, -1) / (plus, +1) rows, then the content eigenproblem on the
/// base + modified stack.
inline FitResult fit_projection(const synthetic::PairedDataset& ds, const FitOptions& opt = {}) {
    ds.validate();
    const Index dp = ds.d_prime();
    const Index m = ds.m();
    if (!opt.style_names.empty() && static_cast<Index>(opt.style_names.size()) != m) {
        throw InvalidArgument("fit: style_names must list one name per style");
    }
    const Index k = opt.k ? *opt.k : content_dim(dp, m, opt.eta);

    FitResult out;
    for (Index j = 0; j < m; ++j) {
        const auto& s = ds.styles[static_cast<std::size_t>(j)];
        std::string name =
            opt.style_names.empty() ? "z" + std::to_string(s.style) : opt.style_names[static_cast<std::size_t>(j)];
        out.styles.push_back(fit_style_direction(s.minus, s.plus, s.ann_minus, s.ann_plus, std::move(name)));
    }

    const Matrix stack = ds.stacked();
    const std::vector<Matrix> deltas = ds.deltas();
    Matrix content;
    if (std::isinf(opt.lambda)) {
        auto sol = detail::solve_content_exact(stack, deltas, k, opt.null_tol);
        content = std::move(sol.rows);
        out.spectrum = std::move(sol.spectrum);
    } else {
        if (k < 1 || k > dp) throw InvalidArgument("fit: k must lie in [1, d']");
        const linalg::EigenResult eig = linalg::sym_eig(content_objective_matrix(stack, deltas, opt.lambda));
        content = detail::rows_of(eig.eigenvectors.leftCols(k));
        out.spectrum = eig.eigenvalues;
    }
    out.projection = assemble(out.styles, content, opt.lambda, opt.eta);
    return out;
}

}  // namespace pisco
