#pragma once

// Correlation-based disentanglement diagnostics and runtime residuals for
// the recovery guarantees on synthetic data with a known entangler.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "pisco/core.hpp"
#include "pisco/linalg.hpp"
#include "pisco/synthetic.hpp"

namespace pisco::metrics {

struct DisentangleReport {
    double style_recovery_discrepancy = 0.0;
    double scd = 0.0;
    Vector per_style_corr;  // |corr(zhat_j, z_j)|
    double corr_recovery_residual = 0.0;
    Vector direction_residual;
    double content_style_leak = 0.0;
    double content_min_sv = 0.0;
};

struct RecoveryResiduals {
    Vector direction;
    double content_leak = 0.0;
    double content_min_sv = 0.0;
};

/// ||corr(z_S, zhat_S) - corr(z_S)||, normalized Frobenius.
inline double style_recovery_discrepancy(const Matrix& z_style, const Matrix& zhat_style) {
    if (z_style.rows() != zhat_style.rows() || z_style.cols() != zhat_style.cols()) {
        throw InvalidArgument("style_recovery_discrepancy: inputs must have identical shape");
    }
    const Matrix diff = linalg::cross_corr(z_style, zhat_style).values - linalg::corr(z_style).values;
    return linalg::norm_fro(diff);
}

/// Style-content disentanglement ||corr(zhat_C, z_S)||, normalized Frobenius.
inline double scd(const Matrix& zhat_content, const Matrix& z_style) {
    if (zhat_content.rows() != z_style.rows()) throw InvalidArgument("scd: row counts differ");
    return linalg::norm_fro(linalg::cross_corr(zhat_content, z_style).values);
}

inline Matrix select_columns(const Matrix& x, const std::vector<Index>& cols) {
    Matrix out(x.rows(), static_cast<Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Index>(c)) = x.col(cols[c]);
    return out;
}

/// direction[j] = ||A^T p_j - beta_j e_j|| / |beta_j|; content_leak = max |Q A_{., S}|;
/// content_min_sv = smallest singular value of Q A_{., C}.
inline RecoveryResiduals recovery_residuals(const ProjectionMatrix& p, const Matrix& a,
                                          const std::vector<Index>& style_set, const Vector& beta) {
    if (a.rows() != p.d_prime()) {
        throw InvalidArgument("recovery_residuals: entangler has " + std::to_string(a.rows()) +
                              " rows, projection expects " + std::to_string(p.d_prime()));
    }
    if (static_cast<Index>(style_set.size()) != p.m() || beta.size() != p.m()) {
        throw InvalidArgument("recovery_residuals: style_set and beta must have one entry per style row");
    }
    const Index d = a.cols();
    std::vector<Index> content;
    for (Index i = 0; i < d; ++i) {
        if (std::find(style_set.begin(), style_set.end(), i) == style_set.end()) content.push_back(i);
    }

    RecoveryResiduals out;
    out.direction.resize(p.m());
    for (Index j = 0; j < p.m(); ++j) {
        if (beta(j) == 0.0) throw InvalidArgument("recovery_residuals: beta must be nonzero");
        const Index sj = style_set[static_cast<std::size_t>(j)];
        if (sj < 0 || sj >= d) throw InvalidArgument("recovery_residuals: style index out of range");
        Vector r = a.transpose() * p.style_rows.row(j).transpose();
        r(sj) -= beta(j);
        out.direction(j) = r.norm() / std::abs(beta(j));
    }
    const Matrix qa = p.content_rows * a;
    out.content_leak = select_columns(qa, style_set).cwiseAbs().maxCoeff();
    out.content_min_sv = content.empty() ? 0.0 : linalg::min_singular_value(select_columns(qa, content));
    return out;
}

/// Scale-free variant of the direction residual: max_i |(A^T p_j)_i / (A^T p_j)_{s_j} - [i == s_j]|.
inline Vector style_alignment_residual(const ProjectionMatrix& p, const Matrix& a,
                                       const std::vector<Index>& style_set) {
    Vector out(p.m());
    for (Index j = 0; j < p.m(); ++j) {
        Vector r = a.transpose() * p.style_rows.row(j).transpose();
        const Index sj = style_set.at(static_cast<std::size_t>(j));
        r /= r(sj);
        r(sj) -= 1.0;
        out(j) = r.cwiseAbs().maxCoeff();
    }
    return out;
}

/// Every diagnostic for a synthetic dataset. `beta` defaults to the slope
/// implied by +/-1 sign annotations for every style.
inline DisentangleReport full_report(const synthetic::PairedDataset& ds, const ProjectionMatrix& p,
                                     std::optional<Vector> beta = std::nullopt) {
    if (!ds.truth) throw InvalidArgument("full_report: dataset has no ground truth");
    const synthetic::GroundTruth& truth = *ds.truth;
    const std::vector<Index>& style_set = truth.latent.style_set;
    if (static_cast<Index>(style_set.size()) != p.m()) {
        throw InvalidArgument("full_report: projection style count differs from the dataset");
    }
    const Vector b = beta ? *beta : Vector::Constant(p.m(), synthetic::sign_annotation_slope());

    const FactorizedFeatures f = transform(p, ds.base);
    const Matrix z_style = select_columns(truth.z, style_set);

    DisentangleReport r;
    r.style_recovery_discrepancy = style_recovery_discrepancy(z_style, f.style_factors);
    r.scd = scd(f.content_factors, z_style);
    r.per_style_corr.resize(p.m());
    const Matrix paired = linalg::cross_corr(z_style, f.style_factors).values;
    for (Index j = 0; j < p.m(); ++j) r.per_style_corr(j) = std::abs(paired(j, j));
    r.corr_recovery_residual =
        linalg::norm_fro(linalg::corr(f.style_factors).values - linalg::corr(z_style).values);
    const RecoveryResiduals t = recovery_residuals(p, truth.entangler, style_set, b);
    r.direction_residual = t.direction;
    r.content_style_leak = t.content_leak;
    r.content_min_sv = t.content_min_sv;
    return r;
}

struct Summary {
    double median = 0.0;
    double q25 = 0.0;
    double q75 = 0.0;
};

/// Median and quartiles by linear interpolation between order statistics.
inline Summary summarize(std::vector<double> values) {
    if (values.empty()) throw InvalidArgument("summarize: no values");
    std::sort(values.begin(), values.end());
    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(values.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = static_cast<std::size_t>(std::ceil(pos));
        return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
    };
    return {quantile(0.5), quantile(0.25), quantile(0.75)};
}

inline double median(std::vector<double> values) { return summarize(std::move(values)).median; }

}  // namespace pisco::metrics
