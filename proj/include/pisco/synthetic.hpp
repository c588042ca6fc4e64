#pragma once

// Synthetic generative benchmark: correlated Gaussian latents, a
// lower-triangular x orthogonal mixing map, one-sided sign manipulations of
// each style coordinate and +/-1 annotations.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pisco/linalg.hpp"

namespace pisco::synthetic {

struct LatentSpec {
    Index d = 10;
    std::vector<Index> style_set{0, 1, 2, 3, 4};
    double rho = 0.0;  // correlation between coordinates 0 and 1
    double annotation_noise_std = 0.0;

    Index m() const { return static_cast<Index>(style_set.size()); }

    bool is_style(Index i) const {
        for (Index s : style_set) {
            if (s == i) return true;
        }
        return false;
    }

    std::vector<Index> content_set() const {
        std::vector<Index> out;
        for (Index i = 0; i < d; ++i) {
            if (!is_style(i)) out.push_back(i);
        }
        return out;
    }

    Matrix covariance() const {
        Matrix sigma = Matrix::Identity(d, d);
        if (d >= 2) sigma(0, 1) = sigma(1, 0) = rho;
        return sigma;
    }

    void validate() const {
        if (d < 2) throw InvalidSpec("latent.d: must be >= 2");
        if (style_set.empty()) throw InvalidSpec("latent.style_set: must be nonempty");
        for (std::size_t i = 0; i < style_set.size(); ++i) {
            if (style_set[i] < 0 || style_set[i] >= d) {
                throw InvalidSpec("latent.style_set: index " + std::to_string(style_set[i]) + " outside [0, d)");
            }
            if (i > 0 && style_set[i] <= style_set[i - 1]) {
                throw InvalidSpec("latent.style_set: indices must be strictly increasing");
            }
        }
        if (m() >= d) throw InvalidSpec("latent.style_set: at least one content coordinate is required");
        if (!std::isfinite(rho) || std::abs(rho) >= 1.0) throw InvalidSpec("latent.rho: must satisfy |rho| < 1");
        // Manipulating one member of the correlated pair moves the other; that
        // partner must itself be a style coordinate or content would change.
        if (rho != 0.0 && is_style(0) != is_style(1)) {
            throw InvalidSpec("latent.style_set: with rho != 0 coordinates 0 and 1 must both be style or both content");
        }
        if (!std::isfinite(annotation_noise_std) || annotation_noise_std < 0.0) {
            throw InvalidSpec("latent.annotation_noise_std: must be finite and >= 0");
        }
    }
};

struct EntanglerSpec {
    Index d_prime = 10;
    double offdiag = 0.9;
    std::uint64_t seed = 0;
};

/// Least-squares slope of a +/-1 sign annotation on a unit-variance
/// coordinate: E|z| / Var(z) = sqrt(2 / pi). Plays the role of beta_j for
/// the generated annotations.
inline double sign_annotation_slope() { return std::sqrt(2.0 / std::numbers::pi); }

/// Per-style manipulated samples and their annotations.
struct StyleSamples {
    Index style = 0;  // latent coordinate index
    Matrix plus;      // n x d'
    Matrix minus;     // n x d'
    Vector ann_plus;
    Vector ann_minus;
};

struct GroundTruth {
    Matrix z;                     // n x d
    std::vector<Matrix> z_plus;   // per style, n x d
    std::vector<Matrix> z_minus;  // per style, n x d
    Matrix entangler;             // d' x d
    LatentSpec latent;
};

struct PairedDataset {
    Matrix base;  // n x d'
    std::vector<StyleSamples> styles;
    std::optional<GroundTruth> truth;

    Index n() const { return base.rows(); }
    Index d_prime() const { return base.cols(); }
    Index m() const { return static_cast<Index>(styles.size()); }

    /// Row i of the result is whichever of plus/minus differs from the base
    /// row (one of them reproduces it exactly); plus when neither matches.
    Matrix modified(Index j) const {
        const StyleSamples& s = styles.at(static_cast<std::size_t>(j));
        Matrix out(n(), d_prime());
        for (Index i = 0; i < n(); ++i) {
            const bool plus_is_base = s.plus.row(i) == base.row(i);
            out.row(i) = plus_is_base ? s.minus.row(i) : s.plus.row(i);
        }
        return out;
    }

    /// Feature differences u - u^(j) for style j (up to a per-row sign, which
    /// the content objective is insensitive to).
    Matrix delta(Index j) const {
        const StyleSamples& s = styles.at(static_cast<std::size_t>(j));
        return s.plus - s.minus;
    }

    std::vector<Matrix> deltas() const {
        std::vector<Matrix> out;
        for (Index j = 0; j < m(); ++j) out.push_back(delta(j));
        return out;
    }

    /// (m+1)n x d' stack of base rows followed by each style's modified rows.
    Matrix stacked() const {
        Matrix out(n() * (m() + 1), d_prime());
        out.topRows(n()) = base;
        for (Index j = 0; j < m(); ++j) out.middleRows(n() * (j + 1), n()) = modified(j);
        return out;
    }

    void validate() const {
        if (n() < 1 || d_prime() < 1) throw InvalidArgument("dataset: base features are empty");
        linalg::require_finite(base, "dataset.base");
        if (styles.empty()) throw InvalidArgument("dataset: no styles");
        for (const auto& s : styles) {
            const std::string tag = "dataset.style[" + std::to_string(s.style) + "]";
            if (s.plus.rows() != n() || s.plus.cols() != d_prime() || s.minus.rows() != n() ||
                s.minus.cols() != d_prime()) {
                throw InvalidArgument(tag + ": manipulated features must be " + std::to_string(n()) + "x" +
                                      std::to_string(d_prime()));
            }
            if (s.ann_plus.size() != n() || s.ann_minus.size() != n()) {
                throw InvalidArgument(tag + ": annotation vectors must have length " + std::to_string(n()));
            }
            linalg::require_finite(s.plus, tag.c_str());
            linalg::require_finite(s.minus, tag.c_str());
        }
    }
};

/// n draws from N(0, Sigma) via the Cholesky factor of Sigma.
inline Matrix sample_latents(const LatentSpec& spec, Index n, std::uint64_t seed) {
    spec.validate();
    if (n < 1) throw InvalidArgument("sample_latents: n must be >= 1");
    const Eigen::LLT<Matrix> llt(spec.covariance());
    if (llt.info() != Eigen::Success) {
        throw InvalidSpec("latent.rho: covariance is not positive definite");
    }
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix g(n, spec.d);
    for (Index i = 0; i < n; ++i) {
        for (Index c = 0; c < spec.d; ++c) g(i, c) = normal(rng);
    }
    const Matrix lower = llt.matrixL();
    return g * lower.transpose();
}

/// Sets coordinate j to sign * |z_j|. A change of delta to coordinate 0 (or
/// 1) moves the other member of the pair by rho * delta.
inline Vector manipulate(const Vector& z, Index j, int sign, const LatentSpec& spec) {
    if (!spec.is_style(j)) {
        throw InvalidArgument("manipulate: coordinate " + std::to_string(j) + " is not a style coordinate");
    }
    if (sign != 1 && sign != -1) throw InvalidArgument("manipulate: sign must be +1 or -1");
    if (z.size() != spec.d) throw InvalidArgument("manipulate: latent vector has wrong dimension");
    Vector out = z;
    const double target = sign * std::abs(z(j));
    const double delta = target - z(j);
    out(j) = target;
    if ((j == 0 || j == 1) && spec.d >= 2 && delta != 0.0) {
        out(1 - j) += spec.rho * delta;
    }
    return out;
}

/// A = L * O with L unit lower-triangular (strict lower part = offdiag) and O
/// the first d columns of a Haar orthogonal d' x d' matrix.
inline Matrix build_entangler(const EntanglerSpec& spec, Index d) {
    if (d < 1 || spec.d_prime < d) {
        throw InvalidSpec("entangler.d_prime: must be >= latent dimension " + std::to_string(d));
    }
    if (!std::isfinite(spec.offdiag)) throw InvalidSpec("entangler.offdiag: must be finite");
    const Index dp = spec.d_prime;
    Matrix lower = Matrix::Identity(dp, dp);
    for (Index r = 1; r < dp; ++r) {
        for (Index c = 0; c < r; ++c) lower(r, c) = spec.offdiag;
    }
    const Matrix orth = linalg::haar_orthogonal(dp, spec.seed).leftCols(d);
    Matrix a = lower * orth;
    const double smin = linalg::min_singular_value(a);
    if (!(smin > 1e-10)) {
        throw EntanglerConstruction("entangler is not left invertible (smallest singular value " +
                                    std::to_string(smin) + ")");
    }
    return a;
}

namespace detail {

inline Rng stream(std::uint64_t seed, std::uint64_t id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(id)};
    return Rng(seq);
}

}  // namespace detail

/// Full paired dataset for every style coordinate. Latents and annotation
/// noise come from independent streams derived from `seed`.
inline PairedDataset generate(const LatentSpec& latent, const EntanglerSpec& ent, Index n, std::uint64_t seed) {
    latent.validate();
    if (n < 1) throw InvalidArgument("generate: n must be >= 1");
    const Matrix a = build_entangler(ent, latent.d);
    const Matrix z = sample_latents(latent, n, seed);

    PairedDataset ds;
    ds.base = z * a.transpose();
    GroundTruth truth{z, {}, {}, a, latent};

    Rng noise_rng = detail::stream(seed, 1);
    std::normal_distribution<double> noise(0.0, latent.annotation_noise_std);
    auto draw = [&] { return latent.annotation_noise_std > 0.0 ? noise(noise_rng) : 0.0; };

    for (Index j : latent.style_set) {
        Matrix zp(n, latent.d);
        Matrix zm(n, latent.d);
        for (Index i = 0; i < n; ++i) {
            const Vector row = z.row(i).transpose();
            zp.row(i) = manipulate(row, j, +1, latent).transpose();
            zm.row(i) = manipulate(row, j, -1, latent).transpose();
        }
        StyleSamples s{j, zp * a.transpose(), zm * a.transpose(), Vector(n), Vector(n)};
        for (Index i = 0; i < n; ++i) {
            // The unflipped side reproduces the base row bit for bit.
            if (zp.row(i) == z.row(i)) s.plus.row(i) = ds.base.row(i);
            if (zm.row(i) == z.row(i)) s.minus.row(i) = ds.base.row(i);
            s.ann_plus(i) = 1.0 + draw();
            s.ann_minus(i) = -1.0 + draw();
        }
        ds.styles.push_back(std::move(s));
        truth.z_plus.push_back(std::move(zp));
        truth.z_minus.push_back(std::move(zm));
    }
    ds.truth = std::move(truth);
    return ds;
}

}  // namespace pisco::synthetic
