#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pisco/core.hpp"
#include "pisco/metrics.hpp"
#include "pisco/synthetic.hpp"

using namespace pisco;

namespace {

synthetic::PairedDataset default_data(Index n, std::uint64_t seed, double rho = 0.0, Index d_prime = 10) {
    synthetic::LatentSpec latent;
    latent.rho = rho;
    synthetic::EntanglerSpec ent;
    ent.d_prime = d_prime;
    return synthetic::generate(latent, ent, n, seed);
}

// The 2n pooled regression rows used for style j.
struct Pooled {
    Matrix x;
    Vector y;
};

Pooled pooled(const synthetic::PairedDataset& ds, Index j) {
    const auto& s = ds.styles[static_cast<std::size_t>(j)];
    Pooled p{Matrix(2 * ds.n(), ds.d_prime()), Vector(2 * ds.n())};
    p.x << s.minus, s.plus;
    p.y << s.ann_minus, s.ann_plus;
    return p;
}

double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

// ---- style regression -------------------------------------------------------

TEST(StyleDirection, ScalarFeatureRecoversInverseScale) {
    Rng rng(1);
    const Matrix z = linalg::standard_normal(100, 1, rng);
    const Matrix z2 = linalg::standard_normal(100, 1, rng);
    const double a = 2.5;
    const StyleFit fit = fit_style_direction(a * z, a * z2, z.col(0), z2.col(0));
    ASSERT_EQ(fit.direction.size(), 1);
    EXPECT_NEAR(fit.direction(0), 1.0 / a, 1e-12);
    EXPECT_NEAR(fit.mse, 0.0, 1e-20);
}

TEST(StyleDirection, IdentityMixingConcentratesOnTheStyleCoordinate) {
    synthetic::LatentSpec latent;
    const Matrix z = synthetic::sample_latents(latent, 5000, 2);
    for (Index j : latent.style_set) {
        Matrix plus(z.rows(), z.cols()), minus(z.rows(), z.cols());
        for (Index i = 0; i < z.rows(); ++i) {
            plus.row(i) = synthetic::manipulate(z.row(i).transpose(), j, +1, latent).transpose();
            minus.row(i) = synthetic::manipulate(z.row(i).transpose(), j, -1, latent).transpose();
        }
        const StyleFit fit = fit_style_direction(minus, plus, -Vector::Ones(z.rows()), Vector::Ones(z.rows()));
        Vector expected = Vector::Zero(10);
        expected(j) = synthetic::sign_annotation_slope();
        EXPECT_LT((fit.direction - expected).norm(), 0.05) << "style " << j;
    }
}

TEST(StyleDirection, AgreesWithVanishingRidgePath) {
    // d' = 12 > d = 10: the feature covariance is singular and the
    // minimum-norm solution is the limit of the ridge path.
    const auto ds = default_data(300, 3, 0.0, 12);
    for (Index j = 0; j < ds.m(); ++j) {
        const Pooled p = pooled(ds, j);
        const auto& s = ds.styles[static_cast<std::size_t>(j)];
        const StyleFit fit = fit_style_direction(s.minus, s.plus, s.ann_minus, s.ann_plus);
        const Vector ref = oracle::extrapolate_ridge(p.x, p.y, {1e-6, 2e-6, 1e-5, 1e-4});
        EXPECT_LT((fit.direction - ref).cwiseAbs().maxCoeff(), 1e-4) << "style " << j;
    }
}

TEST(StyleDirection, SingularCovarianceGivesMinimumNormSolution) {
    const auto ds = default_data(200, 4, 0.0, 12);
    const auto& s = ds.styles[0];
    const StyleFit fit = fit_style_direction(s.minus, s.plus, s.ann_minus, s.ann_plus);
    // The solution lies in the row space of the centered features, so it is
    // orthogonal to the 2-dimensional left null space of the entangler.
    const Matrix a = ds.truth->entangler;
    Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeFullU);
    const Matrix left_null = svd.matrixU().rightCols(2);
    EXPECT_LT((left_null.transpose() * fit.direction).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(StyleDirection, ConstantAnnotationsAreDegenerate) {
    const auto ds = default_data(20, 5);
    const auto& s = ds.styles[0];
    const Vector ones = Vector::Ones(ds.n());
    EXPECT_THROW(fit_style_direction(s.minus, s.plus, ones, ones, "z0"), DegenerateRegression);
}

TEST(StyleDirection, ShapeAndFinitenessErrors) {
    const auto ds = default_data(20, 5);
    const auto& s = ds.styles[0];
    EXPECT_THROW(fit_style_direction(s.minus, s.plus.topRows(10), s.ann_minus, s.ann_plus), InvalidArgument);
    EXPECT_THROW(fit_style_direction(s.minus, s.plus, s.ann_minus.head(5), s.ann_plus), InvalidArgument);
    Matrix bad = s.plus;
    bad(3, 3) = std::nan("");
    EXPECT_THROW(fit_style_direction(s.minus, bad, s.ann_minus, s.ann_plus), InvalidArgument);
    EXPECT_THROW(fit_style_direction(s.minus.topRows(1), s.plus.topRows(1), s.ann_minus.head(1),
                                     s.ann_plus.head(1)),
                 InvalidArgument);
}

// ---- content objective -----------------------------------------------------

TEST(ContentObjective, ZeroPenaltyIsTheSecondMoment) {
    const auto ds = default_data(100, 6);
    const Matrix u = ds.stacked();
    const Matrix m = content_objective_matrix(u, ds.deltas(), 0.0);
    const Matrix ref = u.transpose() * u / static_cast<double>(u.rows());
    EXPECT_LT(max_abs(m - ref), 1e-12);
}

TEST(ContentObjective, NoStyleChangeMeansNoPenalty) {
    const auto ds = default_data(100, 6);
    const Matrix u = ds.stacked();
    std::vector<Matrix> zero(5, Matrix::Zero(100, 10));
    EXPECT_EQ(content_objective_matrix(u, zero, 1000.0), content_objective_matrix(u, zero, 0.0));
    EXPECT_EQ(fit_content(u, zero, 1000.0, 5), fit_content(u, zero, 0.0, 5));
}

TEST(ContentObjective, RetainedObjectiveEqualsTopEigenvalues) {
    const auto ds = default_data(150, 7, 0.3);
    const Matrix u = ds.stacked();
    for (double lambda : {0.0, 1.0, 10.0, 100.0}) {
        const Matrix obj = content_objective_matrix(u, ds.deltas(), lambda);
        const Matrix q = fit_content(u, ds.deltas(), lambda, 5);
        const linalg::EigenResult eig = linalg::sym_eig(obj);
        const double retained = (q * obj * q.transpose()).trace();
        EXPECT_NEAR(retained, eig.eigenvalues.head(5).sum(), 1e-10 * (1.0 + std::abs(retained)));
        EXPECT_LT(max_abs(q * q.transpose() - Matrix::Identity(5, 5)), 1e-12);
    }
}

TEST(ContentObjective, PenaltyTraceEqualsMeanSquaredChange) {
    const auto ds = default_data(120, 20, 0.6);
    const Matrix u = ds.stacked();
    const std::vector<Matrix> deltas = ds.deltas();
    const Matrix penalty = content_objective_matrix(u, deltas, 0.0) - content_objective_matrix(u, deltas, 1.0);
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const Matrix q = linalg::haar_orthogonal(10, seed).topRows(4);
        double direct = 0.0;
        for (const Matrix& d : deltas) {
            double sum = 0.0;
            for (Index i = 0; i < d.rows(); ++i) sum += (q * d.row(i).transpose()).squaredNorm();
            direct += sum / static_cast<double>(d.rows());
        }
        direct /= static_cast<double>(deltas.size());
        EXPECT_NEAR((q.transpose() * q * penalty).trace(), direct, 1e-10);
    }
}

TEST(ContentObjective, FullBasisIsOrthogonal) {
    const auto ds = default_data(80, 8);
    const Matrix q = fit_content(ds.stacked(), ds.deltas(), 10.0, 10);
    EXPECT_LT(max_abs(q.transpose() * q - Matrix::Identity(10, 10)), 1e-12);
}

TEST(ContentObjective, MatchesPowerIterationPrincipalAxes) {
    const auto ds = default_data(120, 9);
    const Matrix u = ds.stacked();
    const Matrix q = fit_content(u, ds.deltas(), 0.0, 4);
    const oracle::PowerPairs ref = oracle::power_iteration(u.transpose() * u / static_cast<double>(u.rows()));
    for (Index r = 0; r < 4; ++r) {
        const Vector v = ref.vectors[static_cast<std::size_t>(r)];
        const Vector row = q.row(r).transpose();
        EXPECT_LT(std::min((row - v).cwiseAbs().maxCoeff(), (row + v).cwiseAbs().maxCoeff()), 1e-8);
    }
}

TEST(ContentObjective, PenaltyDecreasesAlongLambda) {
    const auto ds = default_data(200, 10, 0.6);
    const Matrix u = ds.stacked();
    const Matrix change = style_change_matrix(ds.deltas(), 10);
    double previous = std::numeric_limits<double>::infinity();
    for (double lambda : {0.0, 1.0, 10.0, 100.0, 1000.0}) {
        const Matrix q = fit_content(u, ds.deltas(), lambda, 5);
        const double penalty = (q * change * q.transpose()).trace();
        EXPECT_LE(penalty, previous + 1e-10) << "lambda " << lambda;
        previous = penalty;
    }
}

TEST(ContentObjective, InvalidInputs) {
    const auto ds = default_data(30, 11);
    const Matrix u = ds.stacked();
    EXPECT_THROW(fit_content(u, ds.deltas(), 1.0, 11), InvalidArgument);
    EXPECT_THROW(fit_content(u, ds.deltas(), 1.0, 0), InvalidArgument);
    EXPECT_THROW(content_objective_matrix(u, ds.deltas(), -1.0), InvalidArgument);
    EXPECT_THROW(content_objective_matrix(u, ds.deltas(), kInfiniteLambda), InvalidArgument);
    EXPECT_THROW(content_objective_matrix(u.topRows(100), ds.deltas(), 1.0), InvalidArgument);
}

// ---- exact (infinite penalty) mode ------------------------------------------

TEST(ExactContent, NoStyleChangeReducesToPrincipalAxes) {
    const auto ds = default_data(100, 12);
    const Matrix u = ds.stacked();
    std::vector<Matrix> zero(5, Matrix::Zero(100, 10));
    const Matrix exact = fit_content_exact(u, zero, 4);
    const Matrix pca = fit_content(u, {}, 0.0, 4);
    for (Index r = 0; r < 4; ++r) {
        const Vector a = exact.row(r).transpose();
        const Vector b = pca.row(r).transpose();
        EXPECT_LT(std::min((a - b).cwiseAbs().maxCoeff(), (a + b).cwiseAbs().maxCoeff()), 1e-10);
    }
}

TEST(ExactContent, AnnihilatesStyleColumnsOfTheEntangler) {
    for (std::uint64_t seed : {13u, 14u, 15u}) {
        const auto ds = default_data(900, seed, 0.6);
        const FitResult fit = fit_projection(ds);
        const auto t = metrics::recovery_residuals(fit.projection, ds.truth->entangler, ds.truth->latent.style_set,
                                                  Vector::Ones(5));
        EXPECT_LE(t.content_leak, 1e-8);
        EXPECT_GT(t.content_min_sv, 1e-6);
        for (const Matrix& d : ds.deltas()) EXPECT_LE(max_abs(d * fit.projection.content_rows.transpose()), 1e-8);
    }
}

TEST(ExactContent, TooManyContentFactorsReportsFeasibleCount) {
    const auto ds = default_data(100, 16);
    FitOptions opt;
    opt.k = 8;
    try {
        fit_projection(ds, opt);
        FAIL() << "expected InsufficientNullSpace";
    } catch (const InsufficientNullSpace& e) {
        EXPECT_EQ(e.requested(), 8u);
        EXPECT_EQ(e.feasible(), 5u);
        EXPECT_EQ(e.exit_code(), 3);
        EXPECT_NE(std::string(e.what()).find("k <= 5"), std::string::npos);
    }
}

// ---- assembly and transform -------------------------------------------------

TEST(ContentDim, RoundsTheRetainedFraction) {
    EXPECT_EQ(content_dim(512, 4, 0.95), 482);
    EXPECT_EQ(content_dim(10, 5, 0.95), 5);
    EXPECT_THROW(content_dim(10, 10, 0.95), InvalidArgument);
    EXPECT_THROW(content_dim(10, 2, 0.0), InvalidArgument);
    EXPECT_THROW(content_dim(10, 2, 1.5), InvalidArgument);
}

TEST(Assemble, RejectsInconsistentParts) {
    const Matrix q = Matrix::Identity(10, 10).topRows(5);
    StyleFit a{Vector::Ones(10), 0.0, "color", 0.0};
    StyleFit b{Vector::Ones(10), 0.0, "color", 0.0};
    EXPECT_THROW(assemble({a, b}, q, 1.0, 0.95), InvalidArgument);
    b.style_name = "size";
    EXPECT_NO_THROW(assemble({a, b}, q, 1.0, 0.95));
    EXPECT_THROW(assemble({}, q, 1.0, 0.95), InvalidArgument);
    EXPECT_THROW(assemble({a, b}, Matrix::Identity(10, 10).topRows(9), 1.0, 0.95), InvalidArgument);
    EXPECT_THROW(assemble({a, b}, 2.0 * q, 1.0, 0.95), InvalidArgument);
    EXPECT_THROW(assemble({a, b}, q, -1.0, 0.95), InvalidArgument);
    StyleFit unnamed{Vector::Ones(10), 0.0, "", 0.0};
    EXPECT_EQ(assemble({unnamed}, q, kInfiniteLambda, 0.95).style_names.front(), "style0");
}

TEST(Transform, ShapesAndValues) {
    StyleFit s{Vector::Unit(4, 0), 0.0, "a", 0.0};
    const Matrix q = Matrix::Identity(4, 4).bottomRows(2);
    const ProjectionMatrix p = assemble({s}, q, 1.0, 0.75);
    Matrix x(1, 4);
    x << 1.0, 2.0, 3.0, 4.0;
    const FactorizedFeatures f = transform(p, x);
    EXPECT_EQ(f.style_factors(0, 0), 1.0);
    EXPECT_EQ(f.content_factors(0, 0), 3.0);
    EXPECT_EQ(f.content_factors(0, 1), 4.0);
    EXPECT_EQ(transform(p, Matrix::Zero(3, 4)).content_factors, Matrix::Zero(3, 2));
    EXPECT_EQ(content_only(p, x), f.content_factors);
    EXPECT_THROW(transform(p, Matrix::Zero(1, 5)), InvalidArgument);
    EXPECT_EQ(p.matrix().rows(), 3);
}

TEST(FitProjection, BitDeterministic) {
    const auto ds = default_data(300, 17, 0.6);
    for (double lambda : {10.0, kInfiniteLambda}) {
        FitOptions opt;
        opt.lambda = lambda;
        const FitResult a = fit_projection(ds, opt);
        const FitResult b = fit_projection(ds, opt);
        EXPECT_EQ(a.projection.matrix(), b.projection.matrix());
        EXPECT_EQ(a.projection.style_names, b.projection.style_names);
        EXPECT_EQ(a.projection.style_names.front(), "z0");
    }
}

TEST(FitProjection, StyleFactorsTrackTheirLatents) {
    const auto ds = default_data(5000, 18);
    const FitResult fit = fit_projection(ds);
    const FactorizedFeatures f = transform(fit.projection, ds.base);
    for (Index j = 0; j < 5; ++j) {
        EXPECT_GT(std::abs(oracle::pearson(f.style_factors.col(j), ds.truth->z.col(j))), 0.99) << "style " << j;
    }
}

TEST(FitProjection, StyleNamesAreValidated) {
    const auto ds = default_data(50, 19);
    FitOptions opt;
    opt.style_names = {"a", "b"};
    EXPECT_THROW(fit_projection(ds, opt), InvalidArgument);
    opt.style_names = {"a", "b", "c", "d", "e"};
    EXPECT_EQ(fit_projection(ds, opt).projection.style_names[4], "e");
}
