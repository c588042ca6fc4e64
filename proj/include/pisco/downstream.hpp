#pragma once

// Spurious-correlation protocol and a full-batch multinomial logistic
// regression used to measure in-distribution and shifted accuracy of raw
// versus content-only features.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "pisco/core.hpp"
#include "pisco/linalg.hpp"
#include "pisco/synthetic.hpp"

namespace pisco::downstream {

using Labels = std::vector<int>;

struct SpuriousConfig {
    double alpha = 0.5;
    int n_classes = 10;
    Index style_index = 0;  // latent coordinate whose manipulation is made spurious
    std::uint64_t seed = 0;
    double train_fraction = 0.5;  // leading rows form the training split

    void validate() const {
        if (!(alpha >= 0.5 && alpha <= 1.0)) throw InvalidArgument("alpha: must lie in [0.5, 1]");
        if (n_classes < 2) throw InvalidArgument("n_classes: must be >= 2");
        if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
            throw InvalidArgument("train_fraction: must lie in (0, 1)");
        }
    }
};

struct LabeledFeatures {
    Matrix features;  // n x p
    Labels labels;
    std::vector<bool> transformed;

    Index n() const { return features.rows(); }
};

struct TrainConfig {
    double lr = 0.1;
    int iters = 500;
    double l2 = 1e-4;
    std::uint64_t seed = 0;
};

struct ClassifierModel {
    Matrix weights;  // C x p
    Vector bias;     // C
    TrainConfig config;
    std::vector<double> loss_history;
    double final_grad_norm = 0.0;

    int classes() const { return static_cast<int>(weights.rows()); }
};

/// Labels from a fixed random linear rule on the content coordinates:
/// argmax_c (W z_C)_c with W a seeded C x |F_C| Gaussian matrix.
inline Labels content_labels(const Matrix& z, const std::vector<Index>& content_set, int n_classes,
                             std::uint64_t seed) {
    if (n_classes < 2) throw InvalidArgument("content_labels: n_classes must be >= 2");
    if (content_set.empty()) throw InvalidArgument("content_labels: no content coordinates");
    Rng rng(seed);
    const Matrix w = linalg::standard_normal(n_classes, static_cast<Index>(content_set.size()), rng);
    Labels out(static_cast<std::size_t>(z.rows()));
    for (Index i = 0; i < z.rows(); ++i) {
        Vector zc(static_cast<Index>(content_set.size()));
        for (std::size_t c = 0; c < content_set.size(); ++c) zc(static_cast<Index>(c)) = z(i, content_set[c]);
        Index best = 0;
        (w * zc).maxCoeff(&best);
        out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
}

namespace detail {

inline const synthetic::StyleSamples& find_style(const synthetic::PairedDataset& ds, Index style_index) {
    for (const auto& s : ds.styles) {
        if (s.style == style_index) return s;
    }
    throw InvalidArgument("spurious split: dataset has no manipulations for style " + std::to_string(style_index));
}

inline Rng stream(std::uint64_t seed, std::uint64_t id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(id), 0x5eedu};
    return Rng(seq);
}

}  // namespace detail

/// Train rows from the first half of the classes (label < C/2) take the
/// manipulated (style-positive) feature with probability alpha and the base
/// feature otherwise; the second half uses 1 - alpha. The test rows reverse
/// the two probabilities.
inline std::pair<LabeledFeatures, LabeledFeatures> build_spurious_split(const synthetic::PairedDataset& ds,
                                                                        const Labels& labels,
                                                                        const SpuriousConfig& cfg) {
    cfg.validate();
    if (static_cast<Index>(labels.size()) != ds.n()) {
        throw InvalidArgument("spurious split: labels length differs from sample count");
    }
    const synthetic::StyleSamples& style = detail::find_style(ds, cfg.style_index);
    const Index n_train = static_cast<Index>(std::floor(cfg.train_fraction * static_cast<double>(ds.n())));
    if (n_train < 1 || n_train >= ds.n()) throw InvalidSplit("spurious split: train or test split is empty");

    auto build = [&](Index begin, Index end, bool reversed, std::uint64_t stream_id) {
        Rng rng = detail::stream(cfg.seed, stream_id);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        LabeledFeatures out;
        out.features.resize(end - begin, ds.d_prime());
        for (Index i = begin; i < end; ++i) {
            const int label = labels[static_cast<std::size_t>(i)];
            if (label < 0 || label >= cfg.n_classes) throw InvalidArgument("spurious split: label out of range");
            const bool first_half = 2 * label < cfg.n_classes;
            const double p = (first_half != reversed) ? cfg.alpha : 1.0 - cfg.alpha;
            const bool t = unif(rng) < p;
            out.features.row(i - begin) = t ? style.plus.row(i) : ds.base.row(i);
            out.labels.push_back(label);
            out.transformed.push_back(t);
        }
        return out;
    };
    LabeledFeatures train = build(0, n_train, false, 1);
    LabeledFeatures test = build(n_train, ds.n(), true, 2);

    std::vector<int> counts(static_cast<std::size_t>(cfg.n_classes), 0);
    for (int l : train.labels) ++counts[static_cast<std::size_t>(l)];
    for (int c = 0; c < cfg.n_classes; ++c) {
        if (counts[static_cast<std::size_t>(c)] == 0) {
            throw InvalidSplit("spurious split: class " + std::to_string(c) + " is empty in the training split");
        }
    }
    return {std::move(train), std::move(test)};
}

/// Mean cross-entropy plus (l2 / 2) ||W||^2 and its gradient. The bias is
/// not penalized.
struct LossAndGradient {
    double loss = 0.0;
    Matrix grad_weights;
    Vector grad_bias;
};

inline Matrix softmax_rows(const Matrix& logits) {
    Matrix p = logits.colwise() - logits.rowwise().maxCoeff();
    p = p.array().exp();
    p.array().colwise() /= p.rowwise().sum().array();
    return p;
}

inline LossAndGradient softmax_loss(const Matrix& weights, const Vector& bias, const LabeledFeatures& data,
                                    double l2) {
    const Index n = data.n();
    const Matrix logits = (data.features * weights.transpose()).rowwise() + bias.transpose();
    const Eigen::VectorXd row_max = logits.rowwise().maxCoeff();
    const Matrix shifted = logits.colwise() - row_max;
    const Vector log_norm = shifted.array().exp().rowwise().sum().log();
    Matrix probs = (shifted.colwise() - log_norm).array().exp();

    double ce = 0.0;
    for (Index i = 0; i < n; ++i) {
        const auto y = static_cast<Index>(data.labels[static_cast<std::size_t>(i)]);
        ce -= shifted(i, y) - log_norm(i);
        probs(i, y) -= 1.0;
    }
    LossAndGradient out;
    out.loss = ce / static_cast<double>(n) + 0.5 * l2 * weights.squaredNorm();
    out.grad_weights = probs.transpose() * data.features / static_cast<double>(n) + l2 * weights;
    out.grad_bias = probs.colwise().sum().transpose() / static_cast<double>(n);
    return out;
}

/// Full-batch gradient descent from zero weights. A step that would raise
/// the loss is retried with half the learning rate, so the recorded loss
/// sequence never increases.
inline ClassifierModel train_softmax(const LabeledFeatures& data, const TrainConfig& cfg = {}) {
    if (data.n() < 1 || static_cast<Index>(data.labels.size()) != data.n()) {
        throw InvalidArgument("train_softmax: features and labels disagree in length");
    }
    linalg::require_finite(data.features, "train_softmax");
    if (!(cfg.lr > 0.0) || cfg.iters < 0 || cfg.l2 < 0.0) throw InvalidArgument("train_softmax: bad config");
    int max_label = -1;
    std::vector<bool> present;
    for (int l : data.labels) {
        if (l < 0) throw InvalidArgument("train_softmax: negative label");
        if (l > max_label) {
            max_label = l;
            present.resize(static_cast<std::size_t>(l + 1), false);
        }
        present[static_cast<std::size_t>(l)] = true;
    }
    int distinct = 0;
    for (bool p : present) distinct += p ? 1 : 0;
    if (distinct < 2) throw InvalidArgument("train_softmax: need at least 2 classes present");

    const Index classes = max_label + 1;
    ClassifierModel model{Matrix::Zero(classes, data.features.cols()), Vector::Zero(classes), cfg, {}, 0.0};
    LossAndGradient cur = softmax_loss(model.weights, model.bias, data, cfg.l2);
    model.loss_history.push_back(cur.loss);
    double lr = cfg.lr;
    for (int it = 0; it < cfg.iters; ++it) {
        bool accepted = false;
        for (int halving = 0; halving < 60; ++halving) {
            const Matrix w = model.weights - lr * cur.grad_weights;
            const Vector b = model.bias - lr * cur.grad_bias;
            LossAndGradient next = softmax_loss(w, b, data, cfg.l2);
            if (!std::isfinite(next.loss)) {
                throw TrainingDivergence("train_softmax: non-finite loss at iteration " + std::to_string(it),
                                         static_cast<std::size_t>(it));
            }
            if (next.loss <= cur.loss) {
                model.weights = w;
                model.bias = b;
                cur = std::move(next);
                accepted = true;
                break;
            }
            lr *= 0.5;
        }
        if (!accepted) break;  // no descent step left at machine precision
        model.loss_history.push_back(cur.loss);
    }
    model.final_grad_norm = std::sqrt(cur.grad_weights.squaredNorm() + cur.grad_bias.squaredNorm());
    return model;
}

inline std::vector<int> predict(const ClassifierModel& model, const Matrix& features) {
    if (features.cols() != model.weights.cols()) {
        throw InvalidArgument("predict: features have " + std::to_string(features.cols()) +
                              " columns, model expects " + std::to_string(model.weights.cols()));
    }
    const Matrix logits = (features * model.weights.transpose()).rowwise() + model.bias.transpose();
    std::vector<int> out(static_cast<std::size_t>(features.rows()));
    for (Index i = 0; i < logits.rows(); ++i) {
        Index best = 0;
        for (Index c = 1; c < logits.cols(); ++c) {
            if (logits(i, c) > logits(i, best)) best = c;
        }
        out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
}

/// Fraction of rows whose argmax class (lowest index on ties) is correct.
inline double evaluate(const ClassifierModel& model, const LabeledFeatures& data) {
    const std::vector<int> pred = predict(model, data.features);
    if (pred.empty()) throw InvalidArgument("evaluate: no samples");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == data.labels[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

inline LabeledFeatures map_features(const LabeledFeatures& data, const ProjectionMatrix& p) {
    return {content_only(p, data.features), data.labels, data.transformed};
}

inline const std::vector<double>& default_alpha_grid() {
    static const std::vector<double> grid{0.5, 0.75, 0.90, 0.95, 0.99, 1.0};
    return grid;
}

struct Variant {
    std::string name;
    std::optional<ProjectionMatrix> projection;  // none = raw features
};

struct AccuracyRow {
    double alpha = 0.0;
    std::uint64_t seed = 0;
    std::string variant;
    double accuracy = 0.0;
};

/// Test accuracy for every (alpha, restart, variant). Restart r redraws the
/// transformation masks with seed cfg.seed + r. Rows come out ordered by
/// alpha, then seed, then variant.
inline std::vector<AccuracyRow> spurious_experiment(const synthetic::PairedDataset& ds, const Labels& labels,
                                                    const SpuriousConfig& cfg, const std::vector<Variant>& variants,
                                                    const std::vector<double>& alphas = default_alpha_grid(),
                                                    int restarts = 10, const TrainConfig& train = {}) {
    if (restarts < 1) throw InvalidArgument("spurious_experiment: restarts must be >= 1");
    std::vector<AccuracyRow> rows;
    for (double alpha : alphas) {
        for (int r = 0; r < restarts; ++r) {
            SpuriousConfig c = cfg;
            c.alpha = alpha;
            c.seed = cfg.seed + static_cast<std::uint64_t>(r);
            const auto [tr, te] = build_spurious_split(ds, labels, c);
            for (const Variant& v : variants) {
                const LabeledFeatures train_set = v.projection ? map_features(tr, *v.projection) : tr;
                const LabeledFeatures test_set = v.projection ? map_features(te, *v.projection) : te;
                const ClassifierModel model = train_softmax(train_set, train);
                rows.push_back({alpha, c.seed, v.name, evaluate(model, test_set)});
            }
        }
    }
    return rows;
}

/// Mean accuracy of `variant` at `alpha` over all restarts.
inline double mean_accuracy(const std::vector<AccuracyRow>& rows, const std::string& variant, double alpha) {
    double sum = 0.0;
    int count = 0;
    for (const auto& r : rows) {
        if (r.variant == variant && r.alpha == alpha) {
            sum += r.accuracy;
            ++count;
        }
    }
    if (count == 0) throw InvalidArgument("mean_accuracy: no rows for variant '" + variant + "'");
    return sum / count;
}

/// Spearman rank correlation with average ranks for ties.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("spearman: need two equal-length series");
    auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> idx(v.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < idx.size();) {
            std::size_t j = i;
            while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
            const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
            for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
            i = j + 1;
        }
        return r;
    };
    const std::vector<double> rx = ranks(x);
    const std::vector<double> ry = ranks(y);
    const Eigen::Map<const Vector> vx(rx.data(), static_cast<Index>(rx.size()));
    const Eigen::Map<const Vector> vy(ry.data(), static_cast<Index>(ry.size()));
    const Vector cx = vx.array() - vx.mean();
    const Vector cy = vy.array() - vy.mean();
    const double denom = cx.norm() * cy.norm();
    return denom > 0.0 ? cx.dot(cy) / denom : 0.0;
}

}  // namespace pisco::downstream
