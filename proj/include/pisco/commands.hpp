#pragma once

// Subcommand implementations behind the `pisco` executable. Each command
// takes a JSON config object, validates it (unknown keys are rejected) and
// writes its outputs under the output directory.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pisco/core.hpp"
#include "pisco/downstream.hpp"
#include "pisco/io.hpp"
#include "pisco/metrics.hpp"
#include "pisco/parallel.hpp"
#include "pisco/synthetic.hpp"

namespace pisco::cli {

using io::json;
namespace fs = std::filesystem;

struct Context {
    fs::path out = ".";
    std::optional<std::uint64_t> seed;  // overrides the config's "seed"
    unsigned jobs = 1;
    std::ostream* log = &std::cerr;
};

/// Read-once view of a JSON config object. `finish()` rejects any key that
/// was never read.
class Config {
public:
    Config(json j, std::string scope) : j_(std::move(j)), scope_(std::move(scope)) {
        if (j_.is_null()) j_ = json::object();
        if (!j_.is_object()) throw InvalidArgument(scope_ + ": expected a JSON object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    template <typename T>
    T get(const std::string& key, T fallback) {
        used_.insert(key);
        if (!j_.contains(key)) return fallback;
        try {
            return j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw InvalidArgument(path(key) + ": wrong type");
        }
    }

    template <typename T>
    T require(const std::string& key) {
        if (!j_.contains(key)) throw InvalidArgument(path(key) + ": required");
        return get<T>(key, T{});
    }

    const json& raw(const std::string& key) {
        used_.insert(key);
        return j_.at(key);
    }

    Config sub(const std::string& key) {
        used_.insert(key);
        return Config(j_.contains(key) ? j_.at(key) : json::object(), path(key));
    }

    std::string path(const std::string& key) const { return scope_.empty() ? key : scope_ + "." + key; }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (!used_.count(key)) throw InvalidArgument(path(key) + ": unknown key");
        }
    }

private:
    json j_;
    std::string scope_;
    std::set<std::string> used_;
};

namespace detail {

inline synthetic::LatentSpec read_latent(Config c, bool with_rho = true) {
    synthetic::LatentSpec s;
    s.d = c.get<Index>("d", s.d);
    s.style_set = c.get<std::vector<Index>>("style_set", s.style_set);
    if (with_rho) s.rho = c.get<double>("rho", s.rho);
    s.annotation_noise_std = c.get<double>("annotation_noise_std", s.annotation_noise_std);
    c.finish();
    return s;
}

inline synthetic::EntanglerSpec read_entangler(Config c, Index d) {
    synthetic::EntanglerSpec s;
    s.d_prime = c.get<Index>("d_prime", d);
    s.offdiag = c.get<double>("offdiag", s.offdiag);
    s.seed = c.get<std::uint64_t>("seed", s.seed);
    c.finish();
    return s;
}

inline double read_lambda(Config& c, const std::string& key, double fallback) {
    if (!c.has(key)) {
        c.get<double>(key, 0.0);
        return fallback;
    }
    return io::lambda_from_json(c.raw(key), c.path(key));
}

inline std::vector<double> read_lambda_list(Config& c, const std::string& key, std::vector<double> fallback) {
    if (!c.has(key)) {
        c.get<double>(key, 0.0);
        return fallback;
    }
    const json& arr = c.raw(key);
    if (!arr.is_array() || arr.empty()) throw InvalidArgument(c.path(key) + ": expected a nonempty array");
    std::vector<double> out;
    for (const auto& v : arr) out.push_back(io::lambda_from_json(v, c.path(key)));
    return out;
}

inline std::uint64_t read_seed(Config& c, const Context& ctx, std::uint64_t fallback = 0) {
    const auto s = c.get<std::uint64_t>("seed", fallback);
    return ctx.seed ? *ctx.seed : s;
}

inline std::string csv_row(const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += cells[i];
    }
    return out + '\n';
}

}  // namespace detail

/// synth: sample a paired dataset and write it with its manifest.
inline std::vector<fs::path> cmd_synth(const json& config, const Context& ctx) {
    Config c(config, "");
    const auto n = c.get<Index>("n", 900);
    const std::uint64_t seed = detail::read_seed(c, ctx);
    const synthetic::LatentSpec latent = detail::read_latent(c.sub("latent"));
    const synthetic::EntanglerSpec ent = detail::read_entangler(c.sub("entangler"), latent.d);
    c.finish();
    if (n < 1) throw InvalidArgument("n: must be >= 1");
    latent.validate();

    const synthetic::PairedDataset ds = synthetic::generate(latent, ent, n, seed);
    json manifest;
    manifest["command"] = "synth";
    manifest["seed"] = seed;
    manifest["latent"] = io::latent_to_json(latent);
    manifest["entangler"] = io::entangler_to_json(ent);
    return io::write_dataset(ctx.out, ds, std::move(manifest));
}

/// fit: estimate P(lambda) from a dataset directory and write projection.json.
inline std::vector<fs::path> cmd_fit(const json& config, const Context& ctx) {
    Config c(config, "");
    const auto data_dir = c.require<std::string>("data");
    FitOptions opt;
    opt.lambda = detail::read_lambda(c, "lambda", kInfiniteLambda);
    if (c.has("k")) opt.k = c.get<Index>("k", 0);
    opt.eta = c.get<double>("eta", opt.eta);
    opt.null_tol = c.get<double>("null_tol", opt.null_tol);
    opt.style_names = c.get<std::vector<std::string>>("style_names", {});
    c.finish();

    const io::LoadedDataset loaded = io::read_dataset(data_dir);
    const FitResult fit = fit_projection(loaded.data, opt);

    std::ostream& log = *ctx.log;
    for (const auto& s : fit.styles) log << "style " << s.style_name << ": regression mse " << s.mse << "\n";
    Index positive = 0;
    for (Index i = 0; i < fit.spectrum.size(); ++i) positive += fit.spectrum(i) > 0.0 ? 1 : 0;
    log << "content spectrum: " << fit.spectrum.size() << " eigenvalues, " << positive << " positive, top "
        << fit.spectrum(0) << ", k-th " << fit.spectrum(fit.projection.k - 1) << "\n";

    io::Provenance prov{loaded.manifest.value("seed", std::uint64_t{0}), loaded.digest};
    const fs::path out = ctx.out / "projection.json";
    io::write_projection(out, fit.projection, prov);
    return {out};
}

/// apply: map a feature CSV through a projection into style and content factors.
inline std::vector<fs::path> cmd_apply(const json& config, const Context& ctx) {
    Config c(config, "");
    const auto projection_path = c.require<std::string>("projection");
    const auto features_path = c.require<std::string>("features");
    const bool content_only = c.get<bool>("content_only", false);
    c.finish();

    const ProjectionMatrix p = io::read_projection(projection_path);
    const io::CsvTable features = io::read_csv(features_path);
    const FactorizedFeatures f = transform(p, features.values);
    Matrix out_values;
    std::vector<std::string> header;
    if (content_only) {
        out_values = f.content_factors;
    } else {
        out_values.resize(features.values.rows(), p.m() + p.k);
        out_values << f.style_factors, f.content_factors;
        header = p.style_names;
    }
    for (Index i = 0; i < p.k; ++i) header.push_back("c" + std::to_string(i));
    const fs::path out = ctx.out / (content_only ? "content.csv" : "factors.csv");
    io::write_file(out, io::to_csv(out_values, header));
    return {out};
}

/// eval: disentanglement report of a projection against ground truth.
inline std::vector<fs::path> cmd_eval(const json& config, const Context& ctx) {
    Config c(config, "");
    const auto projection_path = c.require<std::string>("projection");
    const auto data_dir = c.require<std::string>("data");
    std::optional<double> beta;
    if (c.has("beta")) beta = c.get<double>("beta", 1.0);
    c.finish();

    const ProjectionMatrix p = io::read_projection(projection_path);
    const io::LoadedDataset loaded = io::read_dataset(data_dir);
    if (!loaded.data.truth) throw InvalidArgument("eval: dataset has no ground truth (latents.csv / entangler.csv)");
    std::optional<Vector> beta_vec;
    if (beta) beta_vec = Vector::Constant(p.m(), *beta);
    const metrics::DisentangleReport r = metrics::full_report(loaded.data, p, beta_vec);

    auto to_vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    json j;
    j["lambda"] = io::lambda_to_json(p.lambda);
    j["style_names"] = p.style_names;
    j["style_recovery_discrepancy"] = r.style_recovery_discrepancy;
    j["scd"] = r.scd;
    j["per_style_corr"] = to_vec(r.per_style_corr);
    j["corr_recovery_residual"] = r.corr_recovery_residual;
    j["direction_residual"] = to_vec(r.direction_residual);
    j["content_style_leak"] = r.content_style_leak;
    j["content_min_sv"] = r.content_min_sv;
    const fs::path json_out = ctx.out / "report.json";
    io::write_file(json_out, j.dump(2) + "\n");

    std::vector<std::string> header{"lambda",  "style_recovery", "scd",       "corr_recovery",
                                    "direction_max",  "content_leak",        "content_min_sv"};
    std::vector<std::string> row{io::lambda_label(p.lambda),
                                 io::format_double(r.style_recovery_discrepancy),
                                 io::format_double(r.scd),
                                 io::format_double(r.corr_recovery_residual),
                                 io::format_double(r.direction_residual.maxCoeff()),
                                 io::format_double(r.content_style_leak),
                                 io::format_double(r.content_min_sv)};
    const fs::path csv_out = ctx.out / "report.csv";
    io::write_file(csv_out, detail::csv_row(header) + detail::csv_row(row));
    return {json_out, csv_out};
}

struct SweepRow {
    double lambda = 0.0;
    double rho = 0.0;
    std::uint64_t seed = 0;
    metrics::DisentangleReport report;
};

struct SweepOptions {
    Index n = 900;
    std::vector<double> lambdas{1.0, 10.0, 100.0, 1000.0, 10000.0};
    std::vector<double> rhos{0.0, 0.3, 0.6, 0.9};
    int repetitions = 50;
    std::uint64_t seed = 0;  // repetition r uses seed + r
    synthetic::LatentSpec latent;
    synthetic::EntanglerSpec entangler;
    std::optional<Index> k;
    double eta = 0.95;
};

/// Full-factorial (lambda, rho, seed) sweep. Each (rho, seed) dataset is
/// generated once and fitted at every lambda; rows are returned in
/// (lambda, rho, seed) order regardless of scheduling.
inline std::vector<SweepRow> run_sweep(const SweepOptions& o, unsigned jobs = 1) {
    if (o.repetitions < 1) throw InvalidArgument("repetitions: must be >= 1");
    if (o.lambdas.empty() || o.rhos.empty()) throw InvalidArgument("sweep: lambda and rho grids must be nonempty");
    const std::size_t nl = o.lambdas.size();
    const std::size_t nr = o.rhos.size();
    const auto reps = static_cast<std::size_t>(o.repetitions);
    std::vector<SweepRow> rows(nl * nr * reps);
    parallel_for(nr * reps, jobs, [&](std::size_t cell) {
        const std::size_t ri = cell / reps;
        const std::size_t si = cell % reps;
        synthetic::LatentSpec latent = o.latent;
        latent.rho = o.rhos[ri];
        latent.validate();
        const std::uint64_t seed = o.seed + si;
        const synthetic::PairedDataset ds = synthetic::generate(latent, o.entangler, o.n, seed);
        for (std::size_t li = 0; li < nl; ++li) {
            FitOptions fo;
            fo.lambda = o.lambdas[li];
            fo.k = o.k;
            fo.eta = o.eta;
            const FitResult fit = fit_projection(ds, fo);
            rows[(li * nr + ri) * reps + si] = {o.lambdas[li], o.rhos[ri], seed,
                                                metrics::full_report(ds, fit.projection)};
        }
    });
    return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::string out = detail::csv_row({"lambda", "rho", "seed", "style_recovery", "scd", "direction_max", "content_leak",
                                       "content_min_sv"});
    for (const auto& r : rows) {
        out += detail::csv_row({io::lambda_label(r.lambda), io::format_double(r.rho), std::to_string(r.seed),
                                io::format_double(r.report.style_recovery_discrepancy),
                                io::format_double(r.report.scd),
                                io::format_double(r.report.direction_residual.maxCoeff()),
                                io::format_double(r.report.content_style_leak),
                                io::format_double(r.report.content_min_sv)});
    }
    return out;
}

/// sweep: grid over lambda and rho, one CSV row per cell and seed.
inline std::vector<fs::path> cmd_sweep(const json& config, const Context& ctx) {
    Config c(config, "");
    SweepOptions o;
    o.n = c.get<Index>("n", o.n);
    o.lambdas = detail::read_lambda_list(c, "lambdas", o.lambdas);
    o.rhos = c.get<std::vector<double>>("rhos", o.rhos);
    o.repetitions = c.get<int>("repetitions", o.repetitions);
    o.seed = detail::read_seed(c, ctx);
    o.latent = detail::read_latent(c.sub("latent"), false);
    o.entangler = detail::read_entangler(c.sub("entangler"), o.latent.d);
    if (c.has("k")) o.k = c.get<Index>("k", 0);
    o.eta = c.get<double>("eta", o.eta);
    c.finish();
    if (o.n < 1) throw InvalidArgument("n: must be >= 1");

    const std::vector<SweepRow> rows = run_sweep(o, ctx.jobs);
    const fs::path out = ctx.out / "sweep.csv";
    io::write_file(out, sweep_csv(rows));
    return {out};
}

struct SpuriousOptions {
    Index n = 2000;
    std::uint64_t seed = 0;        // dataset seed; restart r redraws masks with seed + r
    std::uint64_t label_seed = 1;  // seed of the label rule
    std::vector<double> alphas = downstream::default_alpha_grid();
    int restarts = 10;
    int n_classes = 10;
    Index style_index = 0;
    double train_fraction = 0.5;
    std::vector<double> lambdas{10.0, kInfiniteLambda};
    synthetic::LatentSpec latent;
    synthetic::EntanglerSpec entangler;
    std::optional<Index> k;
    double eta = 0.95;
    downstream::TrainConfig train;
};

/// Raw features versus content-only features under the spurious protocol.
/// Variants are named "raw" and "pisco-<lambda>".
inline std::vector<downstream::AccuracyRow> run_spurious(const SpuriousOptions& o, unsigned jobs = 1) {
    o.latent.validate();
    const synthetic::PairedDataset ds = synthetic::generate(o.latent, o.entangler, o.n, o.seed);
    const downstream::Labels labels =
        downstream::content_labels(ds.truth->z, o.latent.content_set(), o.n_classes, o.label_seed);

    std::vector<downstream::Variant> variants{{"raw", std::nullopt}};
    for (double lambda : o.lambdas) {
        FitOptions fo;
        fo.lambda = lambda;
        fo.k = o.k;
        fo.eta = o.eta;
        variants.push_back({"pisco-" + io::lambda_label(lambda), fit_projection(ds, fo).projection});
    }

    downstream::SpuriousConfig cfg;
    cfg.n_classes = o.n_classes;
    cfg.style_index = o.style_index;
    cfg.seed = o.seed;
    cfg.train_fraction = o.train_fraction;

    // One task per alpha; each returns its rows in (seed, variant) order.
    std::vector<std::vector<downstream::AccuracyRow>> per_alpha(o.alphas.size());
    parallel_for(o.alphas.size(), jobs, [&](std::size_t a) {
        per_alpha[a] = downstream::spurious_experiment(ds, labels, cfg, variants, {o.alphas[a]}, o.restarts, o.train);
    });
    std::vector<downstream::AccuracyRow> rows;
    for (auto& block : per_alpha) rows.insert(rows.end(), block.begin(), block.end());
    return rows;
}

/// spurious: accuracy under label/style spurious correlation for each alpha.
inline std::vector<fs::path> cmd_spurious(const json& config, const Context& ctx) {
    Config c(config, "");
    SpuriousOptions o;
    o.n = c.get<Index>("n", o.n);
    o.seed = detail::read_seed(c, ctx);
    o.label_seed = c.get<std::uint64_t>("label_seed", o.label_seed);
    o.alphas = c.get<std::vector<double>>("alphas", o.alphas);
    o.restarts = c.get<int>("restarts", o.restarts);
    o.n_classes = c.get<int>("n_classes", o.n_classes);
    o.style_index = c.get<Index>("style_index", o.style_index);
    o.train_fraction = c.get<double>("train_fraction", o.train_fraction);
    o.lambdas = detail::read_lambda_list(c, "lambdas", o.lambdas);
    o.latent = detail::read_latent(c.sub("latent"));
    o.entangler = detail::read_entangler(c.sub("entangler"), o.latent.d);
    if (c.has("k")) o.k = c.get<Index>("k", 0);
    o.eta = c.get<double>("eta", o.eta);
    {
        Config t = c.sub("train");
        o.train.lr = t.get<double>("lr", o.train.lr);
        o.train.iters = t.get<int>("iters", o.train.iters);
        o.train.l2 = t.get<double>("l2", o.train.l2);
        t.finish();
    }
    c.finish();
    if (o.n < 2) throw InvalidArgument("n: must be >= 2");
    if (o.alphas.empty()) throw InvalidArgument("alphas: must be nonempty");

    const auto rows = run_spurious(o, ctx.jobs);
    std::string csv = detail::csv_row({"alpha", "seed", "variant", "accuracy"});
    for (const auto& r : rows) {
        csv += detail::csv_row(
            {io::format_double(r.alpha), std::to_string(r.seed), r.variant, io::format_double(r.accuracy)});
    }
    const fs::path out = ctx.out / "spurious.csv";
    io::write_file(out, csv);
    return {out};
}

/// Dispatch by subcommand name.
inline std::vector<fs::path> run_command(const std::string& name, const json& config, const Context& ctx) {
    try {
        if (name == "synth") return cmd_synth(config, ctx);
        if (name == "fit") return cmd_fit(config, ctx);
        if (name == "apply") return cmd_apply(config, ctx);
        if (name == "eval") return cmd_eval(config, ctx);
        if (name == "sweep") return cmd_sweep(config, ctx);
        if (name == "spurious") return cmd_spurious(config, ctx);
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("malformed input: ") + e.what());
    }
    throw InvalidArgument("unknown command '" + name + "'");
}

}  // namespace pisco::cli
