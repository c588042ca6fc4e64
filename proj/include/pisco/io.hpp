#pragma once

// On-disk formats: headered CSV matrices, the projection JSON file, content
// digests and the synthetic dataset directory layout.

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pisco/core.hpp"
#include "pisco/synthetic.hpp"

namespace pisco::io {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

inline constexpr int kSchemaVersion = 1;

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const fs::path& path, const std::string& contents) {
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << contents;
    if (!out) throw IoError("write failed for " + path.string());
}

/// 64-bit FNV-1a of the bytes, as 16 lowercase hex digits.
inline std::string digest(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// 17 significant digits; "inf"/"-inf"/"nan" for non-finite values.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& s, const std::string& where) {
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) throw InvalidArgument(where + ": cannot parse number '" + s + "'");
    return v;
}

inline std::vector<std::string> numbered_header(const std::string& prefix, Index count) {
    std::vector<std::string> out;
    for (Index i = 0; i < count; ++i) out.push_back(prefix + std::to_string(i));
    return out;
}

inline std::string to_csv(const Matrix& m, const std::vector<std::string>& header) {
    if (static_cast<Index>(header.size()) != m.cols()) throw InvalidArgument("to_csv: header width mismatch");
    std::string out;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c) out += ',';
        out += header[c];
    }
    out += '\n';
    for (Index r = 0; r < m.rows(); ++r) {
        for (Index c = 0; c < m.cols(); ++c) {
            if (c) out += ',';
            out += format_double(m(r, c));
        }
        out += '\n';
    }
    return out;
}

struct CsvTable {
    std::vector<std::string> header;
    Matrix values;
};

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline CsvTable parse_csv(const std::string& text, const std::string& where) {
    std::istringstream in(text);
    std::string line;
    CsvTable t;
    if (!std::getline(in, line)) throw InvalidArgument(where + ": empty CSV");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    t.header = split_line(line);
    std::vector<std::vector<double>> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_line(line);
        if (cells.size() != t.header.size()) {
            throw InvalidArgument(where + ":" + std::to_string(lineno) + ": expected " +
                                  std::to_string(t.header.size()) + " fields, got " + std::to_string(cells.size()));
        }
        std::vector<double> row;
        for (const auto& c : cells) row.push_back(parse_double(c, where + ":" + std::to_string(lineno)));
        rows.push_back(std::move(row));
    }
    t.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(t.header.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            t.values(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
        }
    }
    return t;
}

inline CsvTable read_csv(const fs::path& path) { return parse_csv(read_file(path), path.string()); }

// ---------------------------------------------------------------------------
// Projection file

inline json lambda_to_json(double lambda) {
    if (std::isinf(lambda)) return "inf";
    return lambda;
}

inline double lambda_from_json(const json& j, const std::string& where) {
    if (j.is_string()) {
        if (j.get<std::string>() == "inf") return kInfiniteLambda;
        throw InvalidArgument(where + ": lambda must be a number or \"inf\"");
    }
    if (!j.is_number()) throw InvalidArgument(where + ": lambda must be a number or \"inf\"");
    const double v = j.get<double>();
    if (!std::isfinite(v) || v < 0.0) throw InvalidArgument(where + ": lambda must be >= 0");
    return v;
}

inline std::string lambda_label(double lambda) {
    if (std::isinf(lambda)) return "inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", lambda);
    return buf;
}

inline json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix matrix_from_json(const json& j, Index cols, const std::string& where) {
    if (!j.is_array()) throw InvalidArgument(where + ": expected an array of rows");
    Matrix m(static_cast<Index>(j.size()), cols);
    for (std::size_t r = 0; r < j.size(); ++r) {
        const json& row = j[r];
        if (!row.is_array() || static_cast<Index>(row.size()) != cols) {
            throw InvalidArgument(where + ": row " + std::to_string(r) + " must have " + std::to_string(cols) +
                                  " entries");
        }
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (!row[c].is_number()) throw InvalidArgument(where + ": non-numeric entry");
            m(static_cast<Index>(r), static_cast<Index>(c)) = row[c].get<double>();
        }
    }
    return m;
}

struct Provenance {
    std::uint64_t seed = 0;
    std::string data_digest;
};

inline json projection_to_json(const ProjectionMatrix& p, const Provenance& prov = {}) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["d_prime"] = p.d_prime();
    j["m"] = p.m();
    j["k"] = p.k;
    j["lambda"] = lambda_to_json(p.lambda);
    j["eta"] = p.eta;
    j["style_names"] = p.style_names;
    j["style_rows"] = matrix_to_json(p.style_rows);
    j["content_rows"] = matrix_to_json(p.content_rows);
    j["provenance"] = {{"seed", prov.seed}, {"data_digest", prov.data_digest}};
    return j;
}

inline ProjectionMatrix projection_from_json(const json& j, Provenance* prov = nullptr) {
    const std::string where = "projection";
    try {
        if (j.at("schema_version").get<int>() != kSchemaVersion) {
            throw InvalidArgument(where + ": unsupported schema_version");
        }
        const Index dp = j.at("d_prime").get<Index>();
        const Index m = j.at("m").get<Index>();
        ProjectionMatrix p;
        p.k = j.at("k").get<Index>();
        p.lambda = lambda_from_json(j.at("lambda"), where);
        p.eta = j.at("eta").get<double>();
        p.style_names = j.at("style_names").get<std::vector<std::string>>();
        p.style_rows = matrix_from_json(j.at("style_rows"), dp, where + ".style_rows");
        p.content_rows = matrix_from_json(j.at("content_rows"), dp, where + ".content_rows");
        if (p.style_rows.rows() != m || static_cast<Index>(p.style_names.size()) != m ||
            p.content_rows.rows() != p.k) {
            throw InvalidArgument(where + ": row counts disagree with m / k");
        }
        if (prov && j.contains("provenance")) {
            prov->seed = j["provenance"].value("seed", std::uint64_t{0});
            prov->data_digest = j["provenance"].value("data_digest", std::string());
        }
        return p;
    } catch (const json::exception& e) {
        throw InvalidArgument(where + ": " + e.what());
    }
}

inline void write_projection(const fs::path& path, const ProjectionMatrix& p, const Provenance& prov = {}) {
    write_file(path, projection_to_json(p, prov).dump(2) + "\n");
}

inline ProjectionMatrix read_projection(const fs::path& path, Provenance* prov = nullptr) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw InvalidArgument(path.string() + ": " + e.what());
    }
    return projection_from_json(j, prov);
}

// ---------------------------------------------------------------------------
// Dataset directory

inline std::string style_tag(Index style) { return "z" + std::to_string(style); }

inline json latent_to_json(const synthetic::LatentSpec& s) {
    return {{"d", s.d},
            {"style_set", s.style_set},
            {"rho", s.rho},
            {"annotation_noise_std", s.annotation_noise_std}};
}

inline json entangler_to_json(const synthetic::EntanglerSpec& s) {
    return {{"d_prime", s.d_prime}, {"offdiag", s.offdiag}, {"seed", s.seed}};
}

/// Writes the dataset files and a manifest listing each file's digest.
/// Returns the written paths, manifest last.
inline std::vector<fs::path> write_dataset(const fs::path& dir, const synthetic::PairedDataset& ds, json manifest) {
    std::vector<std::pair<std::string, std::string>> files;
    const auto feat_header = numbered_header("f", ds.d_prime());
    files.emplace_back("base.csv", to_csv(ds.base, feat_header));
    Matrix ann(ds.n(), 2 * ds.m());
    std::vector<std::string> ann_header;
    json styles = json::array();
    for (Index j = 0; j < ds.m(); ++j) {
        const auto& s = ds.styles[static_cast<std::size_t>(j)];
        const std::string tag = style_tag(s.style);
        styles.push_back(s.style);
        files.emplace_back("plus_" + tag + ".csv", to_csv(s.plus, feat_header));
        files.emplace_back("minus_" + tag + ".csv", to_csv(s.minus, feat_header));
        ann.col(2 * j) = s.ann_plus;
        ann.col(2 * j + 1) = s.ann_minus;
        ann_header.push_back("plus_" + tag);
        ann_header.push_back("minus_" + tag);
    }
    files.emplace_back("annotations.csv", to_csv(ann, ann_header));
    if (ds.truth) {
        files.emplace_back("latents.csv", to_csv(ds.truth->z, numbered_header("z", ds.truth->z.cols())));
        files.emplace_back("entangler.csv",
                           to_csv(ds.truth->entangler, numbered_header("z", ds.truth->entangler.cols())));
    }

    manifest["schema_version"] = kSchemaVersion;
    manifest["n"] = ds.n();
    manifest["d_prime"] = ds.d_prime();
    manifest["styles"] = styles;
    json digests = json::object();
    std::vector<fs::path> written;
    for (const auto& [name, contents] : files) {
        write_file(dir / name, contents);
        digests[name] = digest(contents);
        written.push_back(dir / name);
    }
    manifest["files"] = digests;
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
    written.push_back(dir / "manifest.json");
    return written;
}

struct LoadedDataset {
    synthetic::PairedDataset data;
    json manifest;
    std::string digest;  // digest of the manifest, which pins every file
};

/// Reads a dataset directory, refusing files whose digest disagrees with the
/// manifest. Ground truth is attached when latents.csv and entangler.csv are
/// listed and the manifest carries the latent spec.
inline LoadedDataset read_dataset(const fs::path& dir) {
    LoadedDataset out;
    const std::string manifest_text = read_file(dir / "manifest.json");
    try {
        out.manifest = json::parse(manifest_text);
    } catch (const json::parse_error& e) {
        throw InvalidArgument((dir / "manifest.json").string() + ": " + e.what());
    }
    out.digest = digest(manifest_text);
    const json& files = out.manifest.at("files");

    auto load = [&](const std::string& name) {
        if (!files.contains(name)) throw InvalidArgument("manifest does not list " + name);
        const std::string text = read_file(dir / name);
        if (digest(text) != files.at(name).get<std::string>()) {
            throw InvalidArgument((dir / name).string() + ": digest does not match manifest (file was modified)");
        }
        return parse_csv(text, (dir / name).string());
    };

    synthetic::PairedDataset& ds = out.data;
    ds.base = load("base.csv").values;
    const CsvTable ann = load("annotations.csv");
    const auto styles = out.manifest.at("styles").get<std::vector<Index>>();
    for (std::size_t j = 0; j < styles.size(); ++j) {
        const std::string tag = style_tag(styles[j]);
        synthetic::StyleSamples s;
        s.style = styles[j];
        s.plus = load("plus_" + tag + ".csv").values;
        s.minus = load("minus_" + tag + ".csv").values;
        const auto col = [&](const std::string& name) -> Vector {
            for (std::size_t c = 0; c < ann.header.size(); ++c) {
                if (ann.header[c] == name) return ann.values.col(static_cast<Index>(c));
            }
            throw InvalidArgument("annotations.csv: missing column " + name);
        };
        s.ann_plus = col("plus_" + tag);
        s.ann_minus = col("minus_" + tag);
        ds.styles.push_back(std::move(s));
    }
    ds.validate();

    if (files.contains("latents.csv") && files.contains("entangler.csv") && out.manifest.contains("latent")) {
        synthetic::GroundTruth truth;
        truth.z = load("latents.csv").values;
        truth.entangler = load("entangler.csv").values;
        const json& l = out.manifest.at("latent");
        truth.latent.d = l.at("d").get<Index>();
        truth.latent.style_set = l.at("style_set").get<std::vector<Index>>();
        truth.latent.rho = l.at("rho").get<double>();
        truth.latent.annotation_noise_std = l.at("annotation_noise_std").get<double>();
        if (truth.z.rows() != ds.n() || truth.z.cols() != truth.latent.d ||
            truth.entangler.rows() != ds.d_prime() || truth.entangler.cols() != truth.latent.d) {
            throw InvalidArgument("ground truth files disagree with the feature files in shape");
        }
        ds.truth = std::move(truth);
    }
    return out;
}

}  // namespace pisco::io
