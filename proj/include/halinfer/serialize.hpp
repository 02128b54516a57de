#pragma once

// JSON model archives and Monte Carlo summaries. Needs nlohmann/json.
// Doubles are written in shortest round-trip form, so a reloaded archive
// reproduces the stored coefficients bit for bit.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "halinfer/basis.hpp"
#include "halinfer/dataset.hpp"
#include "halinfer/error.hpp"
#include "halinfer/simlab.hpp"
#include "halinfer/solver.hpp"
#include "halinfer/version.hpp"

namespace halinfer {

using json = nlohmann::json;

/// A cross-validated fit together with the data it was fitted on.
struct FitArchive {
    Dataset data;
    CrossValidatedHal fit;
    std::uint64_t seed = 0;
    json config = json::object();  ///< resolved settings, echoed verbatim
};

namespace detail {

inline json matrix_rows(const Eigen::MatrixXd& M) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        json r = json::array();
        for (Eigen::Index j = 0; j < M.cols(); ++j) r.push_back(M(i, j));
        rows.push_back(std::move(r));
    }
    return rows;
}

inline json vector_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

template <class T>
T field(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) throw InputError(std::string("archive: missing field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw InputError(std::string("archive: field '") + key + "' has the wrong type (" + e.what() + ")");
    }
}

inline Eigen::MatrixXd rows_matrix(const json& rows, Eigen::Index cols) {
    if (!rows.is_array()) throw InputError("archive: data.X must be an array of rows");
    Eigen::MatrixXd M(static_cast<Eigen::Index>(rows.size()), cols);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = rows[i].get<std::vector<double>>();
        if (static_cast<Eigen::Index>(r.size()) != cols)
            throw InputError("archive: data.X row " + std::to_string(i + 1) + " has the wrong length");
        for (Eigen::Index j = 0; j < cols; ++j) M(static_cast<Eigen::Index>(i), j) = r[static_cast<std::size_t>(j)];
    }
    return M;
}

inline std::string design_fingerprint(const DesignMatrix& d) { return Fingerprint{}.add(d.values).hex(); }

} // namespace detail

inline json catalog_json(const BasisCatalog& c) {
    json specs = json::array();
    for (const auto& s : c.specs) specs.push_back({{"subset", s.subset}, {"knot", s.knot}});
    return {{"order", static_cast<int>(c.order)},
            {"max_interaction", c.max_interaction},
            {"knot_cap", c.knot_cap == kNoKnotCap ? json(nullptr) : json(c.knot_cap)},
            {"includes_intercept", c.includes_intercept},
            {"specs", std::move(specs)}};
}

inline BasisCatalog catalog_from_json(const json& j) {
    BasisCatalog c;
    c.order = spline_order_from_int(detail::field<int>(j, "order"));
    c.max_interaction = detail::field<int>(j, "max_interaction");
    c.knot_cap = j.contains("knot_cap") && !j.at("knot_cap").is_null() ? j.at("knot_cap").get<std::size_t>() : kNoKnotCap;
    c.includes_intercept = detail::field<bool>(j, "includes_intercept");
    for (const auto& s : detail::field<json>(j, "specs")) {
        BasisSpec spec{detail::field<std::vector<int>>(s, "subset"), detail::field<std::vector<double>>(s, "knot"),
                       c.order};
        spec.validate();
        c.specs.push_back(std::move(spec));
    }
    return c;
}

/// Coefficients are stored sparsely by design column; the intercept is kept separately.
inline json path_json(const HalPath& p) {
    json fits = json::array();
    for (const auto& f : p.fits) {
        std::vector<std::size_t> idx;
        std::vector<double> val;
        for (Eigen::Index c = 1; c < f.beta.size(); ++c)
            if (f.beta(c) != 0.0) {
                idx.push_back(static_cast<std::size_t>(c));
                val.push_back(f.beta(c));
            }
        fits.push_back({{"lambda", f.lambda},
                        {"intercept", f.beta(0)},
                        {"columns", idx},
                        {"values", val},
                        {"l1_norm", f.l1_norm},
                        {"objective", f.objective},
                        {"sweeps", f.sweeps},
                        {"max_kkt_violation", f.max_kkt_violation}});
    }
    return {{"k_cv", p.k_cv}, {"cv_mse", p.cv_mse}, {"fits", std::move(fits)}};
}

inline json archive_json(const FitArchive& a) {
    const auto& f = a.fit;
    json data = {{"names", a.data.names},
                 {"outcome", a.data.outcome_name},
                 {"X", detail::matrix_rows(a.data.X)},
                 {"y", detail::vector_json(a.data.y)}};
    return {{"format", "halinfer-model"},
            {"version", kVersion},
            {"config", a.config},
            {"seed", a.seed},
            {"fingerprints",
             {{"data", data_fingerprint(a.data)},
              {"catalog", f.catalog.source_fingerprint},
              {"design", detail::design_fingerprint(f.design)}}},
            {"data", std::move(data)},
            {"catalog", catalog_json(f.catalog)},
            {"grid",
             {{"lambdas", f.path.grid.lambdas},
              {"derivation", f.path.grid.derivation == GridDerivation::automatic ? "automatic" : "explicit"}}},
            {"design_columns", f.design.cols()},
            {"degenerate_outcome", f.degenerate_outcome},
            {"path", path_json(f.path)}};
}

/// Rebuilds the design from the stored training data and checks it against the stored fingerprints.
inline FitArchive archive_from_json(const json& j) {
    if (!j.is_object() || j.value("format", "") != "halinfer-model")
        throw InputError("archive: not a halinfer model archive");
    FitArchive a;
    a.config = j.value("config", json::object());
    a.seed = detail::field<std::uint64_t>(j, "seed");

    const auto& data = detail::field<json>(j, "data");
    a.data.names = detail::field<std::vector<std::string>>(data, "names");
    a.data.outcome_name = detail::field<std::string>(data, "outcome");
    const auto y = detail::field<std::vector<double>>(data, "y");
    a.data.y = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
    a.data.X = detail::rows_matrix(detail::field<json>(data, "X"), static_cast<Eigen::Index>(a.data.names.size()));
    a.data.validate();

    const auto& fp = detail::field<json>(j, "fingerprints");
    if (data_fingerprint(a.data) != detail::field<std::string>(fp, "data"))
        throw InputError("archive: training data does not match its fingerprint");

    auto& f = a.fit;
    f.catalog = catalog_from_json(detail::field<json>(j, "catalog"));
    f.catalog.source_fingerprint = detail::field<std::string>(fp, "catalog");
    f.design = build_design(f.catalog, a.data.X);
    if (detail::design_fingerprint(f.design) != detail::field<std::string>(fp, "design") ||
        f.design.cols() != detail::field<Eigen::Index>(j, "design_columns"))
        throw InputError("archive: rebuilt design does not match the stored one");
    f.degenerate_outcome = j.value("degenerate_outcome", false);

    const auto& grid = detail::field<json>(j, "grid");
    f.path.grid.lambdas = detail::field<std::vector<double>>(grid, "lambdas");
    f.path.grid.derivation =
        grid.value("derivation", "automatic") == "automatic" ? GridDerivation::automatic : GridDerivation::explicit_values;
    f.path.grid.validate();

    const auto& path = detail::field<json>(j, "path");
    f.path.k_cv = detail::field<std::size_t>(path, "k_cv");
    f.path.cv_mse = detail::field<std::vector<double>>(path, "cv_mse");
    for (const auto& fj : detail::field<json>(path, "fits")) {
        HalFit h;
        h.lambda = detail::field<double>(fj, "lambda");
        h.beta = Eigen::VectorXd::Zero(f.design.cols());
        h.beta(0) = detail::field<double>(fj, "intercept");
        const auto idx = detail::field<std::vector<std::size_t>>(fj, "columns");
        const auto val = detail::field<std::vector<double>>(fj, "values");
        detail::require(idx.size() == val.size(), "archive: coefficient columns and values differ in length");
        for (std::size_t i = 0; i < idx.size(); ++i) {
            detail::require(idx[i] >= 1 && static_cast<Eigen::Index>(idx[i]) < f.design.cols(),
                            "archive: coefficient column out of range");
            h.beta(static_cast<Eigen::Index>(idx[i])) = val[i];
        }
        h.l1_norm = detail::field<double>(fj, "l1_norm");
        h.objective = fj.value("objective", 0.0);
        h.sweeps = fj.value("sweeps", 0L);
        h.max_kkt_violation = fj.value("max_kkt_violation", 0.0);
        f.path.fits.push_back(std::move(h));
    }
    detail::require(f.path.fits.size() == f.path.grid.size() && f.path.cv_mse.size() == f.path.grid.size(),
                    "archive: path, grid and CV losses differ in length");
    detail::require(f.path.k_cv < f.path.fits.size(), "archive: k_cv out of range");
    return a;
}

namespace detail {

inline json index_summary(std::vector<std::size_t> v) {
    if (v.empty()) return nullptr;
    std::sort(v.begin(), v.end());
    std::vector<double> d(v.begin(), v.end());
    return {{"min", v.front()}, {"median", median(d)}, {"max", v.back()}};
}

} // namespace detail

/// Headline numbers of one experiment, per combination.
inline json experiment_summary(const MonteCarloReport& rep) {
    std::vector<std::size_t> k_local;
    for (const auto& ks : rep.k_local) k_local.insert(k_local.end(), ks.begin(), ks.end());
    json combos = json::object();
    for (const auto& c : rep.combinations) {
        if (rep.runs_ok() < 2) break;
        const auto cov = rep.across_points(c, &PointMetrics::oracle_coverage);
        const auto in_band = std::count_if(cov.begin(), cov.end(), [](double v) { return v >= 0.90 && v <= 0.99; });
        combos[c.label()] = {
            {"median_bias_se_ratio", median(rep.across_points(c, &PointMetrics::bias_se_ratio))},
            {"mean_oracle_coverage", mean(cov)},
            {"points_oracle_coverage_in_0.90_0.99", in_band},
            {"mean_width_ratio", mean(rep.across_points(c, &PointMetrics::width_ratio))},
            {"mean_width_ratio_conservative", mean(rep.across_points(c, &PointMetrics::width_ratio_conservative))},
            {"mean_delta_coverage", mean(rep.across_points(c, &PointMetrics::delta_coverage))},
            {"mean_delta_coverage_conservative", mean(rep.across_points(c, &PointMetrics::delta_coverage_conservative))},
        };
    }
    json failures = json::array();
    for (const auto& [run, what] : rep.failures) failures.push_back({{"run", run}, {"message", what}});
    json cfg = json::object();
    for (const auto& [k, v] : rep.config) cfg[k] = v;
    return {{"estimand", rep.estimand},
            {"scenario", rep.scenario},
            {"d", rep.d},
            {"n", rep.n},
            {"runs", rep.runs},
            {"runs_failed", rep.runs_failed},
            {"failures", std::move(failures)},
            {"seed", rep.seed},
            {"test_point_fingerprint", test_point_fingerprint(rep)},
            {"test_points", detail::matrix_rows(rep.test_points)},
            {"settings", std::move(cfg)},
            {"K", rep.K},
            {"k_cv", detail::index_summary(rep.k_cv)},
            {"k_global", detail::index_summary(rep.k_global)},
            {"k_local", detail::index_summary(k_local)},
            {"monotonicity_violations", rep.monotonicity_violations},
            {"local_criterion_unmet", rep.local_unmet},
            {"extrapolated_points", rep.extrapolated},
            {"truncated_propensities", rep.truncated},
            {"combinations", std::move(combos)}};
}

} // namespace halinfer
