#pragma once

// Data -> catalog -> cross-validated path -> selectors -> estimate reports.

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "halinfer/inference.hpp"
#include "halinfer/selection.hpp"
#include "halinfer/solver.hpp"

namespace halinfer {

struct PipelineSettings {
    HalSettings hal;
    double alpha = 0.05;
    std::vector<Combination> combinations = all_combinations();
    /// Undersmoothing threshold; nullopt means 1/log(n).
    std::optional<double> threshold;
};

struct PipelineResult {
    std::size_t k_cv = 0;
    GlobalSelection global;
    std::vector<LocalSelection> local;   ///< per test point (empty unless a local-u combination is requested)
    std::vector<EstimateReport> reports; ///< point-major, then the requested combination order
    std::vector<double> l1_norms;        ///< realized L1 norm of every path fit
    bool degenerate_outcome = false;

    [[nodiscard]] const EstimateReport& report(std::size_t point, std::size_t combination, std::size_t n_comb) const {
        return reports[point * n_comb + combination];
    }
};

/// Selection and reports for an already cross-validated fit.
inline PipelineResult analyze_fit(const CrossValidatedHal& fit, const Eigen::VectorXd& y,
                                  const Eigen::MatrixXd& test_points, const PipelineSettings& settings) {
    detail::require(test_points.rows() >= 1, "pipeline: need at least one test point");
    const auto& path = fit.path;
    PipelineResult out;
    out.k_cv = path.k_cv;
    out.degenerate_outcome = fit.degenerate_outcome;
    for (const auto& f : path.fits) out.l1_norms.push_back(f.l1_norm);

    WorkingModelLadder ladder(path, fit.design, y);
    const double thr = settings.threshold.value_or(undersmoothing_threshold(y.size()));
    bool need_local = false, need_global = false;
    for (const auto& c : settings.combinations) {
        need_local |= c.selector == Selector::local_u;
        need_global |= c.selector == Selector::global_u;
    }
    const auto J = test_points.rows();
    std::vector<Eigen::VectorXd> points;
    for (Eigen::Index j = 0; j < J; ++j) points.emplace_back(test_points.row(j).transpose());
    if (need_global) out.global = select_global(ladder, test_points, thr);
    if (need_local)
        for (const auto& x : points) out.local.push_back(select_local(ladder, x, thr));

    out.reports.reserve(static_cast<std::size_t>(J) * settings.combinations.size());
    for (std::size_t j = 0; j < points.size(); ++j) {
        for (const auto& c : settings.combinations) {
            std::size_t k = path.k_cv;
            if (c.selector == Selector::global_u) k = out.global.k;
            if (c.selector == Selector::local_u) k = out.local[j].k;
            out.reports.push_back(build_report(ladder.model(k), y, c.estimator, c.selector, points[j], settings.alpha));
        }
    }
    return out;
}

inline PipelineResult run_pipeline(const Dataset& data, const Eigen::MatrixXd& test_points,
                                   const PipelineSettings& settings, std::uint64_t seed) {
    detail::require(test_points.cols() == data.d(), "pipeline: test points have " + std::to_string(test_points.cols()) +
                                                        " coordinates but data has " + std::to_string(data.d()));
    const auto fit = cross_validate(data, settings.hal, seed);
    return analyze_fit(fit, data.y, test_points, settings);
}

} // namespace halinfer
