#pragma once

// Regular, targeted (one-step) and relaxed estimators of the conditional mean at
// a test point, with delta-method standard errors and Wald intervals.

#include <array>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <Eigen/Dense>

#include "halinfer/error.hpp"
#include "halinfer/selection.hpp"

namespace halinfer {

enum class Estimator { regular, targeted, relax };
enum class Selector { cv, global_u, local_u };

inline constexpr std::array<Estimator, 3> kAllEstimators{Estimator::regular, Estimator::targeted, Estimator::relax};
inline constexpr std::array<Selector, 3> kAllSelectors{Selector::cv, Selector::global_u, Selector::local_u};

inline std::string_view to_string(Estimator e) {
    switch (e) {
    case Estimator::regular: return "regular";
    case Estimator::targeted: return "targeted";
    case Estimator::relax: return "relax";
    }
    return "?";
}

inline std::string_view to_string(Selector s) {
    switch (s) {
    case Selector::cv: return "cv";
    case Selector::global_u: return "global-u";
    case Selector::local_u: return "local-u";
    }
    return "?";
}

inline Estimator parse_estimator(std::string_view s) {
    for (auto e : kAllEstimators)
        if (to_string(e) == s) return e;
    throw InputError("unknown estimator '" + std::string(s) + "' (expected regular, targeted or relax)");
}

inline Selector parse_selector(std::string_view s) {
    for (auto v : kAllSelectors)
        if (to_string(v) == s) return v;
    throw InputError("unknown selector '" + std::string(s) + "' (expected cv, global-u or local-u)");
}

/// A selector.estimator pair such as "local-u.targeted".
struct Combination {
    Selector selector = Selector::cv;
    Estimator estimator = Estimator::regular;

    friend bool operator==(const Combination&, const Combination&) = default;

    [[nodiscard]] std::string label() const {
        return std::string(to_string(selector)) + "." + std::string(to_string(estimator));
    }

    static Combination parse(std::string_view label) {
        const auto dot = label.find('.');
        if (dot == std::string_view::npos) throw InputError("estimator label '" + std::string(label) + "' lacks a '.'");
        return {parse_selector(label.substr(0, dot)), parse_estimator(label.substr(dot + 1))};
    }
};

/// The nine selector x estimator combinations, selector-major.
inline std::vector<Combination> all_combinations() {
    std::vector<Combination> out;
    for (auto s : kAllSelectors)
        for (auto e : kAllEstimators) out.push_back({s, e});
    return out;
}

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    [[nodiscard]] double width() const noexcept { return hi - lo; }
    [[nodiscard]] bool contains(double v) const noexcept { return lo <= v && v <= hi; }
    [[nodiscard]] bool contains(const Interval& o) const noexcept { return lo <= o.lo && o.hi <= hi; }
};

struct EstimateReport {
    std::vector<double> x_tilde;
    Estimator estimator = Estimator::regular;
    Selector selector = Selector::cv;
    double psi = 0.0;
    double se = 0.0;
    double gamma = 0.0;
    Interval ci;
    Interval ci_conservative;
    std::size_t k = 0;
    std::size_t s_k = 0;
    double score_mean = 0.0;  ///< P_n D at the coefficients defining the estimator's score
    bool degenerate_variance = false;
};

/// z_{1 - alpha/2}.
inline double normal_quantile_two_sided(double alpha) {
    detail::require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
    return boost::math::quantile(boost::math::normal_distribution<double>(), 1.0 - alpha / 2.0);
}

template <class Vec>
double predict_regular(const WorkingModel& model, const Vec& x_tilde) {
    return model.features(x_tilde).dot(model.beta_hal);
}

/// Minimum-norm least squares on the working model's columns, with one step of
/// iterative refinement (the correction stays in the range of gram_inv).
inline Eigen::VectorXd fit_relaxed(const WorkingModel& model, const Eigen::VectorXd& y) {
    detail::require(y.size() == model.n(), "fit_relaxed: outcome length differs from model rows");
    const auto n = static_cast<double>(model.n());
    Eigen::VectorXd b = model.gram_inv * (model.design_sub.transpose() * y / n);
    b += model.gram_inv * (model.design_sub.transpose() * (y - model.design_sub * b) / n);
    return b;
}

inline Eigen::VectorXd fit_relaxed(const WorkingModel& model, const Dataset& data) { return fit_relaxed(model, data.y); }

/// phi(x)' beta_init + P_n D(beta_init).
template <class Vec>
double target_onestep(const WorkingModel& model, const Eigen::VectorXd& y, const Eigen::VectorXd& beta_init,
                      const Vec& x_tilde) {
    const Eigen::VectorXd phi = model.features(x_tilde);
    return phi.dot(beta_init) + influence_curve_at(model, y, beta_init, phi).mean();
}

/// sqrt((1/n) P_n D^2).
template <class Vec>
double delta_se(const WorkingModel& model, const Eigen::VectorXd& y, const Eigen::VectorXd& beta, const Vec& x_tilde) {
    return score_moments(influence_curve(model, y, beta, x_tilde)).se;
}

namespace detail {

inline EstimateReport finish_report(EstimateReport r, double score_mean, Eigen::Index n, double z) {
    r.score_mean = score_mean;
    const double floor = undersmoothing_threshold(n);
    if (!(r.se > 0.0)) {
        r.degenerate_variance = true;
        r.gamma = floor;
        r.ci = {r.psi, r.psi};
        r.ci_conservative = {r.psi, r.psi};
        return r;
    }
    r.gamma = std::max(std::abs(score_mean) / r.se, floor);
    const double half = z * r.se;
    const double half_consv = z * r.se * std::sqrt((1.0 + r.gamma) * (1.0 + r.gamma));
    r.ci = {r.psi - half, r.psi + half};
    r.ci_conservative = {r.psi - half_consv, r.psi + half_consv};
    return r;
}

} // namespace detail

/// Point estimate, delta-method SE, adaptive penalty factor and both intervals.
/// Regular and targeted use beta_hal for SE and gamma; relax uses its own refit.
template <class Vec>
EstimateReport build_report(const WorkingModel& model, const Eigen::VectorXd& y, Estimator estimator,
                            Selector selector, const Vec& x_tilde, double alpha = 0.05) {
    const double z = normal_quantile_two_sided(alpha);
    const Eigen::VectorXd phi = model.features(x_tilde);
    EstimateReport r;
    r.x_tilde.resize(static_cast<std::size_t>(x_tilde.size()));
    for (std::size_t i = 0; i < r.x_tilde.size(); ++i) r.x_tilde[i] = x_tilde[static_cast<Eigen::Index>(i)];
    r.estimator = estimator;
    r.selector = selector;
    r.k = model.k;
    r.s_k = model.s_k();
    const Eigen::VectorXd beta = estimator == Estimator::relax ? fit_relaxed(model, y) : model.beta_hal;
    const auto mom = score_moments(influence_curve_at(model, y, beta, phi));
    r.psi = phi.dot(beta);
    if (estimator == Estimator::targeted) r.psi += mom.mean;
    r.se = mom.se;
    return detail::finish_report(std::move(r), mom.mean, model.n(), z);
}

template <class Vec>
EstimateReport build_report(const WorkingModel& model, const Dataset& data, Estimator estimator, Selector selector,
                            const Vec& x_tilde, double alpha = 0.05) {
    return build_report(model, data.y, estimator, selector, x_tilde, alpha);
}

} // namespace halinfer
