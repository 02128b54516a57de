#pragma once

// Conditional average treatment effect by regressing doubly robust
// pseudo-outcomes on baseline covariates with HAL.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "halinfer/dataset.hpp"
#include "halinfer/error.hpp"
#include "halinfer/logistic.hpp"
#include "halinfer/pipeline.hpp"
#include "halinfer/rng.hpp"
#include "halinfer/simlab.hpp"
#include "halinfer/solver.hpp"

namespace halinfer {

/// Observed data O = (W, A, Y).
struct CausalDataset {
    Eigen::MatrixXd W;
    Eigen::VectorXd A;  ///< 0/1
    Eigen::VectorXd Y;

    [[nodiscard]] Eigen::Index n() const noexcept { return W.rows(); }
    [[nodiscard]] Eigen::Index d() const noexcept { return W.cols(); }

    void validate() const {
        detail::require(A.size() == W.rows() && Y.size() == W.rows(),
                        "causal data: W, A and Y must have the same number of rows");
        for (Eigen::Index i = 0; i < A.size(); ++i)
            detail::require(A(i) == 0.0 || A(i) == 1.0,
                            "causal data: treatment at row " + std::to_string(i + 1) + " is not 0 or 1");
    }

    [[nodiscard]] CausalDataset rows(const std::vector<Eigen::Index>& idx) const {
        CausalDataset out;
        out.W.resize(static_cast<Eigen::Index>(idx.size()), W.cols());
        out.A.resize(static_cast<Eigen::Index>(idx.size()));
        out.Y.resize(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const auto r = static_cast<Eigen::Index>(i);
            out.W.row(r) = W.row(idx[i]);
            out.A(r) = A(idx[i]);
            out.Y(r) = Y(idx[i]);
        }
        return out;
    }
};

/// Beta(2, 4) CDF in closed form: 1 - sum_{j<2} C(5,j) x^j (1-x)^(5-j).
inline double beta24_cdf(double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double q = 1.0 - x;
    const double q4 = q * q * q * q;
    return 1.0 - q4 * q - 5.0 * x * q4;
}

inline double cate_zeta(double w) { return 1.0 / (1.0 + std::exp(-12.0 * (w - 0.5))); }

/// Two uniform covariates, Beta-CDF propensity, sigmoid-product outcome means and
/// heteroscedastic noise with variance -log(W1).
struct CateDgp {
    double control_factor = 0.9;  ///< E[Y | A=0, W] / E[Y | A=1, W]; 1 gives a null effect

    [[nodiscard]] double propensity(double w1) const { return (1.0 + beta24_cdf(w1)) / 4.0; }

    [[nodiscard]] double outcome_mean(double a, double w1, double w2) const {
        const double base = cate_zeta(w1) * cate_zeta(w2);
        return a == 1.0 ? base : control_factor * base;
    }

    [[nodiscard]] double effect(double w1, double w2) const { return (1.0 - control_factor) * cate_zeta(w1) * cate_zeta(w2); }
};

inline CausalDataset cate_dgp(Eigen::Index n, CounterRng& rng, const CateDgp& dgp = {}) {
    detail::require(n >= 1, "cate_dgp: need at least one observation");
    CausalDataset data;
    data.W.resize(n, 2);
    data.A.resize(n);
    data.Y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double w1 = rng.uniform();
        while (w1 < 1e-12) w1 = rng.uniform();
        const double w2 = rng.uniform();
        const double a = rng.bernoulli(dgp.propensity(w1)) ? 1.0 : 0.0;
        data.W(i, 0) = w1;
        data.W(i, 1) = w2;
        data.A(i) = a;
        data.Y(i) = dgp.outcome_mean(a, w1, w2) + std::sqrt(-std::log(w1)) * rng.normal();
    }
    return data;
}

inline CausalDataset cate_dgp(Eigen::Index n, std::uint64_t seed, const CateDgp& dgp = {}) {
    CounterRng rng(seed);
    return cate_dgp(n, rng, dgp);
}

/// (2a-1)/g(a|w) (y - Q(a,w)) + Q(1,w) - Q(0,w) with g(0|w) = 1 - g1.
inline double pseudo_outcome(double q0, double q1, double g1, double a, double y) {
    const double ga = a == 1.0 ? g1 : 1.0 - g1;
    const double qa = a == 1.0 ? q1 : q0;
    return (2.0 * a - 1.0) / ga * (y - qa) + q1 - q0;
}

/// Outcome regression and propensity score, both evaluated row-wise on covariate matrices.
struct NuisancePair {
    std::function<Eigen::VectorXd(double, const Eigen::MatrixXd&)> outcome;  ///< Q(a, w)
    std::function<Eigen::VectorXd(const Eigen::MatrixXd&)> propensity;        ///< g(1|w) before truncation
    double lo = 0.01;
    double hi = 0.99;
};

struct PseudoOutcomes {
    Eigen::VectorXd eta;
    std::size_t clamped = 0;  ///< propensities moved into [lo, hi]
};

inline PseudoOutcomes pseudo_outcomes(const NuisancePair& nuis, const CausalDataset& data) {
    detail::require(nuis.lo > 0.0 && nuis.lo <= nuis.hi && nuis.hi < 1.0, "nuisance truncation must lie inside (0, 1)");
    const Eigen::VectorXd q0 = nuis.outcome(0.0, data.W);
    const Eigen::VectorXd q1 = nuis.outcome(1.0, data.W);
    const Eigen::VectorXd g = nuis.propensity(data.W);
    PseudoOutcomes out;
    out.eta.resize(data.n());
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        const double gi = std::clamp(g(i), nuis.lo, nuis.hi);
        out.clamped += gi != g(i);
        out.eta(i) = pseudo_outcome(q0(i), q1(i), gi, data.A(i), data.Y(i));
    }
    return out;
}

struct CateSettings {
    HalSettings outcome;            ///< nuisance outcome regression on (A, W)
    LogisticSettings propensity;
    PipelineSettings regression;    ///< pseudo-outcome regression on W
    double truncation_lo = 0.01;
    double truncation_hi = 0.99;
    int cross_fit_folds = 2;
};

namespace detail {

inline Eigen::MatrixXd with_treatment(double a, const Eigen::MatrixXd& W) {
    Eigen::MatrixXd X(W.rows(), W.cols() + 1);
    X.col(0).setConstant(a);
    X.rightCols(W.cols()) = W;
    return X;
}

} // namespace detail

/// First-order HAL of Y on (A, W) and a logistic lasso of A on the zero-order basis of W.
inline NuisancePair fit_nuisances(const CausalDataset& data, const CateSettings& s, std::uint64_t seed) {
    data.validate();
    detail::require(detail::both_classes(data.A), "fit_nuisances: treatment must take both values 0 and 1");
    Dataset ds;
    ds.X = detail::with_treatment(0.0, data.W);
    ds.X.col(0) = data.A;
    ds.y = data.Y;
    auto q = std::make_shared<CrossValidatedHal>(cross_validate(ds, s.outcome, derive_key(seed, {1})));
    auto g = std::make_shared<PropensityModel>(fit_propensity(data.W, data.A, s.propensity, derive_key(seed, {2})));
    NuisancePair nuis;
    nuis.outcome = [q](double a, const Eigen::MatrixXd& W) -> Eigen::VectorXd {
        return q->design.evaluate(detail::with_treatment(a, W)) * q->path.fits[q->path.k_cv].beta;
    };
    nuis.propensity = [g](const Eigen::MatrixXd& W) -> Eigen::VectorXd { return g->predict(W); };
    nuis.lo = s.truncation_lo;
    nuis.hi = s.truncation_hi;
    return nuis;
}

/// The true outcome regression and propensity of a CateDgp.
inline NuisancePair oracle_nuisances(const CateDgp& dgp) {
    NuisancePair nuis;
    nuis.outcome = [dgp](double a, const Eigen::MatrixXd& W) -> Eigen::VectorXd {
        Eigen::VectorXd q(W.rows());
        for (Eigen::Index i = 0; i < W.rows(); ++i) q(i) = dgp.outcome_mean(a, W(i, 0), W(i, 1));
        return q;
    };
    nuis.propensity = [dgp](const Eigen::MatrixXd& W) -> Eigen::VectorXd {
        Eigen::VectorXd g(W.rows());
        for (Eigen::Index i = 0; i < W.rows(); ++i) g(i) = dgp.propensity(W(i, 0));
        return g;
    };
    return nuis;
}

/// Pseudo-outcomes with nuisances cross-fitted over `folds` splits: each split's
/// values come from nuisances fitted on the other splits.
inline PseudoOutcomes cross_fitted_pseudo_outcomes(const CausalDataset& data, const CateSettings& s, std::uint64_t seed) {
    data.validate();
    detail::require(s.cross_fit_folds >= 2, "cross-fitting needs at least 2 folds");
    detail::require(data.n() >= 2 * s.cross_fit_folds, "cross-fitting: too few observations for the fold count");
    const auto label = assign_folds(data.n(), s.cross_fit_folds, derive_key(seed, {0}));
    PseudoOutcomes out;
    out.eta.resize(data.n());
    for (int f = 0; f < s.cross_fit_folds; ++f) {
        std::vector<Eigen::Index> tr, ev;
        for (Eigen::Index i = 0; i < data.n(); ++i) (label[static_cast<std::size_t>(i)] == f ? ev : tr).push_back(i);
        const auto train = data.rows(tr);
        if (!detail::both_classes(train.A)) throw DegenerateError("cross-fitting: a training split holds a single treatment class");
        const auto nuis = fit_nuisances(train, s, derive_key(seed, {1, static_cast<std::uint64_t>(f)}));
        const auto part = pseudo_outcomes(nuis, data.rows(ev));
        for (std::size_t i = 0; i < ev.size(); ++i) out.eta(ev[i]) = part.eta(static_cast<Eigen::Index>(i));
        out.clamped += part.clamped;
    }
    return out;
}

struct CateResult {
    PipelineResult pipeline;  ///< reports hold B_n(w) as psi and tau_n(w) as se
    PseudoOutcomes pseudo;
};

/// HAL regression of given pseudo-outcomes on W, with selectors and reports at the test points.
inline CateResult regress_pseudo_outcomes(const CausalDataset& data, PseudoOutcomes pseudo,
                                          const Eigen::MatrixXd& test_points, const CateSettings& s,
                                          std::uint64_t seed) {
    Dataset reg;
    reg.X = data.W;
    reg.y = pseudo.eta;
    for (Eigen::Index j = 0; j < data.d(); ++j) reg.names.push_back("w" + std::to_string(j + 1));
    reg.outcome_name = "eta";
    CateResult out;
    out.pipeline = run_pipeline(reg, test_points, s.regression, derive_key(seed, {2}));
    out.pseudo = std::move(pseudo);
    return out;
}

inline CateResult estimate_cate(const CausalDataset& data, const Eigen::MatrixXd& test_points, const CateSettings& s,
                                std::uint64_t seed) {
    return regress_pseudo_outcomes(data, cross_fitted_pseudo_outcomes(data, s, seed), test_points, s, seed);
}

/// Same, with fixed nuisances (e.g. oracle ones) instead of cross-fitted estimates.
inline CateResult estimate_cate(const CausalDataset& data, const Eigen::MatrixXd& test_points, const CateSettings& s,
                                const NuisancePair& nuisances, std::uint64_t seed) {
    data.validate();
    return regress_pseudo_outcomes(data, pseudo_outcomes(nuisances, data), test_points, s, seed);
}

struct CateExperimentSettings {
    Eigen::Index n = 500;
    std::size_t runs = 200;
    std::uint64_t master_seed = 20240601;
    int test_point_count = 20;
    CateDgp dgp;
    CateSettings cate;
    bool oracle_nuisances = false;
    bool clamp_test_points = true;
    unsigned threads = 1;
};

inline Eigen::MatrixXd cate_test_points(int count, std::uint64_t master_seed) {
    CounterRng rng(derive_key(master_seed, {detail::kTestPoints}));
    Eigen::MatrixXd P(count, 2);
    for (int j = 0; j < count; ++j) {
        P(j, 0) = rng.uniform();
        P(j, 1) = rng.uniform();
    }
    return P;
}

inline RunRecord cate_run(const CateExperimentSettings& s, const Eigen::MatrixXd& test_points, std::size_t run) {
    CounterRng rng(derive_key(s.master_seed, {detail::kTrainingData, run}));
    const auto data = cate_dgp(s.n, rng, s.dgp);
    RunRecord rec;
    const Eigen::MatrixXd pts =
        s.clamp_test_points ? clamp_to_range(test_points, data.W, &rec.extrapolated) : test_points;
    if (!s.clamp_test_points) rec.extrapolated.assign(static_cast<std::size_t>(pts.rows()), false);
    const auto seed = derive_key(s.master_seed, {detail::kNuisance, run});
    const auto res = s.oracle_nuisances ? estimate_cate(data, pts, s.cate, oracle_nuisances(s.dgp), seed)
                                        : estimate_cate(data, pts, s.cate, seed);
    record_selection(rec, res.pipeline, res.pipeline.l1_norms.size());
    rec.truncated = res.pseudo.clamped;
    for (Eigen::Index j = 0; j < pts.rows(); ++j) rec.truth.push_back(s.dgp.effect(pts(j, 0), pts(j, 1)));
    rec.reports = res.pipeline.reports;
    return rec;
}

inline MonteCarloReport run_cate_experiment(const CateExperimentSettings& s) {
    detail::require(s.runs >= 2, "cate experiment: need at least 2 runs");
    detail::require(s.n >= 50, "cate experiment: sample size must be at least 50");
    detail::require(s.test_point_count >= 1, "cate experiment: need at least one test point");
    detail::require(!s.cate.regression.combinations.empty(), "cate experiment: no estimator/selector combinations");
    MonteCarloReport rep;
    rep.estimand = "CATE";
    rep.scenario = "cate";
    rep.d = 2;
    rep.n = s.n;
    rep.seed = s.master_seed;
    rep.alpha = s.cate.regression.alpha;
    rep.combinations = s.cate.regression.combinations;
    rep.test_points = cate_test_points(s.test_point_count, s.master_seed);
    rep.names = {"w1", "w2"};
    rep.config = {{"estimand", rep.estimand},
                  {"n", std::to_string(s.n)},
                  {"control_factor", format_double(s.dgp.control_factor)},
                  {"test_points", std::to_string(s.test_point_count)},
                  {"runs", std::to_string(s.runs)},
                  {"seed", std::to_string(s.master_seed)},
                  {"clamp_test_points", s.clamp_test_points ? "true" : "false"},
                  {"nuisances", s.oracle_nuisances ? "oracle" : "cross-fitted"},
                  {"cross_fit_folds", std::to_string(s.cate.cross_fit_folds)},
                  {"truncation", format_double(s.cate.truncation_lo) + " " + format_double(s.cate.truncation_hi)},
                  {"outcome_folds", std::to_string(s.cate.outcome.folds)},
                  {"outcome_grid_size", std::to_string(s.cate.outcome.grid.K)},
                  {"propensity_folds", std::to_string(s.cate.propensity.folds)},
                  {"propensity_grid_size", std::to_string(s.cate.propensity.K)},
                  {"propensity_grid_ratio", format_double(s.cate.propensity.ratio)}};
    detail::describe_pipeline(rep.config, s.cate.regression);
    const auto records =
        execute_runs(s.runs, s.threads, [&](std::size_t r) { return cate_run(s, rep.test_points, r); });
    aggregate_runs(rep, records);
    return rep;
}

} // namespace halinfer
