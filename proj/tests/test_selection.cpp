#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "halinfer/inference.hpp"
#include "halinfer/pipeline.hpp"
#include "halinfer/selection.hpp"
#include "halinfer/simlab.hpp"
#include "oracles.hpp"

using namespace halinfer;

namespace {

Dataset scenario_data(int scenario, int d, Eigen::Index n, std::uint64_t seed) {
    ScenarioSpec spec;
    spec.scenario = scenario;
    spec.d = d;
    spec.n = n;
    CounterRng rng(seed);
    return draw_dataset(spec, rng);
}

/// Design with hand-chosen columns; specs are first-order hinges in coordinate 0.
DesignMatrix hand_design(const Eigen::MatrixXd& cols) {
    DesignMatrix dm;
    dm.values.resize(cols.rows(), cols.cols() + 1);
    dm.values.col(0).setOnes();
    dm.values.rightCols(cols.cols()) = cols;
    dm.column_map.emplace_back(std::nullopt);
    for (Eigen::Index c = 0; c < cols.cols(); ++c) {
        dm.column_map.emplace_back(static_cast<std::size_t>(c));
        dm.specs.push_back(BasisSpec{{0}, {static_cast<double>(c)}, SplineOrder::first});
    }
    return dm;
}

struct Fitted {
    Dataset data;
    CrossValidatedHal fit;
};

Fitted fitted(int scenario, int d, Eigen::Index n, std::uint64_t seed) {
    Fitted f{scenario_data(scenario, d, n, seed), {}};
    f.fit = cross_validate(f.data, HalSettings{}, seed);
    return f;
}

} // namespace

TEST(WorkingModel, LambdaMaxGivesInterceptOnly) {
    const auto f = fitted(1, 1, 80, 1);
    const auto m = extract_working_model(f.fit.path, 0, f.fit.design);
    EXPECT_EQ(m.s_k(), 0u);
    EXPECT_EQ(m.columns, std::vector<Eigen::Index>{0});
    EXPECT_THROW(extract_working_model(f.fit.path, f.fit.path.size(), f.fit.design), InputError);
}

TEST(WorkingModel, RetainsExactlyTheNonzeroCoefficients) {
    CounterRng rng(2);
    Eigen::MatrixXd cols(10, 5);
    for (auto& v : cols.reshaped()) v = rng.normal();
    const auto dm = hand_design(cols);
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(6);
    beta << 0.3, 0.0, 1.5, 0.0, -2.0, 0.7;
    const auto m = make_working_model(dm, beta, 4);
    EXPECT_EQ(m.s_k(), 3u);
    EXPECT_EQ(m.columns, (std::vector<Eigen::Index>{0, 2, 4, 5}));
    for (Eigen::Index c = 1; c < m.beta_hal.size(); ++c) EXPECT_NE(m.beta_hal(c), 0.0);
    EXPECT_EQ(m.rank, 4);
    EXPECT_FALSE(m.truncated);
}

TEST(WorkingModel, CollinearColumnsGiveReducedRankAndAPseudoInverse) {
    Eigen::MatrixXd cols(6, 2);
    cols.col(0) << 0, 1, 2, 0, 3, 1;
    cols.col(1) = cols.col(0);
    const auto dm = hand_design(cols);
    const auto m = make_working_model(dm, Eigen::Vector3d(1.0, 0.5, 0.5));
    EXPECT_EQ(m.rank, 2);
    EXPECT_LE((m.gram_inv * m.gram * m.gram_inv - m.gram_inv).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE((m.gram * m.gram_inv * m.gram - m.gram).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(WorkingModel, PseudoInversePropertyAlongARealPath) {
    // late path models reach condition numbers near 1e9, so the check is relative to |gram_inv|
    const auto f = fitted(2, 3, 200, 3);
    for (std::size_t k = 0; k < f.fit.path.size(); k += 7) {
        const auto m = extract_working_model(f.fit.path, k, f.fit.design);
        const double scale = m.gram_inv.cwiseAbs().maxCoeff();
        EXPECT_LE((m.gram_inv * m.gram * m.gram_inv - m.gram_inv).cwiseAbs().maxCoeff(), 1e-8 * scale);
    }
}

TEST(WorkingModel, TooManyBasesAreTruncatedToNMinusOne) {
    CounterRng rng(4);
    Eigen::MatrixXd cols(4, 6);
    for (auto& v : cols.reshaped()) v = rng.normal();
    const auto dm = hand_design(cols);
    Eigen::VectorXd beta(7);
    beta << 0.0, 0.1, -3.0, 0.2, 2.0, -0.05, 1.0;
    const auto m = make_working_model(dm, beta);
    EXPECT_TRUE(m.truncated);
    EXPECT_EQ(m.s_k(), 3u);
    EXPECT_EQ(m.columns, (std::vector<Eigen::Index>{0, 2, 4, 6}));
}

TEST(InfluenceCurve, InterceptOnlyAtTheMean) {
    const Eigen::VectorXd y = Eigen::Vector4d(1.0, 2.0, 4.0, 9.0);
    const auto dm = hand_design(Eigen::MatrixXd(4, 0));
    const auto m = make_working_model(dm, Eigen::VectorXd::Constant(1, y.mean()));
    const auto D = influence_curve(m, y, m.beta_hal, std::vector<double>{0.0});
    EXPECT_LE((D - (y.array() - y.mean()).matrix()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(D.mean(), 0.0, 1e-12);
}

TEST(InfluenceCurve, RelaxedFitSolvesTheScore) {
    const auto f = fitted(2, 1, 150, 5);
    WorkingModelLadder ladder(f.fit.path, f.fit.design, f.data.y);
    for (std::size_t k : {f.fit.path.k_cv, f.fit.path.size() - 1}) {
        const auto& m = ladder.model(k);
        const auto b = fit_relaxed(m, f.data.y);
        for (double x : {-3.5, -1.0, 0.0, 0.7, 3.9})
            EXPECT_NEAR(influence_curve(m, f.data.y, b, std::vector<double>{x}).mean(), 0.0, 1e-8);
        const Eigen::VectorXd score = m.design_sub.transpose() * (f.data.y - m.design_sub * b) / 150.0;
        EXPECT_LE(score.cwiseAbs().maxCoeff(), 1e-8);
    }
}

TEST(InfluenceCurve, TwoBasisModelMatchesDenseOracle) {
    CounterRng rng(6);
    Eigen::MatrixXd cols(6, 2);
    for (auto& v : cols.reshaped()) v = rng.uniform(0.0, 2.0);
    Eigen::VectorXd y(6);
    for (auto& v : y) v = rng.normal();
    const auto dm = hand_design(cols);
    const auto m = make_working_model(dm, Eigen::Vector3d(0.2, -0.4, 0.9));
    const Eigen::VectorXd beta = Eigen::Vector3d(0.1, 0.3, -0.2);
    const std::vector<double> x{1.3};
    const auto phi = m.features(x);
    const double ref = oracle::score_mean_direct(m.design_sub, y, beta, phi);
    EXPECT_NEAR(influence_curve(m, y, beta, x).mean(), ref, 1e-10);
}

TEST(InfluenceCurve, LinearInTheResidual) {
    const auto f = fitted(1, 1, 100, 7);
    const auto m = extract_working_model(f.fit.path, f.fit.path.k_cv, f.fit.design);
    CounterRng rng(8);
    Eigen::VectorXd delta(m.beta_hal.size());
    for (auto& v : delta) v = rng.normal();
    const Eigen::VectorXd y2 = f.data.y + m.design_sub * delta;
    const std::vector<double> x{0.4};
    const auto a = influence_curve(m, f.data.y, m.beta_hal, x);
    const auto b = influence_curve(m, y2, Eigen::VectorXd(m.beta_hal + delta), x);
    EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(ScoreDiagnostics, RelaxedRatioIsZeroAndThresholdArithmetic) {
    const auto f = fitted(1, 1, 100, 9);
    const auto m = extract_working_model(f.fit.path, f.fit.path.k_cv, f.fit.design);
    const auto diag = score_diagnostics(m, f.data.y, fit_relaxed(m, f.data.y), std::vector<double>{0.1}, 0.5);
    EXPECT_NEAR(diag.ratio, 0.0, 1e-8);
    EXPECT_NEAR(undersmoothing_threshold(8), 0.4809, 1e-4);
    EXPECT_THROW(score_diagnostics(m, f.data.y, m.beta_hal, std::vector<double>{0.1}, 0.0), DegenerateError);
}

TEST(ScoreDiagnostics, HandComputedInterceptModel) {
    const Eigen::VectorXd y = Eigen::Vector3d(1.0, 2.0, 6.0);
    const auto dm = hand_design(Eigen::MatrixXd(3, 0));
    const auto m = make_working_model(dm, Eigen::VectorXd::Constant(1, 1.0));
    const Eigen::VectorXd b = Eigen::VectorXd::Constant(1, y.mean() + 1.0);
    const auto diag = score_diagnostics(m, y, b, std::vector<double>{0.0}, 2.0);
    EXPECT_NEAR(diag.score_mean, -1.0, 1e-12);
    const double pn_d2 = ((y.array() - y.mean() - 1.0).square()).mean();
    EXPECT_NEAR(diag.se, std::sqrt(pn_d2 / 3.0), 1e-12);
    EXPECT_NEAR(diag.ratio, 0.5, 1e-12);
}

TEST(ScoreRatio, ZeroOverZeroConvention) {
    EXPECT_EQ(score_ratio(0.0, 0.0), 0.0);
    EXPECT_TRUE(std::isinf(score_ratio(1e-3, 0.0)));
    EXPECT_DOUBLE_EQ(score_ratio(-0.5, 2.0), 0.25);
}

TEST(SelectLocal, GenerousThresholdKeepsTheCvModel) {
    const auto f = fitted(1, 1, 120, 10);
    WorkingModelLadder ladder(f.fit.path, f.fit.design, f.data.y);
    const auto s = select_local(ladder, std::vector<double>{0.3}, 1e9);
    EXPECT_EQ(s.k, f.fit.path.k_cv);
    EXPECT_FALSE(s.criterion_unmet);
}

TEST(SelectLocal, UnreachableThresholdFallsBackToTheLargestModel) {
    const auto f = fitted(1, 1, 120, 11);
    WorkingModelLadder ladder(f.fit.path, f.fit.design, f.data.y);
    const auto s = select_local(ladder, std::vector<double>{0.3}, -1.0);
    EXPECT_EQ(s.k, f.fit.path.size() - 1);
    EXPECT_TRUE(s.criterion_unmet);
}

TEST(SelectLocal, MonotoneInThresholdAndWithinRange) {
    const auto f = fitted(2, 3, 300, 12);
    WorkingModelLadder ladder(f.fit.path, f.fit.design, f.data.y);
    CounterRng rng(13);
    const auto pts = draw_covariates(3, 10, rng);
    for (Eigen::Index j = 0; j < pts.rows(); ++j) {
        const Eigen::VectorXd x = pts.row(j).transpose();
        std::size_t prev = f.fit.path.size();
        for (double thr : {0.01, 0.05, 0.1, 0.2, 0.5, 1.0}) {
            const auto s = select_local(ladder, x, thr);
            EXPECT_GE(s.k, f.fit.path.k_cv);
            EXPECT_LE(s.k, f.fit.path.size() - 1);
            EXPECT_LE(s.k, prev);
            prev = s.k;
        }
    }
}

TEST(SelectGlobal, AllSatisfiedAtCvKeepsTheCvModel) {
    const auto f = fitted(1, 1, 120, 14);
    WorkingModelLadder ladder(f.fit.path, f.fit.design, f.data.y);
    const Eigen::MatrixXd pts = Eigen::Vector3d(-1.0, 0.0, 2.0);
    const auto g = select_global(ladder, pts, 1e9);
    EXPECT_EQ(g.k, f.fit.path.k_cv);
    EXPECT_EQ(g.fraction, 1.0);
}

TEST(SelectGlobal, SinglePointAgreesWithLocalWhenFullySatisfied) {
    const auto f = fitted(2, 1, 200, 15);
    WorkingModelLadder ladder(f.fit.path, f.fit.design, f.data.y);
    const double thr = undersmoothing_threshold(200);
    for (double x : {-3.0, -0.5, 1.0, 2.5}) {
        const auto loc = select_local(ladder, std::vector<double>{x}, thr);
        const auto glob = select_global(ladder, Eigen::MatrixXd::Constant(1, 1, x), thr);
        if (!loc.criterion_unmet) {
            EXPECT_EQ(glob.fraction, 1.0);
            EXPECT_EQ(glob.k, loc.k);
        }
    }
}

TEST(SelectGlobal, ReturnsAnArgmaxEvenWhenNoModelSatisfiesEveryPoint) {
    const auto f = fitted(3, 3, 300, 16);
    WorkingModelLadder ladder(f.fit.path, f.fit.design, f.data.y);
    CounterRng rng(17);
    const auto pts = draw_covariates(3, 20, rng);
    const double thr = 0.02;
    const auto g = select_global(ladder, pts, thr);
    ASSERT_EQ(g.fractions.size(), f.fit.path.size() - f.fit.path.k_cv);
    const double best = *std::max_element(g.fractions.begin(), g.fractions.end());
    EXPECT_EQ(g.fraction, best);
    EXPECT_EQ(g.fractions[g.k - f.fit.path.k_cv], best);
    for (std::size_t i = 0; i < g.k - f.fit.path.k_cv; ++i) EXPECT_LT(g.fractions[i], best);
    EXPECT_GE(g.k, f.fit.path.k_cv);
    EXPECT_LE(g.k, f.fit.path.size() - 1);
}

TEST(SelectLocal, UndersmoothingEnlargesTheNormInScenarioTwo) {
    // 50 Monte Carlo runs, d = 3, n = 1000
    std::vector<double> local_l1, cv_l1;
    CounterRng prng(18);
    const auto pts = draw_covariates(3, 20, prng);
    for (std::uint64_t r = 0; r < 50; ++r) {
        const auto f = fitted(2, 3, 1000, derive_key(19, {r}));
        PipelineSettings ps;
        ps.combinations = {{Selector::local_u, Estimator::regular}};
        const auto res = analyze_fit(f.fit, f.data.y, pts, ps);
        std::vector<double> l1;
        for (const auto& s : res.local) l1.push_back(f.fit.path.fits[s.k].l1_norm);
        local_l1.push_back(median(l1));
        cv_l1.push_back(f.fit.path.fits[f.fit.path.k_cv].l1_norm);
    }
    EXPECT_GT(median(local_l1), median(cv_l1));
}
