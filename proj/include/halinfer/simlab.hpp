#pragma once

// Simulation scenarios and the Monte Carlo engine.
//
// Test points are drawn once per experiment. Each run draws fresh training
// data from a stream keyed by (master seed, run index), so results do not
// depend on how runs are scheduled across threads.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "halinfer/dataset.hpp"
#include "halinfer/error.hpp"
#include "halinfer/inference.hpp"
#include "halinfer/io.hpp"
#include "halinfer/pipeline.hpp"
#include "halinfer/rng.hpp"
#include "halinfer/version.hpp"

namespace halinfer {

inline double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

/// Scenario 0 is a flat truth used for smoke tests; 1-3 follow the usual simulation design.
struct ScenarioSpec {
    int scenario = 1;
    int d = 1;
    Eigen::Index n = 500;
    double noise_sd = 1.0;
    int test_point_count = 20;
    double flat_value = 0.5;  ///< truth for scenario 0

    void validate() const {
        detail::require(scenario >= 0 && scenario <= 3, "scenario must be 0, 1, 2 or 3");
        detail::require(d == 1 || d == 3 || d == 5, "scenario dimension must be 1, 3 or 5");
        detail::require(n >= 50, "scenario sample size must be at least 50");
        detail::require(noise_sd >= 0.0, "noise standard deviation must be non-negative");
        detail::require(test_point_count >= 1, "need at least one test point");
    }
};

/// Rows are observations; X1, X2 ~ U(-4,4), X3 ~ Bern(0.5), X4 ~ N(0,1), X5 ~ Gamma(2,1).
inline Eigen::MatrixXd draw_covariates(int d, Eigen::Index n, CounterRng& rng) {
    detail::require(d == 1 || d == 3 || d == 5, "draw_covariates: d must be 1, 3 or 5, got " + std::to_string(d));
    detail::require(n >= 0, "draw_covariates: negative row count");
    Eigen::MatrixXd X(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) {
            double v = 0.0;
            switch (j) {
            case 0:
            case 1: v = rng.uniform(-4.0, 4.0); break;
            case 2: v = rng.bernoulli(0.5) ? 1.0 : 0.0; break;
            case 3: v = rng.normal(); break;
            default: v = rng.gamma_integer_shape(2, 1.0); break;
            }
            X(i, j) = v;
        }
    }
    return X;
}

template <class Vec>
double true_mean(int scenario, int d, const Vec& x, double flat_value = 0.5) {
    detail::require(d == 1 || d == 3 || d == 5, "true_mean: d must be 1, 3 or 5");
    detail::require(static_cast<int>(x.size()) == d, "true_mean: point has " + std::to_string(x.size()) +
                                                          " coordinates, expected " + std::to_string(d));
    const auto X = [&](int j) { return static_cast<double>(x[j - 1]); };
    switch (scenario) {
    case 0: return flat_value;
    case 1:
        if (d == 1) return 0.05 * X(1) + 0.04;
        if (d == 3) return 0.07 * X(1) - 0.28 * X(1) * X(2) + 0.05 * X(2) + 0.25 * X(3) * X(2);
        return 0.1 * X(1) - 0.3 * X(1) * X(3) + 0.25 * X(2) + 0.5 * X(3) * X(2) - 0.5 * X(4) + 0.04 * X(5) * X(4) -
               0.1 * X(5);
    case 2:
        if (d == 1) return 0.05 * X(1) + 0.04 * X(1) * X(1);
        if (d == 3) return 0.07 * X(1) - 0.28 * X(1) * X(1) + 0.05 * X(2) + 0.25 * X(2) * X(3);
        return 0.1 * X(1) - 0.3 * X(1) * X(1) + 0.25 * X(2) + 0.5 * X(2) * X(3) - 0.5 * X(4) + 0.04 * X(5) * X(5) -
               0.1 * X(5);
    case 3: {
        if (d == 1) return sigmoid(X(1));
        const double base = -2.0 * X(1) * (X(1) > -0.5 ? 1.0 : 0.0) - X(3) + 2.0 * X(2) * X(3);
        if (d == 3) return sigmoid(base);
        return sigmoid(base - 0.5 * X(4) + X(4) * X(5) - 0.25 * X(5));
    }
    default: break;
    }
    throw InputError("true_mean: unknown scenario " + std::to_string(scenario));
}

template <class Vec>
double true_mean(const ScenarioSpec& spec, const Vec& x) {
    return true_mean(spec.scenario, spec.d, x, spec.flat_value);
}

/// Covariates, then Gaussian noise, from one stream.
inline Dataset draw_dataset(const ScenarioSpec& spec, CounterRng& rng) {
    spec.validate();
    Dataset data;
    data.X = draw_covariates(spec.d, spec.n, rng);
    data.y.resize(spec.n);
    for (Eigen::Index i = 0; i < spec.n; ++i) {
        const Eigen::VectorXd xi = data.X.row(i).transpose();
        data.y(i) = true_mean(spec, xi) + spec.noise_sd * rng.normal();
    }
    for (int j = 1; j <= spec.d; ++j) data.names.push_back("x" + std::to_string(j));
    return data;
}

/// Clamp each point coordinatewise to the column ranges of X; `moved[j]` flags clamped rows.
inline Eigen::MatrixXd clamp_to_range(const Eigen::MatrixXd& points, const Eigen::MatrixXd& X, std::vector<bool>* moved) {
    detail::require(points.cols() == X.cols(), "clamp_to_range: dimension mismatch");
    detail::require(X.rows() >= 1, "clamp_to_range: empty training data");
    Eigen::MatrixXd out = points;
    if (moved) moved->assign(static_cast<std::size_t>(points.rows()), false);
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
        const double lo = X.col(c).minCoeff();
        const double hi = X.col(c).maxCoeff();
        for (Eigen::Index j = 0; j < points.rows(); ++j) {
            const double v = std::clamp(points(j, c), lo, hi);
            if (v != points(j, c) && moved) (*moved)[static_cast<std::size_t>(j)] = true;
            out(j, c) = v;
        }
    }
    return out;
}

/// What one Monte Carlo run contributes.
struct RunRecord {
    bool ok = false;
    std::string failure;
    std::size_t K = 0;
    std::size_t k_cv = 0;
    std::size_t k_global = 0;
    std::vector<std::size_t> k_local;   ///< per point
    std::vector<bool> local_unmet;      ///< per point
    std::vector<double> truth;          ///< per point, at the point actually evaluated
    std::vector<bool> extrapolated;     ///< per point
    std::vector<EstimateReport> reports;  ///< point-major, then combination order
    std::size_t truncated = 0;          ///< nuisance propensities clamped in this run
};

/// Fill the selector fields of a record from a pipeline result.
inline void record_selection(RunRecord& rec, const PipelineResult& res, std::size_t K) {
    rec.K = K;
    rec.k_cv = res.k_cv;
    rec.k_global = res.global.k;
    for (const auto& l : res.local) {
        rec.k_local.push_back(l.k);
        rec.local_unmet.push_back(l.criterion_unmet);
    }
}

inline unsigned resolve_threads(unsigned requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

/// Run `fn(run_index)` for every run on `threads` workers. Non-convergence and degenerate
/// inputs mark the run failed; any other exception is rethrown (lowest run index first).
template <class Fn>
std::vector<RunRecord> execute_runs(std::size_t runs, unsigned threads, Fn&& fn) {
    std::vector<RunRecord> out(runs);
    std::vector<std::exception_ptr> errors(runs);
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t r; (r = next.fetch_add(1)) < runs;) {
            try {
                out[r] = fn(r);
                out[r].ok = true;
            } catch (const ConvergenceError& e) {
                out[r] = RunRecord{};
                out[r].failure = e.what();
            } catch (const DegenerateError& e) {
                out[r] = RunRecord{};
                out[r].failure = e.what();
            } catch (...) {
                errors[r] = std::current_exception();
            }
        }
    };
    const unsigned T = std::min<std::size_t>(resolve_threads(threads), std::max<std::size_t>(runs, 1));
    if (T <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < T; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

struct PointMetrics {
    std::size_t point = 0;
    Combination combination;
    double true_value = 0.0;      ///< mean truth over used runs
    double mean_estimate = 0.0;
    double bias = 0.0;            ///< mean of (estimate - truth)
    double oracle_se = 0.0;       ///< MC standard deviation of (estimate - truth)
    double bias_se_ratio = 0.0;
    double oracle_coverage = 0.0;
    double delta_coverage = 0.0;
    double delta_coverage_conservative = 0.0;
    double mean_se = 0.0;
    double width_ratio = 0.0;     ///< mean delta CI width / oracle CI width
    double width_ratio_conservative = 0.0;
    double mean_k = 0.0;
    std::size_t runs_used = 0;
    std::size_t extrapolated_runs = 0;
};

struct MonteCarloReport {
    std::string estimand = "Q0";
    std::string scenario;                 ///< "0".."3" or "cate"
    int d = 0;
    Eigen::Index n = 0;
    std::size_t runs = 0;
    std::uint64_t seed = 0;
    double alpha = 0.05;
    Eigen::MatrixXd test_points;          ///< as drawn, before any clamping
    std::vector<std::string> names;       ///< coordinate names
    std::vector<Combination> combinations;
    std::vector<PointMetrics> metrics;    ///< point-major, then combination order
    std::vector<std::pair<std::string, std::string>> config;  ///< resolved settings, echoed into outputs

    std::size_t runs_failed = 0;
    std::vector<std::pair<std::size_t, std::string>> failures;
    std::vector<std::size_t> k_cv;        ///< per successful run
    std::vector<std::size_t> k_global;
    std::vector<std::vector<std::size_t>> k_local;
    std::size_t K = 0;
    std::size_t monotonicity_violations = 0;  ///< runs/points with k_local outside [k_cv, K-1]
    std::size_t local_unmet = 0;
    std::size_t extrapolated = 0;         ///< (run, point) pairs that were clamped
    std::size_t truncated = 0;            ///< propensities clamped, summed over runs

    [[nodiscard]] std::size_t runs_ok() const noexcept { return runs - runs_failed; }
    [[nodiscard]] std::size_t point_count() const noexcept { return static_cast<std::size_t>(test_points.rows()); }

    [[nodiscard]] const PointMetrics& at(std::size_t point, const Combination& c) const {
        for (std::size_t i = 0; i < combinations.size(); ++i)
            if (combinations[i] == c) return metrics[point * combinations.size() + i];
        throw InputError("report: combination " + c.label() + " was not run");
    }

    /// One metric across points for a combination.
    [[nodiscard]] std::vector<double> across_points(const Combination& c, double PointMetrics::*field) const {
        std::vector<double> v;
        for (std::size_t j = 0; j < point_count(); ++j) v.push_back(at(j, c).*field);
        return v;
    }
};

inline double median(std::vector<double> v) {
    detail::require(!v.empty(), "median of an empty set");
    std::sort(v.begin(), v.end());
    const auto m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline double mean(const std::vector<double>& v) {
    detail::require(!v.empty(), "mean of an empty set");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

/// Reduce run records (in run-index order) into per-point metrics.
inline void aggregate_runs(MonteCarloReport& rep, const std::vector<RunRecord>& records) {
    const std::size_t J = rep.point_count();
    const std::size_t C = rep.combinations.size();
    const double z = normal_quantile_two_sided(rep.alpha);
    rep.runs = records.size();
    rep.runs_failed = 0;
    rep.failures.clear();
    rep.k_cv.clear();
    rep.k_global.clear();
    rep.k_local.clear();
    rep.monotonicity_violations = rep.local_unmet = rep.extrapolated = rep.truncated = 0;
    std::vector<const RunRecord*> ok;
    for (std::size_t r = 0; r < records.size(); ++r) {
        const auto& rec = records[r];
        if (!rec.ok) {
            ++rep.runs_failed;
            rep.failures.emplace_back(r, rec.failure);
            continue;
        }
        detail::ensure(rec.reports.size() == J * C && rec.truth.size() == J, "aggregate: malformed run record");
        ok.push_back(&rec);
        rep.K = rec.K;
        rep.k_cv.push_back(rec.k_cv);
        rep.k_global.push_back(rec.k_global);
        rep.k_local.push_back(rec.k_local);
        for (std::size_t j = 0; j < rec.k_local.size(); ++j) {
            if (rec.k_local[j] < rec.k_cv || rec.k_local[j] + 1 > rec.K) ++rep.monotonicity_violations;
            if (rec.local_unmet[j]) ++rep.local_unmet;
        }
        for (bool e : rec.extrapolated) rep.extrapolated += e;
        rep.truncated += rec.truncated;
    }

    rep.metrics.assign(J * C, {});
    const auto R = static_cast<double>(ok.size());
    for (std::size_t j = 0; j < J; ++j) {
        for (std::size_t c = 0; c < C; ++c) {
            auto& m = rep.metrics[j * C + c];
            m.point = j;
            m.combination = rep.combinations[c];
            m.runs_used = ok.size();
            if (ok.empty()) continue;
            double s_truth = 0, s_psi = 0, s_err = 0, s_se = 0, s_w = 0, s_wc = 0, s_k = 0;
            std::size_t cov_d = 0, cov_c = 0;
            for (const auto* rec : ok) {
                const auto& e = rec->reports[j * C + c];
                const double t = rec->truth[j];
                s_truth += t;
                s_psi += e.psi;
                s_err += e.psi - t;
                s_se += e.se;
                s_w += e.ci.width();
                s_wc += e.ci_conservative.width();
                s_k += static_cast<double>(e.k);
                cov_d += e.ci.contains(t);
                cov_c += e.ci_conservative.contains(t);
                m.extrapolated_runs += rec->extrapolated[j];
            }
            m.true_value = s_truth / R;
            m.mean_estimate = s_psi / R;
            m.bias = s_err / R;
            double ss = 0.0;
            for (const auto* rec : ok) {
                const double dev = rec->reports[j * C + c].psi - rec->truth[j] - m.bias;
                ss += dev * dev;
            }
            m.oracle_se = ok.size() > 1 ? std::sqrt(ss / (R - 1.0)) : std::numeric_limits<double>::quiet_NaN();
            m.bias_se_ratio = score_ratio(m.bias, m.oracle_se);
            std::size_t cov_o = 0;
            for (const auto* rec : ok)
                cov_o += std::abs(rec->reports[j * C + c].psi - rec->truth[j]) <= z * m.oracle_se;
            m.oracle_coverage = static_cast<double>(cov_o) / R;
            m.delta_coverage = static_cast<double>(cov_d) / R;
            m.delta_coverage_conservative = static_cast<double>(cov_c) / R;
            m.mean_se = s_se / R;
            const double oracle_width = 2.0 * z * m.oracle_se;
            m.width_ratio = (s_w / R) / oracle_width;
            m.width_ratio_conservative = (s_wc / R) / oracle_width;
            m.mean_k = s_k / R;
        }
    }
}

struct ExperimentSettings {
    ScenarioSpec spec;
    std::size_t runs = 300;
    std::uint64_t master_seed = 20240601;
    PipelineSettings pipeline;
    unsigned threads = 1;
    bool clamp_test_points = true;
};

namespace detail {

enum Stream : std::uint64_t { kTestPoints = 0, kTrainingData = 1, kFolds = 2, kNuisance = 3 };

inline std::string join_labels(const std::vector<Combination>& cs) {
    std::string s;
    for (const auto& c : cs) s += (s.empty() ? "" : " ") + c.label();
    return s;
}

inline void describe_pipeline(std::vector<std::pair<std::string, std::string>>& cfg, const PipelineSettings& p) {
    const auto& h = p.hal;
    cfg.emplace_back("order", std::to_string(static_cast<int>(h.basis.order)));
    cfg.emplace_back("max_interaction", h.basis.max_interaction ? std::to_string(*h.basis.max_interaction) : "d");
    cfg.emplace_back("knot_cap", h.basis.knot_cap ? std::to_string(*h.basis.knot_cap)
                                                  : "auto(" + std::to_string(h.basis.auto_cap_threshold) + ")");
    cfg.emplace_back("grid_size", std::to_string(h.grid.K));
    cfg.emplace_back("grid_ratio", format_double(h.grid.ratio));
    cfg.emplace_back("solver_tol", format_double(h.solver.tol));
    cfg.emplace_back("solver_max_iter", std::to_string(h.solver.max_iter));
    cfg.emplace_back("folds", std::to_string(h.folds));
    cfg.emplace_back("alpha", format_double(p.alpha));
    cfg.emplace_back("threshold", p.threshold ? format_double(*p.threshold) : "1/log(n)");
    cfg.emplace_back("combinations", join_labels(p.combinations));
}

} // namespace detail

inline Eigen::MatrixXd experiment_test_points(const ScenarioSpec& spec, std::uint64_t master_seed) {
    CounterRng rng(derive_key(master_seed, {detail::kTestPoints}));
    return draw_covariates(spec.d, spec.test_point_count, rng);
}

/// One run of a scenario experiment.
inline RunRecord simulate_run(const ExperimentSettings& s, const Eigen::MatrixXd& test_points, std::size_t run) {
    CounterRng rng(derive_key(s.master_seed, {detail::kTrainingData, run}));
    const Dataset data = draw_dataset(s.spec, rng);
    RunRecord rec;
    const Eigen::MatrixXd pts =
        s.clamp_test_points ? clamp_to_range(test_points, data.X, &rec.extrapolated) : test_points;
    if (!s.clamp_test_points) rec.extrapolated.assign(static_cast<std::size_t>(pts.rows()), false);
    const auto fit = cross_validate(data, s.pipeline.hal, derive_key(s.master_seed, {detail::kFolds, run}));
    const auto res = analyze_fit(fit, data.y, pts, s.pipeline);
    record_selection(rec, res, fit.path.size());
    for (Eigen::Index j = 0; j < pts.rows(); ++j)
        rec.truth.push_back(true_mean(s.spec, Eigen::VectorXd(pts.row(j).transpose())));
    rec.reports = res.reports;
    return rec;
}

inline MonteCarloReport run_experiment(const ExperimentSettings& s) {
    s.spec.validate();
    detail::require(s.runs >= 2, "run_experiment: need at least 2 runs");
    detail::require(!s.pipeline.combinations.empty(), "run_experiment: no estimator/selector combinations");
    MonteCarloReport rep;
    rep.scenario = std::to_string(s.spec.scenario);
    rep.d = s.spec.d;
    rep.n = s.spec.n;
    rep.seed = s.master_seed;
    rep.alpha = s.pipeline.alpha;
    rep.combinations = s.pipeline.combinations;
    rep.test_points = experiment_test_points(s.spec, s.master_seed);
    for (int j = 1; j <= s.spec.d; ++j) rep.names.push_back("x" + std::to_string(j));
    rep.config = {{"estimand", rep.estimand},
                  {"scenario", rep.scenario},
                  {"d", std::to_string(s.spec.d)},
                  {"n", std::to_string(s.spec.n)},
                  {"noise_sd", format_double(s.spec.noise_sd)},
                  {"test_points", std::to_string(s.spec.test_point_count)},
                  {"runs", std::to_string(s.runs)},
                  {"seed", std::to_string(s.master_seed)},
                  {"clamp_test_points", s.clamp_test_points ? "true" : "false"}};
    if (s.spec.scenario == 0) rep.config.emplace_back("flat_value", format_double(s.spec.flat_value));
    detail::describe_pipeline(rep.config, s.pipeline);

    const auto records = execute_runs(s.runs, s.threads,
                                      [&](std::size_t r) { return simulate_run(s, rep.test_points, r); });
    aggregate_runs(rep, records);
    return rep;
}

inline std::string test_point_fingerprint(const MonteCarloReport& rep) {
    return Fingerprint{}.add(rep.test_points).hex();
}

inline std::vector<std::string> report_columns(const std::vector<std::string>& coordinate_names) {
    std::vector<std::string> head{"estimand", "scenario", "d", "n", "point"};
    head.insert(head.end(), coordinate_names.begin(), coordinate_names.end());
    for (const char* h : {"estimator", "selector", "true_value", "mean_estimate", "bias", "oracle_se", "bias_se_ratio",
                          "oracle_coverage", "delta_coverage", "delta_coverage_conservative", "mean_se", "width_ratio",
                          "width_ratio_conservative", "mean_k", "runs_used", "extrapolated_runs"})
        head.emplace_back(h);
    return head;
}

/// Rows of one experiment; coordinates beyond rep.d are left blank up to `coordinate_columns`.
inline void write_report_rows(const MonteCarloReport& rep, std::size_t coordinate_columns, std::ostream& os) {
    for (const auto& m : rep.metrics) {
        std::vector<std::string> f{rep.estimand, rep.scenario, std::to_string(rep.d), std::to_string(rep.n),
                                   std::to_string(m.point + 1)};
        for (std::size_t c = 0; c < coordinate_columns; ++c)
            f.push_back(static_cast<Eigen::Index>(c) < rep.test_points.cols()
                            ? format_double(rep.test_points(static_cast<Eigen::Index>(m.point), static_cast<Eigen::Index>(c)))
                            : std::string{});
        f.emplace_back(to_string(m.combination.estimator));
        f.emplace_back(to_string(m.combination.selector));
        for (double v : {m.true_value, m.mean_estimate, m.bias, m.oracle_se, m.bias_se_ratio, m.oracle_coverage,
                         m.delta_coverage, m.delta_coverage_conservative, m.mean_se, m.width_ratio,
                         m.width_ratio_conservative, m.mean_k})
            f.push_back(format_double(v));
        f.push_back(std::to_string(m.runs_used));
        f.push_back(std::to_string(m.extrapolated_runs));
        os << csv_row(f) << "\n";
    }
}

/// Per-experiment bookkeeping as a single comment line.
inline std::string experiment_comment(const MonteCarloReport& rep) {
    std::string s = "scenario=" + rep.scenario + " d=" + std::to_string(rep.d) + " n=" + std::to_string(rep.n) +
                    " test_point_fingerprint=" + test_point_fingerprint(rep) +
                    " runs_failed=" + std::to_string(rep.runs_failed) +
                    " extrapolated=" + std::to_string(rep.extrapolated) +
                    " monotonicity_violations=" + std::to_string(rep.monotonicity_violations);
    if (rep.estimand == "CATE") s += " truncated_propensities=" + std::to_string(rep.truncated);
    return s;
}

/// Several experiments in one table, preceded by '#' lines: the preamble, then one line per experiment.
inline void write_reports_csv(const std::vector<const MonteCarloReport*>& reps, std::ostream& os,
                              const std::vector<std::string>& preamble) {
    os << "# halinfer " << kVersion << "\n";
    for (const auto& line : preamble) os << "# " << line << "\n";
    const MonteCarloReport* widest = nullptr;
    for (const auto* r : reps) {
        os << "# experiment: " << experiment_comment(*r) << "\n";
        if (!widest || r->names.size() > widest->names.size()) widest = r;
    }
    const auto names = widest ? widest->names : std::vector<std::string>{};
    os << csv_row(report_columns(names)) << "\n";
    for (const auto* r : reps) write_report_rows(*r, names.size(), os);
}

/// One row per (point, combination); '#' lines carry the configuration.
inline void write_report_csv(const MonteCarloReport& rep, std::ostream& os) {
    std::vector<std::string> preamble;
    for (const auto& [k, v] : rep.config) preamble.push_back(k + ": " + v);
    write_reports_csv({&rep}, os, preamble);
}

} // namespace halinfer
