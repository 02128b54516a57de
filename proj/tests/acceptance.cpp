// Runs the acceptance criteria end to end and prints one PASS/FAIL line per criterion.
// Exit status is 0 once every criterion has been evaluated; pass --strict to exit 1 on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "halinfer/cate.hpp"
#include "halinfer/inference.hpp"
#include "halinfer/simlab.hpp"
#include "oracles.hpp"

using namespace halinfer;

namespace {

struct Verdict {
    bool pass = true;
    std::string detail;

    void check(bool ok, const std::string& what) {
        pass = pass && ok;
        if (!detail.empty()) detail += "; ";
        detail += what + (ok ? "" : " [not met]");
    }
};

std::string num(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

std::vector<double> across(const MonteCarloReport& rep, const char* label, double PointMetrics::*field) {
    return rep.across_points(Combination::parse(label), field);
}

std::size_t in_band(const std::vector<double>& v, double lo, double hi) {
    std::size_t c = 0;
    for (double x : v) c += x >= lo && x <= hi;
    return c;
}

std::string experiment_note(const MonteCarloReport& rep, double seconds) {
    return "runs " + std::to_string(rep.runs_ok()) + "/" + std::to_string(rep.runs) + ", " + num(seconds, 3) + " s";
}

template <class Fn>
auto timed(double& seconds, Fn&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    auto out = fn();
    seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

ExperimentSettings scenario(int sc, int d, Eigen::Index n, std::size_t runs) {
    ExperimentSettings s;
    s.spec.scenario = sc;
    s.spec.d = d;
    s.spec.n = n;
    s.runs = runs;
    return s;
}

void save(const std::filesystem::path& dir, const std::string& name, const MonteCarloReport& rep) {
    if (dir.empty()) return;
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / name);
    write_report_csv(rep, out);
}

/// Random lasso problems against the proximal-gradient oracle.
Verdict solver_correctness() {
    Verdict v;
    double worst_rel = 0.0, worst_kkt = 0.0;
    double seconds = 0.0;
    timed(seconds, [&] {
        for (std::uint64_t s = 0; s < 100; ++s) {
            CounterRng rng(derive_key(7001, {s}));
            const auto n = static_cast<Eigen::Index>(10 + rng.below(41));
            const auto p = static_cast<Eigen::Index>(1 + rng.below(10));
            Eigen::MatrixXd design(n, p + 1);
            design.col(0).setOnes();
            for (Eigen::Index i = 0; i < n; ++i)
                for (Eigen::Index j = 1; j <= p; ++j) design(i, j) = rng.normal() * (1.0 + static_cast<double>(j % 3));
            Eigen::VectorXd b = Eigen::VectorXd::Zero(p + 1);
            for (Eigen::Index j = 1; j <= p; j += 2) b(j) = rng.uniform(-2.0, 2.0);
            Eigen::VectorXd y = design * b;
            for (Eigen::Index i = 0; i < n; ++i) y(i) += 0.5 * rng.normal() + 1.0;

            const auto grid = make_grid(design, y, 10, 1e-3);
            const auto fits = fit_path(design, y, grid, SolverSettings{});
            const Eigen::MatrixXd Xp = design.rightCols(p);
            for (const auto& f : fits) {
                const auto ref = oracle::lasso_proximal(Xp, y, f.lambda);
                const double mine = oracle::lasso_objective(Xp, y, f.beta, f.lambda);
                worst_rel = std::max(worst_rel, std::abs(mine - ref.objective) / std::max(1e-300, std::abs(ref.objective)));
                worst_kkt = std::max(worst_kkt, oracle::kkt_violation(design, y, f.beta, f.lambda));
            }
        }
        return 0;
    });
    v.check(worst_rel <= 1e-6, "max relative objective gap " + num(worst_rel, 3));
    v.check(worst_kkt <= 1e-6, "max KKT violation " + num(worst_kkt, 3));
    v.check(seconds < 60.0, "runtime " + num(seconds, 3) + " s");
    return v;
}

/// Relaxed score, targeted-equals-relaxed and the duplication identity on random working models.
Verdict score_identities() {
    Verdict v;
    double worst_score = 0.0, worst_target = 0.0, worst_dup = 0.0;
    std::size_t models = 0;
    for (std::uint64_t s = 0; models < 100; ++s) {
        CounterRng rng(derive_key(7002, {s}));
        ScenarioSpec spec;
        spec.scenario = 1 + static_cast<int>(rng.below(3));
        spec.d = rng.bernoulli(0.5) ? 1 : 3;
        spec.n = static_cast<Eigen::Index>(50 + rng.below(101));
        const auto data = draw_dataset(spec, rng);
        HalSettings hs;
        hs.grid.K = 20;
        hs.folds = 5;
        const auto fit = cross_validate(data, hs, rng());
        const auto k = static_cast<std::size_t>(rng.below(fit.path.size()));
        const auto m = extract_working_model(fit.path, k, fit.design);
        const auto x = draw_covariates(spec.d, 1, rng);
        const Eigen::VectorXd xt = x.row(0).transpose();

        const Eigen::VectorXd relaxed = fit_relaxed(m, data.y);
        worst_score = std::max(worst_score, std::abs(influence_curve(m, data.y, relaxed, xt).mean()));
        if (m.rank == static_cast<Eigen::Index>(m.columns.size())) {
            const double pred = m.features(xt).dot(relaxed);
            worst_target = std::max(worst_target, std::abs(target_onestep(m, data.y, m.beta_hal, xt) - pred));
        }

        DesignMatrix twice = fit.design;
        twice.values.resize(2 * data.n(), fit.design.cols());
        twice.values << fit.design.values, fit.design.values;
        Eigen::VectorXd y2(2 * data.n());
        y2 << data.y, data.y;
        // same retained columns, so a truncated model is not re-selected on 2n rows
        Eigen::VectorXd kept = Eigen::VectorXd::Zero(fit.design.cols());
        for (std::size_t c = 0; c < m.columns.size(); ++c) kept(m.columns[c]) = m.beta_hal(static_cast<Eigen::Index>(c));
        const auto m2 = make_working_model(twice, kept, k);
        const double se1 = delta_se(m, data.y, m.beta_hal, xt);
        const double se2 = delta_se(m2, y2, m2.beta_hal, xt);
        if (se1 > 0.0) worst_dup = std::max(worst_dup, std::abs(se2 * se2 / (se1 * se1) - 0.5));
        ++models;
    }
    v.check(worst_score <= 1e-8, "max |relaxed score| " + num(worst_score, 3));
    v.check(worst_target <= 1e-8, "max |targeted - relaxed| " + num(worst_target, 3));
    v.check(worst_dup <= 1e-12, "max |variance ratio - 1/2| under duplication " + num(worst_dup, 3));
    return v;
}

struct Outcome {
    int id;
    std::string title;
    Verdict verdict;
};

} // namespace

int main(int argc, char** argv) {
    bool strict = false;
    std::filesystem::path out_dir;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--strict") == 0) {
            strict = true;
        } else if (std::strcmp(argv[i], "--out-dir") == 0 && i + 1 < argc) {
            out_dir = argv[++i];
        } else {
            std::cerr << "usage: acceptance [--strict] [--out-dir DIR]\n";
            return 2;
        }
    }

    std::vector<Outcome> results;
    const auto report = [&](int id, const std::string& title, Verdict v) {
        std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << title << " (" << v.detail << ")"
                  << std::endl;
        results.push_back({id, title, std::move(v)});
    };

    try {
        report(1, "solver correctness", solver_correctness());
        report(2, "score identities", score_identities());

        double t_s1 = 0.0, t_s2 = 0.0, t_s13 = 0.0, t_cate = 0.0;
        const auto s1d1 = timed(t_s1, [] { return run_experiment(scenario(1, 1, 500, 300)); });
        save(out_dir, "scenario1_d1_n500.csv", s1d1);
        const auto s2d3 = timed(t_s2, [] { return run_experiment(scenario(2, 3, 1000, 150)); });
        save(out_dir, "scenario2_d3_n1000.csv", s2d3);

        {
            Verdict v;
            for (const char* label : {"cv.relax", "local-u.targeted"}) {
                const auto hits = in_band(across(s1d1, label, &PointMetrics::oracle_coverage), 0.90, 0.99);
                v.check(hits >= 18, std::string(label) + " " + std::to_string(hits) + "/20 points in [0.90, 0.99]");
            }
            v.check(s1d1.runs_failed == 0, experiment_note(s1d1, t_s1));
            report(3, "oracle coverage, scenario 1, d = 1, n = 500", std::move(v));
        }
        {
            Verdict v;
            const double lt = median(across(s1d1, "local-u.targeted", &PointMetrics::bias_se_ratio));
            const double cr = median(across(s1d1, "cv.regular", &PointMetrics::bias_se_ratio));
            v.check(lt <= 0.3 && lt < cr, "scenario 1 d = 1: local-u.targeted " + num(lt) + " vs cv.regular " + num(cr));
            const double l2 = median(across(s2d3, "local-u.targeted", &PointMetrics::bias_se_ratio));
            const double g2 = median(across(s2d3, "global-u.targeted", &PointMetrics::bias_se_ratio));
            const double c2 = median(across(s2d3, "cv.regular", &PointMetrics::bias_se_ratio));
            v.check(l2 <= g2 && g2 <= c2, "scenario 2 d = 3 n = 1000: local-u.targeted " + num(l2) +
                                              " <= global-u.targeted " + num(g2) + " <= cv.regular " + num(c2));
            v.check(s2d3.runs_failed == 0, experiment_note(s2d3, t_s2));
            report(4, "bias / oracle SE ordering", std::move(v));
        }
        {
            Verdict v;
            std::size_t checked = 0, violations = 0;
            for (const auto* rep : {&s1d1, &s2d3}) {
                for (std::size_t r = 0; r < rep->k_cv.size(); ++r)
                    for (std::size_t k : rep->k_local[r]) {
                        ++checked;
                        violations += k < rep->k_cv[r] || k + 1 > rep->K;
                    }
            }
            v.check(violations == 0 && s1d1.monotonicity_violations == 0 && s2d3.monotonicity_violations == 0,
                    std::to_string(violations) + " violations over " + std::to_string(checked) + " (run, point) pairs");
            v.check(s1d1.runs_failed + s2d3.runs_failed == 0,
                    std::to_string(s1d1.runs_failed + s2d3.runs_failed) + " failed runs");
            report(5, "selector monotonicity", std::move(v));
        }

        const auto s1d3 = timed(t_s13, [] { return run_experiment(scenario(1, 3, 1000, 150)); });
        save(out_dir, "scenario1_d3_n1000.csv", s1d3);
        {
            Verdict v;
            const double wr_cv = mean(across(s1d3, "cv.regular", &PointMetrics::width_ratio));
            const double wr_lr = mean(across(s1d3, "local-u.relax", &PointMetrics::width_ratio));
            const double dc = mean(across(s1d3, "local-u.regular", &PointMetrics::delta_coverage_conservative));
            v.check(wr_cv >= 1.0, "cv.regular mean width ratio " + num(wr_cv));
            v.check(wr_lr >= 0.7 && wr_lr <= 1.3, "local-u.relax mean width ratio " + num(wr_lr));
            v.check(dc >= 0.90, "local-u.regular conservative delta coverage " + num(dc));
            v.check(s1d3.runs_failed == 0, experiment_note(s1d3, t_s13));
            report(6, "delta-method intervals, scenario 1, d = 3, n = 1000", std::move(v));
        }

        {
            Verdict v;
            CateExperimentSettings cs;
            const auto cate = timed(t_cate, [&] { return run_cate_experiment(cs); });
            save(out_dir, "cate_n500.csv", cate);
            const auto hits = in_band(across(cate, "local-u.regular", &PointMetrics::oracle_coverage), 0.90, 0.99);
            v.check(hits >= 16, "local-u.regular " + std::to_string(hits) + "/20 points in [0.90, 0.99]");
            v.check(cate.runs_failed == 0, experiment_note(cate, t_cate));

            // double robustness on finite-support laws, both misspecification directions
            double worst_dr = 0.0;
            CounterRng rng(7007);
            for (int rep = 0; rep < 200; ++rep) {
                const double g1 = rng.uniform(0.1, 0.9);
                std::vector<double> ys[2];
                for (auto& s : ys)
                    for (int i = 0, m = 2 + static_cast<int>(rng.below(4)); i < m; ++i) s.push_back(rng.uniform(-3, 3));
                const auto q = [&](int a) {
                    double t = 0.0;
                    for (double y : ys[a]) t += y;
                    return t / static_cast<double>(ys[a].size());
                };
                const auto expect = [&](double q0, double q1, double gn) {
                    double e = 0.0;
                    for (int a = 0; a < 2; ++a)
                        for (double y : ys[a])
                            e += (a ? g1 : 1.0 - g1) / static_cast<double>(ys[a].size()) * pseudo_outcome(q0, q1, gn, a, y);
                    return e;
                };
                const double truth = q(1) - q(0);
                worst_dr = std::max(worst_dr, std::abs(expect(rng.uniform(-5, 5), rng.uniform(-5, 5), g1) - truth));
                worst_dr = std::max(worst_dr, std::abs(expect(q(0), q(1), rng.uniform(0.05, 0.95)) - truth));
            }
            v.check(worst_dr <= 1e-10, "double robustness max error " + num(worst_dr, 3));

            double worst_cdf = 0.0;
            const auto density = [](double t) { return 20.0 * t * std::pow(1.0 - t, 3); };
            for (int i = 0; i <= 100; ++i) {
                const double x = i / 100.0;
                const double ref = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(density, 0.0, x, 0, 0.0);
                worst_cdf = std::max(worst_cdf, std::abs(beta24_cdf(x) - ref));
            }
            v.check(worst_cdf <= 1e-12, "Beta(2, 4) CDF max error " + num(worst_cdf, 3));
            report(7, "treatment-effect pipeline, n = 500", std::move(v));
        }

        {
            Verdict v;
            auto s = scenario(2, 3, 200, 24);
            std::ostringstream one, many;
            s.threads = 1;
            write_report_csv(run_experiment(s), one);
            s.threads = 4;
            write_report_csv(run_experiment(s), many);
            v.check(one.str() == many.str(), "scenario 2 d = 3 CSV, 1 vs 4 threads: " +
                                                 std::string(one.str() == many.str() ? "identical" : "different"));
            CateExperimentSettings cs;
            cs.n = 200;
            cs.runs = 6;
            std::ostringstream c1, c3;
            cs.threads = 1;
            write_report_csv(run_cate_experiment(cs), c1);
            cs.threads = 3;
            write_report_csv(run_cate_experiment(cs), c3);
            v.check(c1.str() == c3.str(), "treatment-effect CSV, 1 vs 3 threads: " +
                                              std::string(c1.str() == c3.str() ? "identical" : "different"));
            report(8, "determinism across thread counts", std::move(v));
        }
    } catch (const std::exception& e) {
        std::cout << "FAIL aborted: " << e.what() << std::endl;
        return 1;
    }

    std::size_t passed = 0;
    for (const auto& r : results) passed += r.verdict.pass;
    std::cout << passed << "/" << results.size() << " criteria passed" << std::endl;
    return strict && passed != results.size() ? 1 : 0;
}
