#pragma once

// L1-penalized logistic regression on a HAL design, fitted by iteratively
// reweighted least squares; each step is a weighted lasso solved by the HAL path solver.
// Objective: (1/n) sum [log(1 + e^eta) - y eta] + lambda |b|_1, intercept unpenalized.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "halinfer/basis.hpp"
#include "halinfer/error.hpp"
#include "halinfer/solver.hpp"

namespace halinfer {

struct LogisticSettings {
    CatalogSettings basis{SplineOrder::zero, std::nullopt, std::nullopt, 500};
    int K = 30;
    double ratio = 1e-2;
    int folds = 5;
    double tol = 1e-7;
    int max_outer = 200;
    long max_sweeps = 100000;
};

struct LogisticFit {
    Eigen::VectorXd beta;  ///< beta(0) is the intercept
    double lambda = 0.0;
    double objective = 0.0;
    int outer_iterations = 0;
    long sweeps = 0;
    double max_kkt_violation = 0.0;
};

inline double logistic(double t) noexcept {
    return t >= 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
}

/// log(1 + e^t) without overflow.
inline double softplus(double t) noexcept { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

namespace detail {

class LogisticPathSolver {
public:
    LogisticPathSolver(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const LogisticSettings& s)
        : X_(X), y_(y), s_(s), n_(X.rows()), p_(X.cols()), beta_(Eigen::VectorXd::Zero(X.cols())) {
        require(X.rows() == y.size(), "logistic: design rows differ from outcome length");
        require(p_ >= 1, "logistic: design needs an intercept column");
        for (Eigen::Index i = 0; i < n_; ++i)
            require(y(i) == 0.0 || y(i) == 1.0, "logistic: outcome must be 0/1");
        const double ybar = std::clamp(y.mean(), 1e-6, 1.0 - 1e-6);
        beta_(0) = std::log(ybar / (1.0 - ybar));
    }

    LogisticFit solve(double lambda) {
        lambda_ = lambda;
        sweeps_ = 0;
        SolverSettings inner;
        inner.tol = s_.tol;
        inner.max_iter = s_.max_sweeps;
        Eigen::VectorXd w(n_), z(n_);
        double f_old = objective(beta_);
        int outer = 0;
        for (;; ++outer) {
            if (outer >= s_.max_outer) fail("outer iterations");
            const Eigen::VectorXd eta = X_ * beta_;
            for (Eigen::Index i = 0; i < n_; ++i) {
                const double pi = logistic(eta(i));
                w(i) = std::max(pi * (1.0 - pi), 1e-5);
                z(i) = eta(i) + (y_(i) - pi) / w(i);
            }
            // penalized weighted least squares on the working response
            LassoPathSolver qp(X_, z, inner, &w);
            qp.warm_start(beta_);
            const HalFit step = qp.solve(lambda);
            sweeps_ += step.sweeps;
            const Eigen::VectorXd b_old = beta_;
            beta_ = step.beta;

            // keep the penalized objective monotone
            double f_new = objective(beta_);
            for (int h = 0; h < 30 && f_new > f_old + 1e-15 * std::abs(f_old); ++h) {
                beta_ = 0.5 * (beta_ + b_old);
                f_new = objective(beta_);
            }
            double change = 0.0;
            for (Eigen::Index j = 0; j < p_; ++j) {
                const double v = X_.col(j).cwiseAbs2().dot(w) / static_cast<double>(n_);
                change = std::max(change, std::sqrt(v) * std::abs(beta_(j) - b_old(j)));
            }
            f_old = f_new;
            if (change < s_.tol) break;
        }
        LogisticFit fit;
        fit.beta = beta_;
        fit.lambda = lambda;
        fit.objective = f_old;
        fit.outer_iterations = outer + 1;
        fit.sweeps = sweeps_;
        fit.max_kkt_violation = kkt_violation();
        return fit;
    }

    [[nodiscard]] double objective(const Eigen::VectorXd& b) const {
        const Eigen::VectorXd eta = X_ * b;
        double loss = 0.0;
        for (Eigen::Index i = 0; i < n_; ++i) loss += softplus(eta(i)) - y_(i) * eta(i);
        return loss / static_cast<double>(n_) + lambda_ * b.tail(p_ - 1).cwiseAbs().sum();
    }

    [[nodiscard]] double kkt_violation() const {
        const Eigen::VectorXd eta = X_ * beta_;
        Eigen::VectorXd res(n_);
        for (Eigen::Index i = 0; i < n_; ++i) res(i) = y_(i) - logistic(eta(i));
        const Eigen::VectorXd g = X_.transpose() * res / static_cast<double>(n_);
        double kkt = std::abs(g(0));
        for (Eigen::Index j = 1; j < p_; ++j) {
            const double b = beta_(j);
            kkt = std::max(kkt, b == 0.0 ? std::max(0.0, std::abs(g(j)) - lambda_)
                                         : std::abs(g(j) - lambda_ * (b > 0.0 ? 1.0 : -1.0)));
        }
        return kkt;
    }

private:
    [[noreturn]] void fail(const char* what) const {
        HalFit last;
        last.beta = beta_;
        last.lambda = lambda_;
        throw ConvergenceError("logistic lasso: no convergence within the " + std::string(what) + " limit at lambda " +
                                   std::to_string(lambda_),
                               last, kkt_violation());
    }

    const Eigen::MatrixXd& X_;
    const Eigen::VectorXd& y_;
    LogisticSettings s_;
    Eigen::Index n_, p_;
    Eigen::VectorXd beta_;
    double lambda_ = 0.0;
    long sweeps_ = 0;
};

} // namespace detail

inline std::vector<LogisticFit> fit_logistic_path(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                                  const PenaltyGrid& grid, const LogisticSettings& settings = {}) {
    grid.validate();
    detail::LogisticPathSolver solver(X, y, settings);
    std::vector<LogisticFit> fits;
    for (double lambda : grid.lambdas) fits.push_back(solver.solve(lambda));
    return fits;
}

/// Logistic lasso on a zero-order HAL basis with a cross-validated penalty.
struct PropensityModel {
    BasisCatalog catalog;
    DesignMatrix design;
    PenaltyGrid grid;
    std::vector<LogisticFit> fits;
    std::vector<double> cv_loss;  ///< mean held-out log-loss per grid value
    std::size_t k_cv = 0;

    /// Untruncated P(A = 1 | w) for each row of W.
    [[nodiscard]] Eigen::VectorXd predict(const Eigen::MatrixXd& W) const {
        const Eigen::VectorXd eta = design.evaluate(W) * fits[k_cv].beta;
        return eta.unaryExpr([](double t) { return logistic(t); });
    }
};

namespace detail {

inline bool both_classes(const Eigen::VectorXd& a) {
    return (a.array() == 1.0).any() && (a.array() == 0.0).any();
}

} // namespace detail

inline PropensityModel fit_propensity(const Eigen::MatrixXd& W, const Eigen::VectorXd& A, const LogisticSettings& s,
                                      std::uint64_t seed) {
    detail::require(W.rows() == A.size(), "propensity: covariate rows differ from treatment length");
    detail::require(detail::both_classes(A), "propensity: treatment must take both values 0 and 1");
    detail::require(s.folds >= 2 && W.rows() >= s.folds, "propensity: need at least 2 folds and one row per fold");
    PropensityModel m;
    m.catalog = enumerate_catalog(W, s.basis);
    m.design = build_design(m.catalog, W);
    const double lmax = lambda_max(m.design.values, A);
    m.grid = PenaltyGrid::log_spaced(lmax > 0.0 ? lmax : 1.0, s.K, s.ratio);
    m.fits = fit_logistic_path(m.design.values, A, m.grid, s);

    const auto K = m.grid.size();
    const auto folds = assign_folds(W.rows(), s.folds, seed);
    std::vector<double> loss(K, 0.0);
    for (int f = 0; f < s.folds; ++f) {
        std::vector<Eigen::Index> tr, ho;
        for (Eigen::Index i = 0; i < W.rows(); ++i) (folds[static_cast<std::size_t>(i)] == f ? ho : tr).push_back(i);
        Eigen::MatrixXd Wt(static_cast<Eigen::Index>(tr.size()), W.cols()), Wh(static_cast<Eigen::Index>(ho.size()), W.cols());
        Eigen::VectorXd At(static_cast<Eigen::Index>(tr.size())), Ah(static_cast<Eigen::Index>(ho.size()));
        for (std::size_t i = 0; i < tr.size(); ++i) {
            Wt.row(static_cast<Eigen::Index>(i)) = W.row(tr[i]);
            At(static_cast<Eigen::Index>(i)) = A(tr[i]);
        }
        for (std::size_t i = 0; i < ho.size(); ++i) {
            Wh.row(static_cast<Eigen::Index>(i)) = W.row(ho[i]);
            Ah(static_cast<Eigen::Index>(i)) = A(ho[i]);
        }
        if (!detail::both_classes(At)) throw DegenerateError("propensity: a training fold holds a single treatment class");
        const auto cat = enumerate_catalog(Wt, s.basis);
        const auto design = build_design(cat, Wt);
        const auto fits = fit_logistic_path(design.values, At, m.grid, s);
        const Eigen::MatrixXd Xh = design.evaluate(Wh);
        for (std::size_t k = 0; k < K; ++k) {
            const Eigen::VectorXd eta = Xh * fits[k].beta;
            for (Eigen::Index i = 0; i < eta.size(); ++i) {
                const double p = std::clamp(logistic(eta(i)), 1e-12, 1.0 - 1e-12);
                loss[k] -= Ah(i) * std::log(p) + (1.0 - Ah(i)) * std::log1p(-p);
            }
        }
    }
    for (auto& l : loss) l /= static_cast<double>(W.rows());
    m.cv_loss = loss;
    m.k_cv = argmin_first(loss);
    return m;
}

} // namespace halinfer
