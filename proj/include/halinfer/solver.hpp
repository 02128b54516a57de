#pragma once

// L1-penalized least squares over a HAL design:
//   minimize (1/2n)||y - b0 - X b||^2 + lambda * ||b||_1   (b0 unpenalized)
// along a decreasing lambda grid with warm starts, plus K-fold cross-validation.
//
// The intercept is profiled out exactly, so the inner problem works with the
// centered Gram matrix of the ever-active columns. Inner solves use feature-sign
// search (Newton steps on a fixed sign pattern, exact line search over zero
// crossings), with cyclic coordinate descent as the fallback when a Newton step
// cannot make progress. A full gradient pass checks KKT on every column between
// inner solves; violators join the active set.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "halinfer/basis.hpp"
#include "halinfer/dataset.hpp"
#include "halinfer/error.hpp"
#include "halinfer/rng.hpp"

namespace halinfer {

enum class GridDerivation { automatic, explicit_values };

/// Strictly decreasing positive penalties, K >= 2.
struct PenaltyGrid {
    std::vector<double> lambdas;
    GridDerivation derivation = GridDerivation::automatic;

    void validate() const {
        detail::require(lambdas.size() >= 2, "penalty grid needs at least 2 values");
        for (std::size_t k = 0; k < lambdas.size(); ++k) {
            detail::require(lambdas[k] > 0.0 && std::isfinite(lambdas[k]), "penalty grid values must be positive");
            if (k > 0) detail::require(lambdas[k] < lambdas[k - 1], "penalty grid must be strictly decreasing");
        }
    }

    [[nodiscard]] std::size_t size() const noexcept { return lambdas.size(); }

    static PenaltyGrid from_values(std::vector<double> values) {
        PenaltyGrid g{std::move(values), GridDerivation::explicit_values};
        g.validate();
        return g;
    }

    /// lambda_max * ratio^(k/(K-1)), k = 0..K-1.
    static PenaltyGrid log_spaced(double lambda_max, int K, double ratio) {
        detail::require(K >= 2, "penalty grid size K must be at least 2");
        detail::require(ratio > 0.0 && ratio < 1.0, "penalty grid ratio must lie in (0, 1)");
        PenaltyGrid g;
        g.lambdas.resize(static_cast<std::size_t>(K));
        const double step = std::log(ratio) / static_cast<double>(K - 1);
        g.lambdas[0] = lambda_max;
        for (int k = 1; k < K; ++k) g.lambdas[static_cast<std::size_t>(k)] = lambda_max * std::exp(step * k);
        g.validate();
        return g;
    }
};

/// Smallest penalty at which every penalized coefficient is zero.
inline double lambda_max(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    const auto n = static_cast<double>(X.rows());
    if (X.cols() <= 1 || y.size() == 0 || y.maxCoeff() == y.minCoeff()) return 0.0;
    const Eigen::VectorXd yc = y.array() - y.mean();
    return ((X.rightCols(X.cols() - 1).transpose() * yc) / n).cwiseAbs().maxCoeff();
}

inline PenaltyGrid make_grid(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int K, double ratio) {
    detail::require(X.rows() == y.size(), "make_grid: design rows differ from outcome length");
    detail::require(K >= 2, "make_grid: K must be at least 2");
    detail::require(ratio > 0.0 && ratio < 1.0, "make_grid: ratio must lie in (0, 1)");
    const double lmax = lambda_max(X, y);
    if (!(lmax > 0.0)) throw DegenerateError("make_grid: outcome is constant or uncorrelated with every column");
    return PenaltyGrid::log_spaced(lmax, K, ratio);
}

inline PenaltyGrid make_grid(const DesignMatrix& design, const Eigen::VectorXd& y, int K, double ratio) {
    return make_grid(design.values, y, K, ratio);
}

struct SolverSettings {
    /// Convergence: max standardized coefficient update below tol * sd(y).
    double tol = 1e-7;
    /// Coordinate-descent sweeps allowed per penalty value.
    long max_iter = 100000;
    /// When set, the penalized objective after every sweep is appended here.
    std::vector<double>* objective_trace = nullptr;
};

struct HalFit {
    Eigen::VectorXd beta;  ///< position 0 is the unpenalized intercept
    double lambda = 0.0;
    double l1_norm = 0.0;  ///< sum |beta_j| over penalized positions
    double objective = 0.0;
    long sweeps = 0;
    double max_kkt_violation = 0.0;

    [[nodiscard]] std::size_t nonzero_count() const {
        std::size_t c = 0;
        for (Eigen::Index j = 1; j < beta.size(); ++j) c += beta(j) != 0.0;
        return c;
    }
};

class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, HalFit last, double kkt)
        : Error(what), last_iterate(std::move(last)), max_kkt_violation(kkt) {}
    HalFit last_iterate;
    double max_kkt_violation;
};

namespace detail {

inline double soft_threshold(double z, double t) noexcept {
    if (z > t) return z - t;
    if (z < -t) return z + t;
    return 0.0;
}

/// Upper-triangular R with R'R equal to a Gram matrix restricted to `order`,
/// maintained under column appends and deletions.
class GramFactor {
public:
    std::vector<Eigen::Index> order;

    [[nodiscard]] std::size_t size() const noexcept { return order.size(); }
    void clear() noexcept { order.clear(); }

    /// `cross(i)` = G(order[i], pos), `diag` = G(pos, pos). A numerically dependent column gets its
    /// pivot floored, so the factor stays positive definite and serves as a preconditioner.
    bool append(Eigen::Index pos, const Eigen::VectorXd& cross, double diag) {
        const auto s = static_cast<Eigen::Index>(order.size());
        if (R_.rows() < s + 1) R_.conservativeResize(std::max<Eigen::Index>(16, 2 * (s + 1)), std::max<Eigen::Index>(16, 2 * (s + 1)));
        Eigen::VectorXd r = cross;
        if (s > 0) R_.topLeftCorner(s, s).triangularView<Eigen::Upper>().transpose().solveInPlace(r);
        if (!(diag > 0.0) || !r.allFinite()) return false;
        const double rho2 = std::max(diag - r.squaredNorm(), 1e-10 * diag);
        R_.col(s).head(s) = r;
        R_.row(s).head(s).setZero();
        R_(s, s) = std::sqrt(rho2);
        order.push_back(pos);
        return true;
    }

    /// Drop the i-th column and restore triangular form with Givens rotations.
    void remove(std::size_t i) {
        const auto s = static_cast<Eigen::Index>(order.size());
        const auto first = static_cast<Eigen::Index>(i);
        for (Eigen::Index c = first; c + 1 < s; ++c) R_.col(c).head(s) = R_.col(c + 1).head(s);
        for (Eigen::Index k = first; k + 1 < s; ++k) {
            const double a = R_(k, k), b = R_(k + 1, k);
            const double r = std::hypot(a, b);
            if (r == 0.0) continue;
            const double c = a / r, sn = b / r;
            for (Eigen::Index col = k; col + 1 < s; ++col) {
                const double x = R_(k, col), y = R_(k + 1, col);
                R_(k, col) = c * x + sn * y;
                R_(k + 1, col) = -sn * x + c * y;
            }
            R_(k + 1, k) = 0.0;
        }
        order.erase(order.begin() + static_cast<std::ptrdiff_t>(i));
    }

    /// x with R'R x = h.
    [[nodiscard]] Eigen::VectorXd solve(const Eigen::VectorXd& h) const {
        const auto s = static_cast<Eigen::Index>(order.size());
        Eigen::VectorXd x = h;
        R_.topLeftCorner(s, s).triangularView<Eigen::Upper>().transpose().solveInPlace(x);
        R_.topLeftCorner(s, s).triangularView<Eigen::Upper>().solveInPlace(x);
        return x;
    }

private:
    Eigen::MatrixXd R_;
};

class LassoPathSolver {
public:
    /// With `weights`, minimizes (1/2n) sum w_i (y_i - b0 - x_i'b)^2 + lambda |b|_1 instead.
    LassoPathSolver(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const SolverSettings& settings,
                    const Eigen::VectorXd* weights = nullptr)
        : X_(X), settings_(settings), n_(X.rows()), p_(X.cols()) {
        require(X.rows() == y.size(), "fit_path: design rows differ from outcome length");
        require(settings.tol > 0.0, "fit_path: tol must be positive");
        require(settings.max_iter > 0, "fit_path: max_iter must be positive");
        require(p_ >= 1, "fit_path: design needs an intercept column");
        const double nd = static_cast<double>(n_);
        if (weights) {
            require(weights->size() == n_ && (weights->array() >= 0.0).all() && weights->sum() > 0.0,
                    "fit_path: weights must be non-negative, not all zero, one per row");
            w_ = *weights;
        } else {
            w_ = Eigen::VectorXd::Ones(n_);
        }
        const double wsum = w_.sum();
        const double wbar = wsum / nd;
        // an exactly constant outcome stays exactly centred (the mean can be off by rounding)
        const bool flat = y.size() > 0 && y.maxCoeff() == y.minCoeff();
        ybar_ = flat ? y(0) : w_.dot(y) / wsum;
        y_ = y;
        yc_ = y.array() - ybar_;
        mean_ = X.transpose() * w_ / wsum;
        var_.resize(p_);
        for (Eigen::Index j = 0; j < p_; ++j)
            var_(j) = std::max(0.0, X.col(j).cwiseAbs2().dot(w_) / nd - wbar * mean_(j) * mean_(j));
        var_(0) = 0.0;
        gy_ = X.transpose() * w_.cwiseProduct(yc_) / nd;
        const double sd = std::sqrt(yc_.cwiseAbs2().dot(w_) / nd);
        scale_ = sd > 0.0 ? sd : 1.0;
        wbar_ = wbar;
        beta_ = Eigen::VectorXd::Zero(p_);
        pos_.assign(static_cast<std::size_t>(p_), -1);
    }

    /// Start the next solve from these penalized coefficients (entry 0 is ignored).
    void warm_start(const Eigen::VectorXd& beta) {
        require(beta.size() == p_, "warm_start: coefficient length differs from design columns");
        for (Eigen::Index j = 1; j < p_; ++j) {
            if (beta(j) == 0.0 || var_(j) <= 0.0) continue;
            if (pos_[static_cast<std::size_t>(j)] < 0) add_active({j});
            beta_(j) = beta(j);
        }
    }

    HalFit solve(double lambda) {
        lambda_ = lambda;
        sweeps_ = 0;
        Eigen::VectorXd g = full_gradient();
        while (true) {
            std::vector<Eigen::Index> viol;
            for (Eigen::Index j = 1; j < p_; ++j)
                if (pos_[static_cast<std::size_t>(j)] < 0 && var_(j) > 0.0 && std::abs(g(j)) > lambda * (1.0 + 1e-12))
                    viol.push_back(j);
            if (viol.empty() && active_converged(g)) break;
            add_active(viol);
            for (std::size_t a = 0; a < active_.size(); ++a) gA_(static_cast<Eigen::Index>(a)) = g(active_[a]);
            run_inner();
            g = full_gradient();
        }
        return assemble(g);
    }

private:
    Eigen::VectorXd full_gradient() const {
        const Eigen::VectorXd r = residual();
        return X_.transpose() * w_.cwiseProduct(r) / static_cast<double>(n_);
    }

    /// y - b0 - X b with b0 profiled out.
    Eigen::VectorXd residual() const {
        Eigen::VectorXd r = yc_;
        double shift = 0.0;
        for (auto j : active_) {
            const double b = beta_(j);
            if (b == 0.0) continue;
            r.noalias() -= b * X_.col(j);
            shift += b * mean_(j);
        }
        r.array() += shift;
        return r;
    }

    double stat_update(Eigen::Index j, double gj) const {
        const double v = var_(j);
        const double nb = soft_threshold(gj + v * beta_(j), lambda_) / v;
        return std::sqrt(v) * std::abs(nb - beta_(j));
    }

    bool active_converged(const Eigen::VectorXd& g) const {
        const double thr = settings_.tol * scale_;
        for (auto j : active_)
            if (stat_update(j, g(j)) >= thr) return false;
        return true;
    }

    /// Extend the active set and its centered Gram block with one matrix product.
    void add_active(const std::vector<Eigen::Index>& js) {
        const auto m = static_cast<Eigen::Index>(active_.size());
        const auto q = static_cast<Eigen::Index>(js.size());
        if (q == 0) return;
        if (m + q > G_.rows()) {
            const Eigen::Index cap = std::max<Eigen::Index>(16, 2 * (m + q));
            Eigen::MatrixXd G2(cap, cap);
            G2.topLeftCorner(m, m) = G_.topLeftCorner(m, m);
            G_.swap(G2);
            Eigen::VectorXd g2(cap);
            g2.head(m) = gA_.head(m);
            gA_.swap(g2);
            XA_.conservativeResize(n_, cap);
        }
        Eigen::MatrixXd Wn(n_, q);
        Eigen::VectorXd mn(q);
        for (Eigen::Index i = 0; i < q; ++i) {
            const auto j = js[static_cast<std::size_t>(i)];
            XA_.col(m + i) = X_.col(j);
            Wn.col(i) = X_.col(j).cwiseProduct(w_);
            mn(i) = mean_(j);
        }
        Eigen::VectorXd ma(m + q);
        for (Eigen::Index a = 0; a < m; ++a) ma(a) = mean_(active_[static_cast<std::size_t>(a)]);
        ma.tail(q) = mn;
        Eigen::MatrixXd B(q, m + q);
        B.noalias() = Wn.transpose() * XA_.leftCols(m + q);
        B /= static_cast<double>(n_);
        B.noalias() -= wbar_ * mn * ma.transpose();
        G_.block(m, 0, q, m + q) = B;
        G_.block(0, m, m, q) = B.leftCols(m).transpose();
        for (Eigen::Index i = 0; i < q; ++i) {
            const auto j = js[static_cast<std::size_t>(i)];
            G_(m + i, m + i) = var_(j);
            gA_(m + i) = 0.0;
            pos_[static_cast<std::size_t>(j)] = m + i;
            active_.push_back(j);
        }
    }

    double objective_now() const {
        const Eigen::VectorXd r = residual();
        double l1 = 0.0;
        for (auto j : active_) l1 += std::abs(beta_(j));
        return 0.5 * r.cwiseAbs2().dot(w_) / static_cast<double>(n_) + lambda_ * l1;
    }

    void record_objective() {
        if (settings_.objective_trace) settings_.objective_trace->push_back(objective_now());
    }

    void refresh_active_gradient() {
        const auto m = static_cast<Eigen::Index>(active_.size());
        for (Eigen::Index a = 0; a < m; ++a) gA_(a) = gy_(active_[static_cast<std::size_t>(a)]);
        for (Eigen::Index k = 0; k < m; ++k) {
            const double b = beta_(active_[static_cast<std::size_t>(k)]);
            if (b != 0.0) gA_.head(m).noalias() -= b * G_.col(k).head(m);
        }
    }

    bool inner_converged() const {
        const double thr = settings_.tol * scale_;
        for (std::size_t a = 0; a < active_.size(); ++a)
            if (stat_update(active_[a], gA_(static_cast<Eigen::Index>(a))) >= thr) return false;
        return true;
    }

    /// One cyclic sweep over the active set. Returns the largest standardized update.
    double cd_sweep() {
        const auto m = static_cast<Eigen::Index>(active_.size());
        double maxd = 0.0;
        for (Eigen::Index a = 0; a < m; ++a) {
            const auto j = active_[static_cast<std::size_t>(a)];
            const double v = G_(a, a);
            const double b = beta_(j);
            const double nb = soft_threshold(gA_(a) + v * b, lambda_) / v;
            if (nb == b) continue;
            const double delta = nb - b;
            beta_(j) = nb;
            gA_.head(m).noalias() -= delta * G_.col(a).head(m);
            maxd = std::max(maxd, std::sqrt(v) * std::abs(delta));
        }
        ++sweeps_;
        record_objective();
        return maxd;
    }

    void run_inner() {
        const double thr = settings_.tol * scale_;
        while (true) {
            if (feature_sign(1 << 20)) return;
            for (int i = 0; i < 2; ++i) {
                if (sweeps_ >= settings_.max_iter) fail();
                if (cd_sweep() < thr) return;
            }
        }
    }

    /// Descent direction -M^{-1} h with M = Gs, or Gs plus a small ridge when Gs is
    /// numerically singular. `step` is the minimizer of the quadratic model along it.
    static bool newton_direction(const Eigen::MatrixXd& Gs, const Eigen::VectorXd& h, Eigen::VectorXd& dir,
                                 double& quad, double& step) {
        const double scale = Gs.diagonal().maxCoeff();
        if (!(scale > 0.0)) return false;
        double ridge = 0.0;
        for (int attempt = 0; attempt < 8; ++attempt, ridge = ridge == 0.0 ? 1e-12 * scale : ridge * 100.0) {
            Eigen::MatrixXd M = Gs;
            M.diagonal().array() += ridge;
            Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
            if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-13) continue;
            dir = -ldlt.solve(h);
            if (!dir.allFinite()) continue;
            const double slope = h.dot(dir);
            quad = dir.dot(Gs * dir);
            if (!(slope < 0.0 && quad > 0.0)) continue;
            step = -slope / quad;
            return true;
        }
        return false;
    }

    /// Orthant data for the coordinates in S: current values, active gradient and h = lambda theta - g.
    void orthant_data(const std::vector<Eigen::Index>& S, Eigen::VectorXd& b, Eigen::VectorXd& gs,
                      Eigen::VectorXd& h) const {
        const auto s = static_cast<Eigen::Index>(S.size());
        b.resize(s);
        gs.resize(s);
        h.resize(s);
        for (Eigen::Index i = 0; i < s; ++i) {
            const auto ai = S[static_cast<std::size_t>(i)];
            b(i) = beta_(active_[static_cast<std::size_t>(ai)]);
            gs(i) = gA_(ai);
            const double theta = b(i) != 0.0 ? (b(i) > 0.0 ? 1.0 : -1.0) : (gs(i) > 0.0 ? 1.0 : -1.0);
            h(i) = lambda_ * theta - gs(i);
        }
    }

    [[nodiscard]] double gram_form(const std::vector<Eigen::Index>& S, const Eigen::VectorXd& v) const {
        double q = 0.0;
        for (std::size_t i = 0; i < S.size(); ++i) {
            double row = 0.0;
            for (std::size_t k = 0; k < S.size(); ++k) row += G_(S[i], S[k]) * v(static_cast<Eigen::Index>(k));
            q += v(static_cast<Eigen::Index>(i)) * row;
        }
        return q;
    }

    bool factor_append(Eigen::Index a) {
        Eigen::VectorXd cross(static_cast<Eigen::Index>(factor_.size()));
        for (std::size_t i = 0; i < factor_.size(); ++i) cross(static_cast<Eigen::Index>(i)) = G_(factor_.order[i], a);
        return factor_.append(a, cross, G_(a, a));
    }

    /// Newton direction from the maintained factor. On success S holds the factor order
    /// (support, then the entering coordinate if it was kept).
    bool factored_direction(std::vector<Eigen::Index>& S, Eigen::Index& entering, Eigen::VectorXd& dir,
                            Eigen::VectorXd& b, Eigen::VectorXd& gs, double& quad, double& step) {
        for (std::size_t i = factor_.size(); i-- > 0;)
            if (beta_(active_[static_cast<std::size_t>(factor_.order[i])]) == 0.0) factor_.remove(i);
        std::vector<char> in(active_.size(), 0);
        for (auto a : factor_.order) in[static_cast<std::size_t>(a)] = 1;
        for (auto a : S) {
            if (in[static_cast<std::size_t>(a)]) continue;
            if (!factor_append(a)) {
                factor_.clear();
                return false;
            }
        }
        if (entering >= 0 && !factor_append(entering)) {
            factor_.clear();
            return false;
        }
        for (int attempt = 0; attempt < 2; ++attempt) {
            S = factor_.order;
            if (S.empty()) return false;
            Eigen::VectorXd h;
            orthant_data(S, b, gs, h);
            dir = -factor_.solve(h);
            if (!dir.allFinite()) break;
            const auto s = static_cast<Eigen::Index>(S.size());
            if (entering >= 0 && dir(s - 1) * gs(s - 1) <= 0.0) {
                factor_.remove(factor_.size() - 1);
                entering = -1;
                continue;
            }
            const double slope = h.dot(dir);
            quad = gram_form(S, dir);
            if (!(slope < 0.0 && quad > 0.0)) break;
            step = -slope / quad;
            return true;
        }
        factor_.clear();
        return false;
    }

    /// Dense fallback with a ridge when the restricted Gram is numerically singular.
    bool dense_direction(std::vector<Eigen::Index>& S, Eigen::Index& entering, Eigen::VectorXd& dir,
                         Eigen::VectorXd& b, Eigen::VectorXd& gs, double& quad, double& step) {
        S.clear();
        for (std::size_t a = 0; a < active_.size(); ++a)
            if (beta_(active_[a]) != 0.0) S.push_back(static_cast<Eigen::Index>(a));
        if (entering >= 0) S.push_back(entering);
        for (int attempt = 0; attempt < 2; ++attempt) {
            const auto s = static_cast<Eigen::Index>(S.size());
            if (s == 0) return false;
            Eigen::MatrixXd Gs(s, s);
            for (Eigen::Index i = 0; i < s; ++i)
                for (Eigen::Index k = 0; k < s; ++k) Gs(i, k) = G_(S[static_cast<std::size_t>(i)], S[static_cast<std::size_t>(k)]);
            Eigen::VectorXd h;
            orthant_data(S, b, gs, h);
            if (!newton_direction(Gs, h, dir, quad, step)) return false;
            // an entering coefficient must leave zero in the direction of its sign
            if (entering >= 0 && dir(s - 1) * gs(s - 1) <= 0.0) {
                S.pop_back();
                entering = -1;
                continue;
            }
            return true;
        }
        return false;
    }

    /// Feature-sign search on the active set: Newton steps on the current sign
    /// pattern with an exact line search over the segment's zero crossings.
    /// Returns true once the active-set KKT conditions hold.
    bool feature_sign(int budget) {
        const auto m = static_cast<Eigen::Index>(active_.size());
        const double thr = settings_.tol * scale_;
        for (int it = 0; it < budget; ++it) {
            if (sweeps_ >= settings_.max_iter) fail();
            refresh_active_gradient();
            if (inner_converged()) return true;

            // support plus the single largest KKT violator among zero coefficients
            std::vector<Eigen::Index> S;
            Eigen::Index entering = -1;
            double worst = 0.0;
            for (Eigen::Index a = 0; a < m; ++a) {
                const auto j = active_[static_cast<std::size_t>(a)];
                if (beta_(j) != 0.0) {
                    S.push_back(a);
                    continue;
                }
                const double excess = std::abs(gA_(a)) - lambda_ - thr * std::sqrt(G_(a, a));
                if (excess > worst) {
                    worst = excess;
                    entering = a;
                }
            }
            Eigen::VectorXd dir, b, gs;
            double quad = 0.0, step = 1.0;
            Eigen::Index s = 0;
            if (!factored_direction(S, entering, dir, b, gs, quad, step) &&
                !dense_direction(S, entering, dir, b, gs, quad, step))
                return false;
            s = static_cast<Eigen::Index>(S.size());

            // f(t) - f(0) = t lin + t^2/2 quad + lambda (|b + t dir|_1 - |b|_1), lin = -gs.dir
            const double lin = -gs.dot(dir);
            const double l1_0 = b.cwiseAbs().sum();
            auto change = [&](double t) {
                return t * lin + 0.5 * t * t * quad + lambda_ * ((b + t * dir).cwiseAbs().sum() - l1_0);
            };
            double best_t = step;
            double best = change(best_t);
            Eigen::Index crossing = -1;
            for (Eigen::Index i = 0; i < s; ++i) {
                if (b(i) == 0.0 || dir(i) == 0.0) continue;
                const double t = -b(i) / dir(i);
                if (!(t > 0.0 && t < step)) continue;
                const double c = change(t);
                if (c < best) {
                    best = c;
                    best_t = t;
                    crossing = i;
                }
            }
            if (!(best < 0.0)) return false;
            for (Eigen::Index i = 0; i < s; ++i) {
                const auto j = active_[static_cast<std::size_t>(S[static_cast<std::size_t>(i)])];
                beta_(j) = i == crossing ? 0.0 : b(i) + best_t * dir(i);
            }
            ++sweeps_;
            record_objective();
        }
        refresh_active_gradient();
        return false;
    }

    HalFit assemble(const Eigen::VectorXd& g) const {
        HalFit fit;
        fit.lambda = lambda_;
        fit.sweeps = sweeps_;
        fit.beta = beta_;
        double shift = 0.0;
        for (auto j : active_) shift += beta_(j) * mean_(j);
        fit.beta(0) = ybar_ - shift;
        fit.l1_norm = fit.beta.tail(p_ - 1).cwiseAbs().sum();
        const Eigen::VectorXd r = y_ - X_ * fit.beta;
        fit.objective = 0.5 * r.cwiseAbs2().dot(w_) / static_cast<double>(n_) + lambda_ * fit.l1_norm;
        double kkt = 0.0;
        for (Eigen::Index j = 1; j < p_; ++j) {
            const double b = fit.beta(j);
            kkt = std::max(kkt, b == 0.0 ? std::max(0.0, std::abs(g(j)) - lambda_)
                                         : std::abs(g(j) - lambda_ * (b > 0.0 ? 1.0 : -1.0)));
        }
        fit.max_kkt_violation = kkt;
        return fit;
    }

    [[noreturn]] void fail() const {
        const Eigen::VectorXd g = full_gradient();
        HalFit last = assemble(g);
        throw ConvergenceError("fit_path: no convergence within " + std::to_string(settings_.max_iter) +
                                   " sweeps at lambda " + std::to_string(lambda_),
                               last, last.max_kkt_violation);
    }

    const Eigen::MatrixXd& X_;
    SolverSettings settings_;
    Eigen::Index n_, p_;
    double ybar_ = 0.0, scale_ = 1.0, lambda_ = 0.0, wbar_ = 1.0;
    Eigen::VectorXd y_, yc_, w_, mean_, var_, gy_, beta_;
    std::vector<Eigen::Index> active_;
    std::vector<Eigen::Index> pos_;
    Eigen::MatrixXd G_;
    Eigen::VectorXd gA_;
    GramFactor factor_;
    Eigen::MatrixXd XA_;  ///< active columns, contiguous
    long sweeps_ = 0;
};

} // namespace detail

/// One fit per grid value, warm-started along the grid.
inline std::vector<HalFit> fit_path(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const PenaltyGrid& grid,
                                    const SolverSettings& settings = {}) {
    grid.validate();
    detail::LassoPathSolver solver(X, y, settings);
    std::vector<HalFit> fits;
    fits.reserve(grid.size());
    for (double lambda : grid.lambdas) fits.push_back(solver.solve(lambda));
    return fits;
}

inline std::vector<HalFit> fit_path(const DesignMatrix& design, const Eigen::VectorXd& y, const PenaltyGrid& grid,
                                    const SolverSettings& settings = {}) {
    return fit_path(design.values, y, grid, settings);
}

struct GridSettings {
    int K = 50;
    double ratio = 1e-4;
};

/// Everything needed to go from data to a cross-validated path.
struct HalSettings {
    CatalogSettings basis;
    GridSettings grid;
    SolverSettings solver;
    int folds = 10;
};

struct HalPath {
    PenaltyGrid grid;
    std::vector<HalFit> fits;     ///< ordered by decreasing lambda
    std::vector<double> cv_mse;   ///< pooled held-out mean squared error per fit
    std::size_t k_cv = 0;

    [[nodiscard]] std::size_t size() const noexcept { return fits.size(); }
};

/// Full-data catalog, design and path, with CV losses from per-fold refits.
struct CrossValidatedHal {
    BasisCatalog catalog;
    DesignMatrix design;
    HalPath path;
    /// True when y was constant and a nominal grid was used.
    bool degenerate_outcome = false;
};

/// Fold label of every row: a seeded permutation dealt round-robin.
inline std::vector<int> assign_folds(Eigen::Index n, int folds, std::uint64_t seed) {
    CounterRng rng(derive_key(seed, {0x666f6c64ull}));
    const auto perm = random_permutation(static_cast<std::size_t>(n), rng);
    std::vector<int> label(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < perm.size(); ++i) label[perm[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));
    return label;
}

/// Index of the smallest value; ties go to the earliest index.
inline std::size_t argmin_first(const std::vector<double>& v) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < v.size(); ++k)
        if (v[k] < v[best]) best = k;
    return best;
}

inline CrossValidatedHal cross_validate(const Dataset& data, const HalSettings& settings, std::uint64_t seed) {
    data.validate();
    const auto n = data.n();
    detail::require(settings.folds >= 2, "cross_validate: folds must be at least 2");
    detail::require(n >= settings.folds, "cross_validate: fewer observations than folds");

    CrossValidatedHal out;
    out.catalog = enumerate_catalog(data.X, settings.basis);
    out.design = build_design(out.catalog, data.X);
    try {
        out.path.grid = make_grid(out.design, data.y, settings.grid.K, settings.grid.ratio);
    } catch (const DegenerateError&) {
        out.path.grid = PenaltyGrid::log_spaced(1.0, settings.grid.K, settings.grid.ratio);
        out.degenerate_outcome = true;
    }

    const auto label = assign_folds(n, settings.folds, seed);
    const std::size_t K = out.path.grid.size();
    std::vector<double> sse(K, 0.0);
    for (int f = 0; f < settings.folds; ++f) {
        std::vector<Eigen::Index> train, hold;
        for (Eigen::Index i = 0; i < n; ++i) (label[static_cast<std::size_t>(i)] == f ? hold : train).push_back(i);
        detail::require(train.size() >= 2, "cross_validate: a training split has fewer than 2 observations");
        const Dataset tr = data.rows(train);
        const Dataset ho = data.rows(hold);
        const auto cat = enumerate_catalog(tr.X, settings.basis);
        const auto design = build_design(cat, tr.X);
        const auto fits = fit_path(design, tr.y, out.path.grid, settings.solver);
        const Eigen::MatrixXd Xh = design.evaluate(ho.X);
        for (std::size_t k = 0; k < K; ++k) sse[k] += (ho.y - Xh * fits[k].beta).squaredNorm();
    }
    out.path.cv_mse.resize(K);
    for (std::size_t k = 0; k < K; ++k) out.path.cv_mse[k] = sse[k] / static_cast<double>(n);
    out.path.k_cv = argmin_first(out.path.cv_mse);
    out.path.fits = fit_path(out.design, data.y, out.path.grid, settings.solver);
    return out;
}

} // namespace halinfer
