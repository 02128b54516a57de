#pragma once

// Working models extracted from path fits, empirical influence curves of the
// conditional mean at a test point, and the working-model selectors.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "halinfer/basis.hpp"
#include "halinfer/dataset.hpp"
#include "halinfer/error.hpp"
#include "halinfer/solver.hpp"

namespace halinfer {

/// Eigen-decomposition pseudo-inverse of a symmetric PSD matrix; eigenvalues
/// below rel_cutoff * (largest eigenvalue) are treated as zero.
inline Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& G, Eigen::Index* rank = nullptr,
                                      double rel_cutoff = 1e-10) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    if (es.info() != Eigen::Success) throw InvariantError("pseudo_inverse: eigen-decomposition failed");
    const auto& ev = es.eigenvalues();
    const double top = ev.size() > 0 ? std::max(ev.maxCoeff(), 0.0) : 0.0;
    const double cut = rel_cutoff * top;
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(ev.size());
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev(i) > cut && ev(i) > 0.0) {
            inv(i) = 1.0 / ev(i);
            ++r;
        }
    }
    if (rank) *rank = r;
    const auto& V = es.eigenvectors();
    Eigen::MatrixXd out = V * inv.asDiagonal() * V.transpose();
    return 0.5 * (out + out.transpose());
}

namespace detail {

/// (1/n) Phi' Phi summed over distinct rows weighted by their counts, in lexicographic
/// row order. The result depends on the rows only through their empirical distribution,
/// bit for bit: reordering or replicating every row leaves it unchanged.
inline Eigen::MatrixXd empirical_gram(const Eigen::MatrixXd& Phi) {
    const auto n = Phi.rows();
    const auto q = Phi.cols();
    const auto less = [&](Eigen::Index a, Eigen::Index b) {
        for (Eigen::Index c = 0; c < q; ++c)
            if (Phi(a, c) != Phi(b, c)) return Phi(a, c) < Phi(b, c);
        return false;
    };
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(), less);
    std::vector<Eigen::Index> rep;
    std::vector<double> count;
    for (auto i : order) {
        if (rep.empty() || less(rep.back(), i)) {
            rep.push_back(i);
            count.push_back(1.0);
        } else {
            count.back() += 1.0;
        }
    }
    const auto u = static_cast<Eigen::Index>(rep.size());
    Eigen::MatrixXd U(u, q);
    for (Eigen::Index r = 0; r < u; ++r) U.row(r) = Phi.row(rep[static_cast<std::size_t>(r)]);
    const Eigen::Map<const Eigen::VectorXd> w(count.data(), u);
    const Eigen::MatrixXd WU = w.asDiagonal() * U;
    return U.transpose() * WU / static_cast<double>(n);
}

} // namespace detail

/// Intercept plus the bases with nonzero coefficients at path index k.
struct WorkingModel {
    std::size_t k = 0;
    std::vector<Eigen::Index> columns;  ///< design columns, intercept (0) first
    std::vector<BasisSpec> basis;       ///< spec of columns[1..]
    Eigen::VectorXd beta_hal;           ///< penalized coefficients on the retained columns
    Eigen::MatrixXd design_sub;         ///< n x (s_k + 1)
    Eigen::MatrixXd gram;               ///< (1/n) design_sub' design_sub
    Eigen::MatrixXd gram_inv;           ///< pseudo-inverse of gram
    Eigen::Index rank = 0;
    /// Bases were dropped because s_k + 1 exceeded n.
    bool truncated = false;

    [[nodiscard]] std::size_t s_k() const noexcept { return basis.size(); }
    [[nodiscard]] Eigen::Index n() const noexcept { return design_sub.rows(); }

    /// phi_k(x) with the intercept entry first.
    template <class Vec>
    [[nodiscard]] Eigen::VectorXd features(const Vec& x) const {
        Eigen::VectorXd f(static_cast<Eigen::Index>(basis.size()) + 1);
        f(0) = 1.0;
        for (std::size_t c = 0; c < basis.size(); ++c) f(static_cast<Eigen::Index>(c) + 1) = eval_basis(basis[c], x);
        return f;
    }
};

/// Builds the working model of a coefficient vector over `design`.
inline WorkingModel make_working_model(const DesignMatrix& design, const Eigen::VectorXd& beta, std::size_t k = 0) {
    detail::require(beta.size() == design.cols(), "working model: coefficient length differs from design width");
    const auto n = design.rows();
    std::vector<Eigen::Index> nz;
    for (Eigen::Index j = 1; j < beta.size(); ++j)
        if (beta(j) != 0.0) nz.push_back(j);

    WorkingModel m;
    m.k = k;
    if (static_cast<Eigen::Index>(nz.size()) + 1 > n) {
        // keep the n - 1 largest |coefficient| bases, ties by column order
        std::stable_sort(nz.begin(), nz.end(),
                         [&](Eigen::Index a, Eigen::Index b) { return std::abs(beta(a)) > std::abs(beta(b)); });
        nz.resize(static_cast<std::size_t>(std::max<Eigen::Index>(n - 1, 0)));
        std::sort(nz.begin(), nz.end());
        m.truncated = true;
    }
    m.columns.push_back(0);
    m.columns.insert(m.columns.end(), nz.begin(), nz.end());
    const auto q = static_cast<Eigen::Index>(m.columns.size());
    m.beta_hal.resize(q);
    m.design_sub.resize(n, q);
    for (Eigen::Index c = 0; c < q; ++c) {
        const auto j = m.columns[static_cast<std::size_t>(c)];
        m.beta_hal(c) = beta(j);
        m.design_sub.col(c) = design.values.col(j);
        if (c > 0) m.basis.push_back(design.specs[static_cast<std::size_t>(j - 1)]);
    }
    m.gram = detail::empirical_gram(m.design_sub);
    m.gram_inv = pseudo_inverse(m.gram, &m.rank);
    return m;
}

inline WorkingModel extract_working_model(const HalPath& path, std::size_t k, const DesignMatrix& design) {
    detail::require(k < path.size(), "extract_working_model: path index out of range");
    return make_working_model(design, path.fits[k].beta, k);
}

/// D_i = phi(x)' G^+ phi(X_i) (Y_i - beta' phi(X_i)), given phi(x).
inline Eigen::VectorXd influence_curve_at(const WorkingModel& model, const Eigen::VectorXd& y,
                                          const Eigen::VectorXd& beta, const Eigen::VectorXd& phi_x) {
    detail::require(beta.size() == model.design_sub.cols(), "influence_curve: coefficient length differs from model size");
    detail::require(y.size() == model.n(), "influence_curve: outcome length differs from model rows");
    const Eigen::VectorXd a = model.gram_inv * phi_x;
    const Eigen::VectorXd lever = model.design_sub * a;
    const Eigen::VectorXd resid = y - model.design_sub * beta;
    return lever.cwiseProduct(resid);
}

template <class Vec>
Eigen::VectorXd influence_curve(const WorkingModel& model, const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                                const Vec& x_tilde) {
    return influence_curve_at(model, y, beta, model.features(x_tilde));
}

template <class Vec>
Eigen::VectorXd influence_curve(const WorkingModel& model, const Dataset& data, const Eigen::VectorXd& beta,
                                const Vec& x_tilde) {
    return influence_curve(model, data.y, beta, x_tilde);
}

/// P_n D and sqrt(P_n D^2 / n) of an influence curve.
struct ScoreMoments {
    double mean = 0.0;
    double se = 0.0;
};

inline ScoreMoments score_moments(const Eigen::VectorXd& D) {
    const auto n = static_cast<double>(D.size());
    return {D.mean(), std::sqrt(D.squaredNorm() / n / n)};
}

struct ScoreDiagnostics {
    double score_mean = 0.0;
    double se = 0.0;
    double ratio = 0.0;
    double threshold = 0.0;
};

inline double undersmoothing_threshold(Eigen::Index n) { return 1.0 / std::log(static_cast<double>(n)); }

template <class Vec>
ScoreDiagnostics score_diagnostics(const WorkingModel& model, const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                                   const Vec& x_tilde, double se_ref) {
    if (!(se_ref > 0.0)) throw DegenerateError("score_diagnostics: reference standard error must be positive");
    const auto mom = score_moments(influence_curve(model, y, beta, x_tilde));
    return {mom.mean, mom.se, std::abs(mom.mean) / se_ref, undersmoothing_threshold(model.n())};
}

/// |score| / se_ref with the conventions 0/0 = 0 and c/0 = inf.
inline double score_ratio(double score_mean, double se_ref) {
    if (se_ref > 0.0) return std::abs(score_mean) / se_ref;
    return score_mean == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

/// Lazily built working models of one path, shared across test points.
class WorkingModelLadder {
public:
    WorkingModelLadder(const HalPath& path, const DesignMatrix& design, const Eigen::VectorXd& y)
        : path_(path), design_(design), y_(y), models_(path.size()) {
        detail::require(y.size() == design.rows(), "working models: outcome length differs from design rows");
    }

    const WorkingModel& model(std::size_t k) {
        detail::require(k < models_.size(), "working models: path index out of range");
        if (!models_[k]) models_[k] = std::make_unique<WorkingModel>(extract_working_model(path_, k, design_));
        return *models_[k];
    }

    /// P_n D and its SE at x for model k evaluated at its own penalized coefficients.
    template <class Vec>
    ScoreMoments hal_score(std::size_t k, const Vec& x) {
        const auto& m = model(k);
        return score_moments(influence_curve(m, y_, m.beta_hal, x));
    }

    [[nodiscard]] const HalPath& path() const noexcept { return path_; }
    [[nodiscard]] const DesignMatrix& design() const noexcept { return design_; }
    [[nodiscard]] const Eigen::VectorXd& y() const noexcept { return y_; }
    [[nodiscard]] Eigen::Index n() const noexcept { return design_.rows(); }

private:
    const HalPath& path_;
    const DesignMatrix& design_;
    const Eigen::VectorXd& y_;
    std::vector<std::unique_ptr<WorkingModel>> models_;
};

struct LocalSelection {
    std::size_t k = 0;
    bool criterion_unmet = false;
    double se_ref = 0.0;
    double ratio = 0.0;  ///< ratio at the selected k
};

/// First k >= k_cv whose score ratio against the fixed k_cv reference SE is at most `threshold`;
/// K-1 with criterion_unmet when none qualifies.
template <class Vec>
LocalSelection select_local(WorkingModelLadder& ladder, const Vec& x_tilde, double threshold) {
    const auto& path = ladder.path();
    const std::size_t K = path.size();
    LocalSelection sel;
    sel.se_ref = ladder.hal_score(path.k_cv, x_tilde).se;
    for (std::size_t k = path.k_cv; k < K; ++k) {
        const double r = score_ratio(ladder.hal_score(k, x_tilde).mean, sel.se_ref);
        if (r <= threshold) {
            sel.k = k;
            sel.ratio = r;
            return sel;
        }
    }
    sel.k = K - 1;
    sel.criterion_unmet = true;
    sel.ratio = score_ratio(ladder.hal_score(K - 1, x_tilde).mean, sel.se_ref);
    return sel;
}

template <class Vec>
LocalSelection select_local(WorkingModelLadder& ladder, const Vec& x_tilde) {
    return select_local(ladder, x_tilde, undersmoothing_threshold(ladder.n()));
}

template <class Vec>
LocalSelection select_local(const HalPath& path, const Dataset& data, const DesignMatrix& design, const Vec& x_tilde) {
    WorkingModelLadder ladder(path, design, data.y);
    return select_local(ladder, x_tilde);
}

struct GlobalSelection {
    std::size_t k = 0;
    double fraction = 0.0;          ///< satisfied fraction at the selected k
    std::vector<double> fractions;  ///< per k in [k_cv, K-1], indexed from k_cv
};

/// argmax over k >= k_cv of the fraction of test points (rows) meeting the criterion; ties to smallest k.
inline GlobalSelection select_global(WorkingModelLadder& ladder, const Eigen::MatrixXd& test_points, double threshold) {
    detail::require(test_points.rows() >= 1, "select_global: need at least one test point");
    const auto& path = ladder.path();
    const std::size_t K = path.size();
    const auto J = test_points.rows();
    std::vector<double> se_ref(static_cast<std::size_t>(J));
    for (Eigen::Index j = 0; j < J; ++j)
        se_ref[static_cast<std::size_t>(j)] = ladder.hal_score(path.k_cv, Eigen::VectorXd(test_points.row(j).transpose())).se;
    GlobalSelection sel;
    sel.k = path.k_cv;
    sel.fraction = -1.0;
    for (std::size_t k = path.k_cv; k < K; ++k) {
        Eigen::Index hits = 0;
        for (Eigen::Index j = 0; j < J; ++j) {
            const Eigen::VectorXd x = test_points.row(j).transpose();
            hits += score_ratio(ladder.hal_score(k, x).mean, se_ref[static_cast<std::size_t>(j)]) <= threshold;
        }
        const double frac = static_cast<double>(hits) / static_cast<double>(J);
        sel.fractions.push_back(frac);
        if (frac > sel.fraction) {
            sel.fraction = frac;
            sel.k = k;
        }
    }
    return sel;
}

inline GlobalSelection select_global(WorkingModelLadder& ladder, const Eigen::MatrixXd& test_points) {
    return select_global(ladder, test_points, undersmoothing_threshold(ladder.n()));
}

inline GlobalSelection select_global(const HalPath& path, const Dataset& data, const DesignMatrix& design,
                                     const Eigen::MatrixXd& test_points) {
    WorkingModelLadder ladder(path, design, data.y);
    return select_global(ladder, test_points);
}

} // namespace halinfer
