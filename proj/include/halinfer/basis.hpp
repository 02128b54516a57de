#pragma once

// Tensor-product zero/first-order spline bases with knots at observed data
// points, and the (column-deduplicated) design matrices built from them.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "halinfer/dataset.hpp"
#include "halinfer/error.hpp"

namespace halinfer {

enum class SplineOrder : int { zero = 0, first = 1 };

inline SplineOrder spline_order_from_int(int m) {
    detail::require(m == 0 || m == 1, "spline order must be 0 or 1, got " + std::to_string(m));
    return static_cast<SplineOrder>(m);
}

/// One basis function: prod_{j in subset} phi(x_j - knot_j) with phi the order-m spline.
/// Covariate indices are 0-based.
struct BasisSpec {
    std::vector<int> subset;
    std::vector<double> knot;
    SplineOrder order = SplineOrder::first;

    friend bool operator==(const BasisSpec&, const BasisSpec&) = default;

    void validate() const {
        detail::require(!subset.empty(), "basis spec: empty subset");
        detail::require(subset.size() == knot.size(), "basis spec: knot length differs from subset length");
        detail::require(subset.front() >= 0, "basis spec: negative covariate index");
        for (std::size_t i = 1; i < subset.size(); ++i)
            detail::require(subset[i - 1] < subset[i], "basis spec: subset must be strictly increasing");
    }

    [[nodiscard]] int max_index() const noexcept { return subset.back(); }
};

/// Evaluates the basis at x. `x` needs size() and operator[] (std::vector, std::span, Eigen vectors).
template <class Vec>
double eval_basis(const BasisSpec& spec, const Vec& x) {
    if (static_cast<long>(x.size()) <= spec.max_index())
        throw InputError("eval_basis: point has dimension " + std::to_string(x.size()) +
                         " but basis uses covariate " + std::to_string(spec.max_index() + 1));
    double v = 1.0;
    if (spec.order == SplineOrder::zero) {
        for (std::size_t j = 0; j < spec.subset.size(); ++j)
            if (!(x[spec.subset[j]] >= spec.knot[j])) return 0.0;
        return 1.0;
    }
    for (std::size_t j = 0; j < spec.subset.size(); ++j) {
        const double xj = x[spec.subset[j]];
        if (!(xj >= spec.knot[j])) return 0.0;
        v *= xj - spec.knot[j];
    }
    return v;
}

/// Sentinel for "no knot thinning".
inline constexpr std::size_t kNoKnotCap = std::numeric_limits<std::size_t>::max();

struct CatalogSettings {
    SplineOrder order = SplineOrder::first;
    /// Largest interaction size; nullopt means d.
    std::optional<int> max_interaction;
    /// Knots kept per coordinate; nullopt selects the size rule below.
    std::optional<std::size_t> knot_cap;
    /// With knot_cap unset, catalogs from more than this many rows are thinned to this many knots.
    std::size_t auto_cap_threshold = 500;

    [[nodiscard]] std::size_t resolved_cap(Eigen::Index n) const noexcept {
        if (knot_cap) return *knot_cap;
        return static_cast<std::size_t>(n) <= auto_cap_threshold ? kNoKnotCap : auto_cap_threshold;
    }
};

struct BasisCatalog {
    std::vector<BasisSpec> specs;
    bool includes_intercept = true;
    SplineOrder order = SplineOrder::first;
    int max_interaction = 1;
    std::size_t knot_cap = kNoKnotCap;
    std::string source_fingerprint;

    [[nodiscard]] std::size_t size() const noexcept { return specs.size(); }
};

namespace detail {

/// Distinct values of one coordinate, thinned to at most `cap` at evenly spaced order statistics.
inline std::vector<double> thinned_values(const Eigen::VectorXd& col, std::size_t cap) {
    std::vector<double> v(col.data(), col.data() + col.size());
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    if (cap == kNoKnotCap || v.size() <= cap) return v;
    std::vector<double> out;
    out.reserve(cap);
    const double step = static_cast<double>(v.size() - 1) / static_cast<double>(cap - 1);
    for (std::size_t i = 0; i < cap; ++i) {
        const auto pos = static_cast<std::size_t>(std::llround(static_cast<double>(i) * step));
        if (out.empty() || out.back() != v[pos]) out.push_back(v[pos]);
    }
    return out;
}

/// All nonempty subsets of {0..d-1} with size <= max_size, by size then lexicographically.
inline std::vector<std::vector<int>> subsets_up_to(int d, int max_size) {
    std::vector<std::vector<int>> out;
    for (int size = 1; size <= max_size; ++size) {
        std::vector<int> s(static_cast<std::size_t>(size));
        for (int i = 0; i < size; ++i) s[static_cast<std::size_t>(i)] = i;
        while (true) {
            out.push_back(s);
            int i = size - 1;
            while (i >= 0 && s[static_cast<std::size_t>(i)] == d - size + i) --i;
            if (i < 0) break;
            ++s[static_cast<std::size_t>(i)];
            for (int j = i + 1; j < size; ++j) s[static_cast<std::size_t>(j)] = s[static_cast<std::size_t>(j - 1)] + 1;
        }
    }
    return out;
}

} // namespace detail

/// Emits one basis per (subset, observed knot tuple), deduplicated within each subset.
inline BasisCatalog enumerate_catalog(const Eigen::MatrixXd& X, SplineOrder order, int max_interaction,
                                      std::size_t knot_cap = kNoKnotCap) {
    const auto n = X.rows();
    const auto d = static_cast<int>(X.cols());
    detail::require(n > 0 && d > 0, "enumerate_catalog: empty dataset");
    detail::require(max_interaction >= 1 && max_interaction <= d,
                    "enumerate_catalog: max_interaction must lie in [1, " + std::to_string(d) + "]");
    detail::require(knot_cap >= 2, "enumerate_catalog: knot cap must be at least 2");

    std::vector<std::set<double>> kept(static_cast<std::size_t>(d));
    const bool thin = knot_cap != kNoKnotCap;
    if (thin) {
        for (int j = 0; j < d; ++j) {
            auto v = detail::thinned_values(X.col(j), knot_cap);
            kept[static_cast<std::size_t>(j)].insert(v.begin(), v.end());
        }
    }

    BasisCatalog cat;
    cat.order = order;
    cat.max_interaction = max_interaction;
    cat.knot_cap = knot_cap;
    for (const auto& s : detail::subsets_up_to(d, max_interaction)) {
        std::set<std::vector<double>> seen;
        std::vector<double> knot(s.size());
        for (Eigen::Index i = 0; i < n; ++i) {
            bool survives = true;
            for (std::size_t j = 0; j < s.size(); ++j) {
                knot[j] = X(i, s[j]);
                if (thin && !kept[static_cast<std::size_t>(s[j])].contains(knot[j])) {
                    survives = false;
                    break;
                }
            }
            if (!survives || !seen.insert(knot).second) continue;
            cat.specs.push_back(BasisSpec{s, knot, order});
        }
    }

    Fingerprint fp;
    fp.add(X).add(static_cast<std::int64_t>(order)).add(static_cast<std::int64_t>(max_interaction));
    fp.add(static_cast<std::int64_t>(thin ? knot_cap : 0));
    cat.source_fingerprint = fp.hex();
    return cat;
}

inline BasisCatalog enumerate_catalog(const Eigen::MatrixXd& X, const CatalogSettings& settings) {
    const int d = static_cast<int>(X.cols());
    return enumerate_catalog(X, settings.order, settings.max_interaction.value_or(d),
                             settings.resolved_cap(X.rows()));
}

enum class DedupReason { duplicate, constant };

/// A catalog spec whose column was not kept. kept_column is 0 for columns absorbed by the intercept.
struct DedupRecord {
    std::size_t spec_index;
    std::size_t kept_column;
    DedupReason reason;
};

/// n x p design: column 0 is the intercept, columns 1..p-1 are distinct nonconstant basis columns.
struct DesignMatrix {
    Eigen::MatrixXd values;
    /// column_map[c] = catalog index of the spec that produced column c; nullopt for the intercept.
    std::vector<std::optional<std::size_t>> column_map;
    /// specs[c - 1] evaluates column c.
    std::vector<BasisSpec> specs;
    std::vector<DedupRecord> dedup_groups;

    [[nodiscard]] Eigen::Index rows() const noexcept { return values.rows(); }
    [[nodiscard]] Eigen::Index cols() const noexcept { return values.cols(); }

    /// Columns of this design evaluated on new rows (no deduplication).
    [[nodiscard]] Eigen::MatrixXd evaluate(const Eigen::MatrixXd& Xnew) const {
        Eigen::MatrixXd out(Xnew.rows(), cols());
        out.col(0).setOnes();
        for (std::size_t c = 0; c < specs.size(); ++c) fill_column(specs[c], Xnew, out.col(static_cast<Eigen::Index>(c) + 1));
        return out;
    }

    /// Row of basis values at a single point, intercept first.
    template <class Vec>
    [[nodiscard]] Eigen::VectorXd features(const Vec& x) const {
        Eigen::VectorXd f(cols());
        f(0) = 1.0;
        for (std::size_t c = 0; c < specs.size(); ++c) f(static_cast<Eigen::Index>(c) + 1) = eval_basis(specs[c], x);
        return f;
    }

    static void fill_column(const BasisSpec& spec, const Eigen::MatrixXd& X, Eigen::Ref<Eigen::VectorXd> out) {
        if (X.cols() <= spec.max_index())
            throw InputError("design: data has " + std::to_string(X.cols()) + " columns but basis uses covariate " +
                             std::to_string(spec.max_index() + 1));
        const auto n = X.rows();
        out.setOnes();
        for (std::size_t j = 0; j < spec.subset.size(); ++j) {
            const auto xj = X.col(spec.subset[j]);
            const double u = spec.knot[j];
            if (spec.order == SplineOrder::zero) {
                for (Eigen::Index i = 0; i < n; ++i)
                    if (!(xj(i) >= u)) out(i) = 0.0;
            } else {
                for (Eigen::Index i = 0; i < n; ++i) out(i) = xj(i) >= u ? out(i) * (xj(i) - u) : 0.0;
            }
        }
    }
};

/// Evaluates every spec on every row and removes exact duplicate and constant columns.
inline DesignMatrix build_design(const BasisCatalog& catalog, const Eigen::MatrixXd& X) {
    const auto n = X.rows();
    const auto m = catalog.specs.size();
    DesignMatrix dm;
    Eigen::MatrixXd all(n, static_cast<Eigen::Index>(m));
    for (std::size_t c = 0; c < m; ++c) DesignMatrix::fill_column(catalog.specs[c], X, all.col(static_cast<Eigen::Index>(c)));

    std::vector<std::size_t> keep;
    std::vector<std::size_t> kept_column(m, 0);
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> by_hash;
    for (std::size_t c = 0; c < m; ++c) {
        const auto col = all.col(static_cast<Eigen::Index>(c));
        const double first = n > 0 ? col(0) : 0.0;
        if ((col.array() == first).all()) {
            dm.dedup_groups.push_back({c, 0, DedupReason::constant});
            continue;
        }
        Fingerprint fp;
        for (Eigen::Index i = 0; i < n; ++i) fp.add(col(i));
        auto& bucket = by_hash[fp.value()];
        bool merged = false;
        for (auto other : bucket) {
            if (all.col(static_cast<Eigen::Index>(other)) == col) {
                dm.dedup_groups.push_back({c, kept_column[other], DedupReason::duplicate});
                merged = true;
                break;
            }
        }
        if (merged) continue;
        bucket.push_back(c);
        keep.push_back(c);
        kept_column[c] = keep.size();
    }

    dm.values.resize(n, static_cast<Eigen::Index>(keep.size()) + 1);
    dm.values.col(0).setOnes();
    dm.column_map.reserve(keep.size() + 1);
    dm.column_map.emplace_back(std::nullopt);
    dm.specs.reserve(keep.size());
    for (std::size_t k = 0; k < keep.size(); ++k) {
        dm.values.col(static_cast<Eigen::Index>(k) + 1) = all.col(static_cast<Eigen::Index>(keep[k]));
        dm.column_map.emplace_back(keep[k]);
        dm.specs.push_back(catalog.specs[keep[k]]);
    }
    return dm;
}

} // namespace halinfer
