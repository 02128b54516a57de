#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "halinfer/error.hpp"

namespace halinfer {

/// n observations of (covariates in R^d, scalar outcome).
struct Dataset {
    Eigen::MatrixXd X;                 ///< n x d
    Eigen::VectorXd y;                 ///< n
    std::vector<std::string> names;    ///< covariate names, size d (may be empty)
    std::string outcome_name = "y";

    [[nodiscard]] Eigen::Index n() const noexcept { return X.rows(); }
    [[nodiscard]] Eigen::Index d() const noexcept { return X.cols(); }

    void validate() const {
        detail::require(X.rows() == y.size(), "dataset: X has " + std::to_string(X.rows()) +
                                                  " rows but y has " + std::to_string(y.size()) + " entries");
        detail::require(names.empty() || static_cast<Eigen::Index>(names.size()) == X.cols(),
                        "dataset: covariate name count does not match column count");
    }

    /// Subset of rows, in the given order.
    [[nodiscard]] Dataset rows(const std::vector<Eigen::Index>& idx) const {
        Dataset out;
        out.X.resize(static_cast<Eigen::Index>(idx.size()), X.cols());
        out.y.resize(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            out.X.row(static_cast<Eigen::Index>(i)) = X.row(idx[i]);
            out.y(static_cast<Eigen::Index>(i)) = y(idx[i]);
        }
        out.names = names;
        out.outcome_name = outcome_name;
        return out;
    }
};

/// FNV-1a accumulator over raw bytes; doubles are hashed by bit pattern.
class Fingerprint {
public:
    Fingerprint& bytes(const void* data, std::size_t len) noexcept {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            h_ ^= p[i];
            h_ *= 0x100000001b3ull;
        }
        return *this;
    }
    Fingerprint& add(double v) noexcept {
        const auto b = std::bit_cast<std::uint64_t>(v == 0.0 ? 0.0 : v);
        return bytes(&b, sizeof b);
    }
    Fingerprint& add(std::int64_t v) noexcept { return bytes(&v, sizeof v); }
    Fingerprint& add(std::string_view s) noexcept {
        add(static_cast<std::int64_t>(s.size()));
        return bytes(s.data(), s.size());
    }
    Fingerprint& add(const Eigen::MatrixXd& m) noexcept {
        add(static_cast<std::int64_t>(m.rows()));
        add(static_cast<std::int64_t>(m.cols()));
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            for (Eigen::Index i = 0; i < m.rows(); ++i) add(m(i, j));
        return *this;
    }
    Fingerprint& add(const Eigen::VectorXd& v) noexcept {
        add(static_cast<std::int64_t>(v.size()));
        for (Eigen::Index i = 0; i < v.size(); ++i) add(v(i));
        return *this;
    }

    [[nodiscard]] std::uint64_t value() const noexcept { return h_; }

    [[nodiscard]] std::string hex() const {
        static constexpr char digits[] = "0123456789abcdef";
        std::string s(16, '0');
        auto v = h_;
        for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        return s;
    }

private:
    std::uint64_t h_ = 0xcbf29ce484222325ull;
};

inline std::string data_fingerprint(const Dataset& data) {
    return Fingerprint{}.add(data.X).add(data.y).hex();
}

} // namespace halinfer
