#pragma once

// CSV ingestion with row/column diagnostics, and stable float formatting.

#include <charconv>
#include <cmath>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <Eigen/Dense>

#include "halinfer/dataset.hpp"
#include "halinfer/error.hpp"

namespace halinfer {

/// Shortest decimal string that parses back to exactly `v`.
inline std::string format_double(double v) {
    if (v == 0.0) return "0";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    detail::ensure(res.ec == std::errc{}, "format_double: buffer too small");
    return std::string(buf, res.ptr);
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;  ///< data rows; row r here is reported as "row r+1"

    [[nodiscard]] std::size_t cols() const noexcept { return header.size(); }

    [[nodiscard]] std::size_t column(std::string_view name) const {
        for (std::size_t j = 0; j < header.size(); ++j)
            if (header[j] == name) return j;
        throw InputError("csv: no column named '" + std::string(name) + "'");
    }
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

/// Split one line on commas; double-quoted fields may contain commas and "" escapes.
inline std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false, was_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                field.push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                field.push_back(c);
            }
        } else if (c == '"' && trim(field).empty()) {
            quoted = was_quoted = true;
            field.clear();
        } else if (c == ',') {
            out.push_back(was_quoted ? field : trim(field));
            field.clear();
            was_quoted = false;
        } else {
            field.push_back(c);
        }
    }
    require(!quoted, "csv: unterminated quote on line " + std::to_string(line_no));
    out.push_back(was_quoted ? field : trim(field));
    return out;
}

} // namespace detail

/// Header row followed by data rows. Blank lines and lines starting with '#' are skipped.
inline CsvTable read_csv(std::istream& in) {
    CsvTable t;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        const auto s = detail::trim(line);
        if (s.empty() || s.front() == '#') continue;
        auto fields = detail::split_csv_line(line, line_no);
        if (!have_header) {
            for (const auto& h : fields) detail::require(!h.empty(), "csv: empty column name in header");
            t.header = std::move(fields);
            have_header = true;
            continue;
        }
        const auto r = t.rows.size() + 1;
        detail::require(fields.size() == t.header.size(),
                        "csv: row " + std::to_string(r) + " has " + std::to_string(fields.size()) +
                            " fields, expected " + std::to_string(t.header.size()));
        t.rows.push_back(std::move(fields));
    }
    detail::require(have_header, "csv: missing header row");
    return t;
}

inline CsvTable read_csv_string(const std::string& text) {
    std::istringstream in(text);
    return read_csv(in);
}

/// Parse one cell as a finite double, naming its position on failure.
inline double parse_cell(const CsvTable& t, std::size_t row, std::size_t col) {
    const auto& cell = t.rows[row][col];
    const auto where = "row " + std::to_string(row + 1) + ", column " + t.header[col];
    detail::require(!cell.empty(), "csv: missing value at " + where);
    double v = 0.0;
    const char* b = cell.data();
    const char* e = b + cell.size();
    if (*b == '+') ++b;
    const auto res = std::from_chars(b, e, v);
    detail::require(res.ec == std::errc{} && res.ptr == e, "csv: non-numeric value '" + cell + "' at " + where);
    detail::require(std::isfinite(v), "csv: non-finite value '" + cell + "' at " + where);
    return v;
}

/// Numeric matrix from the named columns (all columns when empty), in the given order.
inline Eigen::MatrixXd numeric_columns(const CsvTable& t, const std::vector<std::size_t>& cols) {
    Eigen::MatrixXd M(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < t.rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j)
            M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = parse_cell(t, i, cols[j]);
    return M;
}

inline Eigen::MatrixXd numeric_matrix(const CsvTable& t) {
    std::vector<std::size_t> cols(t.cols());
    for (std::size_t j = 0; j < cols.size(); ++j) cols[j] = j;
    return numeric_columns(t, cols);
}

/// Covariates are every column except the outcome, which defaults to the last one.
inline Dataset dataset_from_csv(const CsvTable& t, const std::optional<std::string>& outcome = std::nullopt) {
    detail::require(t.cols() >= 2, "csv: need at least one covariate column and an outcome column");
    detail::require(!t.rows.empty(), "csv: no data rows");
    const std::size_t yc = outcome ? t.column(*outcome) : t.cols() - 1;
    std::vector<std::size_t> xc;
    Dataset data;
    for (std::size_t j = 0; j < t.cols(); ++j) {
        if (j == yc) continue;
        xc.push_back(j);
        data.names.push_back(t.header[j]);
    }
    data.outcome_name = t.header[yc];
    data.X = numeric_columns(t, xc);
    data.y = numeric_columns(t, {yc}).col(0);
    data.validate();
    return data;
}

/// Join fields with commas, quoting those that need it.
inline std::string csv_row(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t j = 0; j < fields.size(); ++j) {
        if (j) out.push_back(',');
        const auto& f = fields[j];
        if (f.find_first_of(",\"\n") == std::string::npos) {
            out += f;
        } else {
            out.push_back('"');
            for (char c : f) {
                if (c == '"') out.push_back('"');
                out.push_back(c);
            }
            out.push_back('"');
        }
    }
    return out;
}

} // namespace halinfer
