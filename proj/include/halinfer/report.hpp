#pragma once

// Summary tables from a Monte Carlo CSV: distribution of each metric across
// test points, per experiment and per selector/estimator combination.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <iterator>
#include <ostream>
#include <string>
#include <vector>

#include "halinfer/error.hpp"
#include "halinfer/io.hpp"
#include "halinfer/simlab.hpp"

namespace halinfer {

struct TableRow {
    std::string selector;
    std::string estimator;
    std::vector<double> values;  ///< one per statistic
};

struct ReportTable {
    std::string name;    ///< machine key, e.g. "oracle_coverage"
    std::string title;
    std::vector<std::string> statistics;
    std::vector<TableRow> rows;
};

struct ExperimentTables {
    std::string estimand, scenario, d, n;
    std::size_t points = 0;
    std::vector<ReportTable> tables;
};

/// Linear-interpolation quantile of sorted data (type 7).
inline double quantile_sorted(const std::vector<double>& v, double q) {
    detail::require(!v.empty(), "quantile of an empty set");
    const double h = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// min, Q1, median, Q3, max.
inline std::vector<double> five_numbers(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return {v.front(), quantile_sorted(v, 0.25), quantile_sorted(v, 0.5), quantile_sorted(v, 0.75), v.back()};
}

/// The '#' lines at the top of a CSV, without the marker.
inline std::vector<std::string> comment_lines(std::istream& in) {
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);) {
        const auto t = detail::trim(line);
        if (t.empty()) continue;
        if (t[0] != '#') break;
        out.push_back(detail::trim(std::string_view(t).substr(1)));
    }
    return out;
}

inline std::vector<ExperimentTables> build_tables(const CsvTable& t) {
    const auto c_est = t.column("estimand"), c_sc = t.column("scenario"), c_d = t.column("d"), c_n = t.column("n");
    const auto c_e = t.column("estimator"), c_s = t.column("selector");
    const auto metric = [&](std::size_t r, const char* name) { return parse_cell(t, r, t.column(name)); };

    struct Combo {
        std::string selector, estimator;
        std::vector<std::size_t> rows;
    };
    struct Group {
        ExperimentTables head;
        std::vector<Combo> combos;
    };
    std::vector<Group> groups;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        auto g = std::find_if(groups.begin(), groups.end(), [&](const Group& x) {
            return x.head.estimand == row[c_est] && x.head.scenario == row[c_sc] && x.head.d == row[c_d] &&
                   x.head.n == row[c_n];
        });
        if (g == groups.end()) {
            groups.push_back({{row[c_est], row[c_sc], row[c_d], row[c_n], 0, {}}, {}});
            g = std::prev(groups.end());
        }
        auto c = std::find_if(g->combos.begin(), g->combos.end(),
                              [&](const Combo& x) { return x.selector == row[c_s] && x.estimator == row[c_e]; });
        if (c == g->combos.end()) {
            g->combos.push_back({row[c_s], row[c_e], {}});
            c = std::prev(g->combos.end());
        }
        c->rows.push_back(r);
    }

    const std::vector<std::string> box{"min", "q1", "median", "q3", "max"};
    std::vector<ExperimentTables> out;
    for (auto& g : groups) {
        auto head = g.head;
        head.points = g.combos.empty() ? 0 : g.combos.front().rows.size();
        ReportTable bias{"bias", "Bias across test points", box, {}};
        ReportTable ratio{"bias_se_ratio", "|bias| / oracle SE across test points", box, {}};
        ReportTable cov{"oracle_coverage", "Oracle CI coverage",
                        {"mean", "min", "max", "points_in_0.90_0.99", "points"}, {}};
        ReportTable width{"width_ratio", "Delta CI width / oracle CI width",
                          {"mean", "median", "mean_conservative", "median_conservative"}, {}};
        ReportTable dcov{"delta_coverage", "Delta CI coverage",
                         {"mean", "min", "mean_conservative", "min_conservative"}, {}};
        for (const auto& c : g.combos) {
            std::vector<double> b, br, oc, w, wc, dc, dcc;
            for (auto r : c.rows) {
                b.push_back(metric(r, "bias"));
                br.push_back(metric(r, "bias_se_ratio"));
                oc.push_back(metric(r, "oracle_coverage"));
                w.push_back(metric(r, "width_ratio"));
                wc.push_back(metric(r, "width_ratio_conservative"));
                dc.push_back(metric(r, "delta_coverage"));
                dcc.push_back(metric(r, "delta_coverage_conservative"));
            }
            const auto in_band = std::count_if(oc.begin(), oc.end(), [](double v) { return v >= 0.90 && v <= 0.99; });
            bias.rows.push_back({c.selector, c.estimator, five_numbers(b)});
            ratio.rows.push_back({c.selector, c.estimator, five_numbers(br)});
            cov.rows.push_back({c.selector, c.estimator,
                                {mean(oc), *std::min_element(oc.begin(), oc.end()),
                                 *std::max_element(oc.begin(), oc.end()), static_cast<double>(in_band),
                                 static_cast<double>(oc.size())}});
            width.rows.push_back({c.selector, c.estimator, {mean(w), median(w), mean(wc), median(wc)}});
            dcov.rows.push_back({c.selector, c.estimator,
                                 {mean(dc), *std::min_element(dc.begin(), dc.end()), mean(dcc),
                                  *std::min_element(dcc.begin(), dcc.end())}});
        }
        head.tables = {bias, ratio, cov, width, dcov};
        out.push_back(std::move(head));
    }
    return out;
}

namespace detail {

inline std::string table_cell(double v) {
    if (std::isnan(v)) return "nan";
    if (v == std::round(v) && std::abs(v) < 1e15) return std::to_string(static_cast<long long>(v));
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

} // namespace detail

inline void write_tables_markdown(const std::vector<ExperimentTables>& exps, const std::vector<std::string>& preamble,
                                  std::ostream& os) {
    os << "# Monte Carlo summary\n\n";
    if (!preamble.empty()) {
        os << "```\n";
        for (const auto& l : preamble) os << l << "\n";
        os << "```\n\n";
    }
    for (const auto& e : exps) {
        os << "## " << e.estimand << ", scenario " << e.scenario << ", d = " << e.d << ", n = " << e.n << " ("
           << e.points << " test points)\n\n";
        for (const auto& t : e.tables) {
            os << "### " << t.title << "\n\n| selector | estimator |";
            for (const auto& s : t.statistics) os << " " << s << " |";
            os << "\n|---|---|";
            for (std::size_t i = 0; i < t.statistics.size(); ++i) os << "---:|";
            os << "\n";
            for (const auto& r : t.rows) {
                os << "| " << r.selector << " | " << r.estimator << " |";
                for (double v : r.values) os << " " << detail::table_cell(v) << " |";
                os << "\n";
            }
            os << "\n";
        }
    }
}

/// Long format: one row per (experiment, table, combination, statistic).
inline void write_tables_csv(const std::vector<ExperimentTables>& exps, const std::vector<std::string>& preamble,
                             std::ostream& os) {
    for (const auto& l : preamble) os << "# " << l << "\n";
    os << csv_row({"estimand", "scenario", "d", "n", "table", "selector", "estimator", "statistic", "value"}) << "\n";
    for (const auto& e : exps)
        for (const auto& t : e.tables)
            for (const auto& r : t.rows)
                for (std::size_t i = 0; i < t.statistics.size(); ++i)
                    os << csv_row({e.estimand, e.scenario, e.d, e.n, t.name, r.selector, r.estimator, t.statistics[i],
                                   format_double(r.values[i])})
                       << "\n";
}

} // namespace halinfer
