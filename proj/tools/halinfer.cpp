// halinfer command-line tool: fit, predict, simulate, cate-sim, report.

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "halinfer/cate.hpp"
#include "halinfer/io.hpp"
#include "halinfer/pipeline.hpp"
#include "halinfer/report.hpp"
#include "halinfer/serialize.hpp"
#include "halinfer/simlab.hpp"
#include "halinfer/version.hpp"

namespace {

using namespace halinfer;
namespace fs = std::filesystem;

enum class Kind { count, real, flag, text, count_list, text_list };

struct Setting {
    std::string key;
    Kind kind;
    json fallback;
    std::string help;
    bool nullable = false;
};

std::string dashed(std::string s) {
    for (auto& c : s)
        if (c == '_') c = '-';
    return s;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');) {
        item = detail::trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::uint64_t parse_count(const std::string& key, const std::string& s) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
        if (!s.empty() && s[0] == '-') throw std::invalid_argument("negative");
        v = std::stoull(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size()) throw InputError("--" + dashed(key) + ": expected a non-negative integer, got '" + s + "'");
    return v;
}

double parse_real(const std::string& key, const std::string& s) {
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size()) throw InputError("--" + dashed(key) + ": expected a number, got '" + s + "'");
    return v;
}

/// Checks a value from a config file against the setting's kind.
json coerce(const Setting& s, const json& v) {
    const auto bad = [&] { return InputError("config: '" + s.key + "' has the wrong type (" + v.dump() + ")"); };
    if (v.is_null()) {
        if (!s.nullable) throw bad();
        return v;
    }
    switch (s.kind) {
    case Kind::count:
        if (!v.is_number_unsigned()) throw bad();
        return v;
    case Kind::real:
        if (!v.is_number()) throw bad();
        return v.get<double>();
    case Kind::flag:
        if (!v.is_boolean()) throw bad();
        return v;
    case Kind::text:
        if (!v.is_string()) throw bad();
        return v;
    case Kind::count_list:
        if (!v.is_array()) throw bad();
        for (const auto& e : v)
            if (!e.is_number_unsigned()) throw bad();
        return v;
    case Kind::text_list:
        if (!v.is_array()) throw bad();
        for (const auto& e : v)
            if (!e.is_string()) throw bad();
        return v;
    }
    throw bad();
}

json parse_flag(const Setting& s, const std::string& raw) {
    if (s.nullable && raw == "auto") return nullptr;
    switch (s.kind) {
    case Kind::count: return parse_count(s.key, raw);
    case Kind::real: return parse_real(s.key, raw);
    case Kind::flag:
        if (raw == "true" || raw == "1") return true;
        if (raw == "false" || raw == "0") return false;
        throw InputError("--" + dashed(s.key) + ": expected true or false, got '" + raw + "'");
    case Kind::text: return raw;
    case Kind::count_list: {
        json a = json::array();
        for (const auto& item : split_list(raw)) a.push_back(parse_count(s.key, item));
        return a;
    }
    case Kind::text_list: {
        json a = json::array();
        for (const auto& item : split_list(raw)) a.push_back(item);
        return a;
    }
    }
    return nullptr;
}

/// Defaults, then a JSON config file, then command-line flags.
class Config {
public:
    void declare(CLI::App* app, std::vector<Setting> settings) {
        app->add_option("--config", file_, "JSON file with settings (flags override it)")->check(CLI::ExistingFile);
        for (auto& s : settings) {
            auto* opt = app->add_option("--" + dashed(s.key), raw_[s.key], s.help);
            std::string def = s.fallback.is_null() ? "auto" : s.fallback.dump();
            if (s.kind == Kind::count_list || s.kind == Kind::text_list) def = join(s.fallback);
            opt->default_str(def);
            if (s.kind == Kind::count_list || s.kind == Kind::text_list) opt->type_name("LIST");
            options_[s.key] = opt;
        }
        settings_ = std::move(settings);
    }

    [[nodiscard]] json resolve() const {
        json cfg = json::object();
        for (const auto& s : settings_) cfg[s.key] = s.fallback;
        if (!file_.empty()) {
            std::ifstream in(file_);
            json f;
            try {
                f = json::parse(in);
            } catch (const json::exception& e) {
                throw InputError("config " + file_ + ": " + e.what());
            }
            if (!f.is_object()) throw InputError("config " + file_ + ": expected a JSON object");
            for (const auto& [k, v] : f.items()) cfg[k] = coerce(find(k), v);
        }
        for (const auto& s : settings_)
            if (options_.at(s.key)->count() > 0) cfg[s.key] = parse_flag(s, raw_.at(s.key));
        return cfg;
    }

private:
    static std::string join(const json& a) {
        std::string out;
        for (const auto& e : a) out += (out.empty() ? "" : ",") + (e.is_string() ? e.get<std::string>() : e.dump());
        return out;
    }

    [[nodiscard]] const Setting& find(const std::string& key) const {
        for (const auto& s : settings_)
            if (s.key == key) return s;
        throw InputError("config: unknown setting '" + key + "'");
    }

    std::string file_;
    std::vector<Setting> settings_;
    std::map<std::string, std::string> raw_;
    std::map<std::string, CLI::Option*> options_;
};

std::vector<Setting> hal_settings() {
    return {{"order", Kind::count, 1, "spline order, 0 or 1"},
            {"max_interaction", Kind::count, nullptr, "largest interaction size (auto: d)", true},
            {"knot_cap", Kind::count, nullptr, "knots kept per coordinate (auto: 500 when n > 500)", true},
            {"grid_size", Kind::count, 50, "number of penalty values"},
            {"grid_ratio", Kind::real, 1e-4, "smallest / largest penalty"},
            {"folds", Kind::count, 10, "cross-validation folds"},
            {"tol", Kind::real, 1e-7, "solver tolerance, relative to sd(y)"},
            {"max_iter", Kind::count, 100000, "solver iterations per penalty value"}};
}

std::vector<Setting> inference_settings() {
    return {{"estimators", Kind::text_list, json{"regular", "targeted", "relax"}, "regular, targeted, relax"},
            {"selectors", Kind::text_list, json{"cv", "global-u", "local-u"}, "cv, global-u, local-u"},
            {"alpha", Kind::real, 0.05, "1 - confidence level"},
            {"threshold", Kind::real, nullptr, "undersmoothing threshold (auto: 1/log n)", true}};
}

template <class... Lists>
std::vector<Setting> concat(Lists... lists) {
    std::vector<Setting> out;
    (out.insert(out.end(), lists.begin(), lists.end()), ...);
    return out;
}

int to_int(const json& v) { return static_cast<int>(v.get<std::uint64_t>()); }

HalSettings hal_from(const json& c) {
    HalSettings h;
    h.basis.order = spline_order_from_int(to_int(c.at("order")));
    if (!c.at("max_interaction").is_null()) h.basis.max_interaction = to_int(c.at("max_interaction"));
    if (!c.at("knot_cap").is_null()) h.basis.knot_cap = c.at("knot_cap").get<std::size_t>();
    h.grid.K = to_int(c.at("grid_size"));
    h.grid.ratio = c.at("grid_ratio").get<double>();
    h.folds = to_int(c.at("folds"));
    h.solver.tol = c.at("tol").get<double>();
    h.solver.max_iter = c.at("max_iter").get<long>();
    detail::require(h.solver.tol > 0.0, "tol must be positive");
    return h;
}

void apply_inference(const json& c, PipelineSettings& p) {
    p.alpha = c.at("alpha").get<double>();
    normal_quantile_two_sided(p.alpha);
    if (!c.at("threshold").is_null()) p.threshold = c.at("threshold").get<double>();
    p.combinations.clear();
    for (const auto& s : c.at("selectors"))
        for (const auto& e : c.at("estimators"))
            p.combinations.push_back({parse_selector(s.get<std::string>()), parse_estimator(e.get<std::string>())});
    detail::require(!p.combinations.empty(), "need at least one estimator and one selector");
}

PipelineSettings pipeline_from(const json& c) {
    PipelineSettings p;
    p.hal = hal_from(c);
    apply_inference(c, p);
    return p;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    return in;
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    return out;
}

unsigned threads_from(const CLI::Option* opt, unsigned flag) {
    if (opt->count() > 0) return flag;
    if (const char* env = std::getenv("HALINFER_THREADS")) {
        try {
            return static_cast<unsigned>(parse_count("threads", env));
        } catch (const InputError&) {
            throw InputError("HALINFER_THREADS: expected a non-negative integer, got '" + std::string(env) + "'");
        }
    }
    return 0;
}

// ---- fit --------------------------------------------------------------------

struct FitArgs {
    std::string data;
    std::string out = "model.json";
    std::string summary;
    Config config;
};

int cmd_fit(const FitArgs& a) {
    const json cfg = a.config.resolve();
    auto in = open_in(a.data);
    const auto table = read_csv(in);
    const auto outcome = cfg.at("outcome").is_null() ? std::nullopt : std::optional(cfg.at("outcome").get<std::string>());
    FitArchive arc;
    arc.data = dataset_from_csv(table, outcome);
    arc.seed = cfg.at("seed").get<std::uint64_t>();
    arc.config = cfg;
    arc.fit = cross_validate(arc.data, hal_from(cfg), arc.seed);
    open_out(a.out) << archive_json(arc).dump(1) << "\n";

    const auto& p = arc.fit.path;
    const auto& best = p.fits[p.k_cv];
    std::cout << "n=" << arc.data.n() << " d=" << arc.data.d() << " catalog=" << arc.fit.catalog.size()
              << " columns=" << arc.fit.design.cols() - 1 << " k_cv=" << p.k_cv << " lambda=" << format_double(best.lambda)
              << " nonzero=" << best.nonzero_count() << " cv_mse=" << format_double(p.cv_mse[p.k_cv]) << "\n";
    if (!a.summary.empty()) {
        json path = json::array();
        for (std::size_t k = 0; k < p.size(); ++k)
            path.push_back({{"k", k},
                            {"lambda", p.fits[k].lambda},
                            {"l1_norm", p.fits[k].l1_norm},
                            {"nonzero", p.fits[k].nonzero_count()},
                            {"cv_mse", p.cv_mse[k]}});
        const json s = {{"version", kVersion},
                        {"config", cfg},
                        {"seed", arc.seed},
                        {"data_fingerprint", data_fingerprint(arc.data)},
                        {"n", arc.data.n()},
                        {"d", arc.data.d()},
                        {"names", arc.data.names},
                        {"outcome", arc.data.outcome_name},
                        {"catalog_size", arc.fit.catalog.size()},
                        {"design_columns", arc.fit.design.cols()},
                        {"degenerate_outcome", arc.fit.degenerate_outcome},
                        {"k_cv", p.k_cv},
                        {"path", path}};
        open_out(a.summary) << s.dump(1) << "\n";
    }
    return 0;
}

// ---- predict ----------------------------------------------------------------

struct PredictArgs {
    std::string archive;
    std::string points;
    std::string out = "reports.csv";
    Config config;
};

/// Test points in the archive's covariate order: by name when the header has them all, else by position.
Eigen::MatrixXd points_for(const CsvTable& t, const std::vector<std::string>& names) {
    std::vector<std::size_t> cols;
    bool by_name = true;
    for (const auto& nm : names) {
        const auto it = std::find(t.header.begin(), t.header.end(), nm);
        if (it == t.header.end()) {
            by_name = false;
            break;
        }
        cols.push_back(static_cast<std::size_t>(it - t.header.begin()));
    }
    if (!by_name) {
        if (t.cols() != names.size())
            throw InputError("points: model has " + std::to_string(names.size()) + " covariates but the points file has " +
                             std::to_string(t.cols()) + " columns");
        cols.clear();
        for (std::size_t j = 0; j < t.cols(); ++j) cols.push_back(j);
    }
    return numeric_columns(t, cols);
}

int cmd_predict(const PredictArgs& a) {
    const json cfg = a.config.resolve();
    PipelineSettings settings;
    apply_inference(cfg, settings);
    json aj;
    try {
        auto in = open_in(a.archive);
        aj = json::parse(in);
    } catch (const json::exception& e) {
        throw InputError("archive " + a.archive + ": " + e.what());
    }
    const auto arc = archive_from_json(aj);
    auto pin = open_in(a.points);
    const auto P = points_for(read_csv(pin), arc.data.names);
    const auto res = analyze_fit(arc.fit, arc.data.y, P, settings);

    auto os = open_out(a.out);
    os << "# halinfer " << kVersion << "\n";
    os << "# config: " << cfg.dump() << "\n";
    os << "# model_config: " << arc.config.dump() << "\n";
    os << "# seed: " << arc.seed << "\n";
    os << "# data_fingerprint: " << data_fingerprint(arc.data) << "\n";
    std::vector<std::string> head = arc.data.names;
    for (const char* h : {"estimator", "selector", "k", "s_k", "psi", "se", "gamma", "ci_lo", "ci_hi", "ci_consv_lo",
                          "ci_consv_hi"})
        head.emplace_back(h);
    os << csv_row(head) << "\n";
    for (const auto& r : res.reports) {
        std::vector<std::string> f;
        for (double v : r.x_tilde) f.push_back(format_double(v));
        f.emplace_back(to_string(r.estimator));
        f.emplace_back(to_string(r.selector));
        f.push_back(std::to_string(r.k));
        f.push_back(std::to_string(r.s_k));
        for (double v : {r.psi, r.se, r.gamma, r.ci.lo, r.ci.hi, r.ci_conservative.lo, r.ci_conservative.hi})
            f.push_back(format_double(v));
        os << csv_row(f) << "\n";
    }
    return 0;
}

// ---- simulate / cate-sim ----------------------------------------------------

struct SimArgs {
    std::string out_dir = ".";
    unsigned threads = 0;
    CLI::Option* threads_opt = nullptr;
    Config config;
};

void write_outputs(const SimArgs& a, const json& cfg, const std::vector<MonteCarloReport>& reps) {
    const fs::path dir(a.out_dir);
    std::vector<const MonteCarloReport*> ptrs;
    for (const auto& r : reps) ptrs.push_back(&r);
    {
        auto os = open_out(dir / "monte_carlo.csv");
        write_reports_csv(ptrs, os,
                          {"config: " + cfg.dump(), "seed: " + std::to_string(cfg.at("seed").get<std::uint64_t>())});
    }
    json exps = json::array();
    for (const auto& r : reps) exps.push_back(experiment_summary(r));
    const json summary = {{"version", kVersion}, {"config", cfg}, {"seed", cfg.at("seed")}, {"experiments", exps}};
    open_out(dir / "summary.json") << summary.dump(1) << "\n";
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int cmd_simulate(const SimArgs& a) {
    const json cfg = a.config.resolve();
    const unsigned threads = threads_from(a.threads_opt, a.threads);
    std::vector<MonteCarloReport> reps;
    for (const auto& sc : cfg.at("scenarios"))
        for (const auto& d : cfg.at("dims"))
            for (const auto& n : cfg.at("sizes")) {
                ExperimentSettings s;
                s.spec.scenario = to_int(sc);
                s.spec.d = to_int(d);
                s.spec.n = static_cast<Eigen::Index>(n.get<std::uint64_t>());
                s.spec.noise_sd = cfg.at("noise_sd").get<double>();
                s.spec.flat_value = cfg.at("flat_value").get<double>();
                s.spec.test_point_count = to_int(cfg.at("test_points"));
                s.runs = cfg.at("runs").get<std::size_t>();
                s.master_seed = cfg.at("seed").get<std::uint64_t>();
                s.pipeline = pipeline_from(cfg);
                s.threads = threads;
                s.clamp_test_points = cfg.at("clamp_test_points").get<bool>();
                const auto t0 = std::chrono::steady_clock::now();
                reps.push_back(run_experiment(s));
                std::cerr << "scenario " << s.spec.scenario << " d=" << s.spec.d << " n=" << s.spec.n << ": "
                          << reps.back().runs_ok() << "/" << s.runs << " runs ok, " << seconds_since(t0) << " s\n";
            }
    write_outputs(a, cfg, reps);
    return 0;
}

int cmd_cate_sim(const SimArgs& a) {
    const json cfg = a.config.resolve();
    CateExperimentSettings s;
    s.n = static_cast<Eigen::Index>(cfg.at("n").get<std::uint64_t>());
    s.runs = cfg.at("runs").get<std::size_t>();
    s.master_seed = cfg.at("seed").get<std::uint64_t>();
    s.test_point_count = to_int(cfg.at("test_points"));
    s.dgp.control_factor = cfg.at("control_factor").get<double>();
    const auto nuis = cfg.at("nuisances").get<std::string>();
    if (nuis != "cross-fitted" && nuis != "oracle")
        throw InputError("--nuisances: expected cross-fitted or oracle, got '" + nuis + "'");
    s.oracle_nuisances = nuis == "oracle";
    s.clamp_test_points = cfg.at("clamp_test_points").get<bool>();
    s.cate.regression = pipeline_from(cfg);
    s.cate.cross_fit_folds = to_int(cfg.at("cross_fit_folds"));
    s.cate.truncation_lo = cfg.at("truncation_lo").get<double>();
    s.cate.truncation_hi = cfg.at("truncation_hi").get<double>();
    s.cate.outcome.folds = to_int(cfg.at("outcome_folds"));
    s.cate.outcome.grid.K = to_int(cfg.at("outcome_grid_size"));
    s.cate.outcome.grid.ratio = cfg.at("outcome_grid_ratio").get<double>();
    s.cate.outcome.solver = s.cate.regression.hal.solver;
    s.cate.propensity.folds = to_int(cfg.at("propensity_folds"));
    s.cate.propensity.K = to_int(cfg.at("propensity_grid_size"));
    s.cate.propensity.ratio = cfg.at("propensity_grid_ratio").get<double>();
    s.threads = threads_from(a.threads_opt, a.threads);
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<MonteCarloReport> reps{run_cate_experiment(s)};
    std::cerr << "cate n=" << s.n << ": " << reps.back().runs_ok() << "/" << s.runs << " runs ok, " << seconds_since(t0)
              << " s\n";
    write_outputs(a, cfg, reps);
    return 0;
}

// ---- report -----------------------------------------------------------------

struct ReportArgs {
    std::string csv;
    std::string out_dir = ".";
};

int cmd_report(const ReportArgs& a) {
    std::vector<std::string> preamble;
    {
        auto in = open_in(a.csv);
        preamble = comment_lines(in);
    }
    auto in = open_in(a.csv);
    const auto tables = build_tables(read_csv(in));
    if (tables.empty()) throw InputError(a.csv + ": no result rows");
    const fs::path dir(a.out_dir);
    {
        auto os = open_out(dir / "tables.md");
        write_tables_markdown(tables, preamble, os);
    }
    auto os = open_out(dir / "tables.csv");
    write_tables_csv(tables, preamble, os);
    return 0;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConvergenceError*>(&e)) return 3;
    if (dynamic_cast<const InvariantError*>(&e)) return 4;
    if (dynamic_cast<const InputError*>(&e) || dynamic_cast<const DegenerateError*>(&e)) return 2;
    if (dynamic_cast<const json::exception*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e)) return 2;
    return 4;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Highly adaptive lasso with pointwise inference"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    FitArgs fit;
    auto* c_fit = app.add_subcommand("fit", "fit a cross-validated HAL path and write a model archive");
    c_fit->add_option("data", fit.data, "CSV with a header row; last column is the outcome")->required();
    c_fit->add_option("-o,--out", fit.out, "model archive (JSON)")->capture_default_str();
    c_fit->add_option("--summary", fit.summary, "also write a JSON fit summary here");
    fit.config.declare(c_fit, concat(std::vector<Setting>{{"outcome", Kind::text, nullptr, "outcome column (auto: last)", true},
                                                          {"seed", Kind::count, 20240601, "fold-assignment seed"}},
                                     hal_settings()));

    PredictArgs pred;
    auto* c_pred = app.add_subcommand("predict", "estimates and intervals at test points from a model archive");
    c_pred->add_option("archive", pred.archive, "model archive written by fit")->required();
    c_pred->add_option("points", pred.points, "CSV of test points")->required();
    c_pred->add_option("-o,--out", pred.out, "reports CSV")->capture_default_str();
    pred.config.declare(c_pred, inference_settings());

    SimArgs sim;
    auto* c_sim = app.add_subcommand("simulate", "Monte Carlo experiments on the simulation scenarios");
    c_sim->add_option("--out-dir", sim.out_dir, "directory for monte_carlo.csv and summary.json")->capture_default_str();
    sim.threads_opt = c_sim->add_option("--threads", sim.threads, "worker threads (0: all cores; env HALINFER_THREADS)");
    sim.config.declare(
        c_sim, concat(std::vector<Setting>{{"scenarios", Kind::count_list, json{1}, "scenario ids (0 = flat, 1..3)"},
                                           {"dims", Kind::count_list, json{1}, "covariate dimensions"},
                                           {"sizes", Kind::count_list, json{500}, "sample sizes"},
                                           {"runs", Kind::count, 300, "Monte Carlo runs per experiment"},
                                           {"seed", Kind::count, 20240601, "master seed"},
                                           {"test_points", Kind::count, 20, "test points per experiment"},
                                           {"noise_sd", Kind::real, 1.0, "outcome noise standard deviation"},
                                           {"flat_value", Kind::real, 0.5, "mean of the flat scenario 0"},
                                           {"clamp_test_points", Kind::flag, true, "clamp test points to the data range"}},
                      hal_settings(), inference_settings()));

    SimArgs csim;
    auto* c_csim = app.add_subcommand("cate-sim", "Monte Carlo experiment for the treatment-effect pipeline");
    c_csim->add_option("--out-dir", csim.out_dir, "directory for monte_carlo.csv and summary.json")->capture_default_str();
    csim.threads_opt = c_csim->add_option("--threads", csim.threads, "worker threads (0: all cores; env HALINFER_THREADS)");
    csim.config.declare(
        c_csim,
        concat(std::vector<Setting>{{"n", Kind::count, 500, "sample size"},
                                    {"runs", Kind::count, 200, "Monte Carlo runs"},
                                    {"seed", Kind::count, 20240601, "master seed"},
                                    {"test_points", Kind::count, 20, "test points"},
                                    {"control_factor", Kind::real, 0.9, "control-arm mean as a fraction of the treated"},
                                    {"nuisances", Kind::text, "cross-fitted", "cross-fitted or oracle"},
                                    {"clamp_test_points", Kind::flag, true, "clamp test points to the data range"},
                                    {"cross_fit_folds", Kind::count, 2, "cross-fitting folds for the nuisances"},
                                    {"truncation_lo", Kind::real, 0.01, "propensity lower bound"},
                                    {"truncation_hi", Kind::real, 0.99, "propensity upper bound"},
                                    {"outcome_folds", Kind::count, 10, "CV folds of the outcome regression"},
                                    {"outcome_grid_size", Kind::count, 50, "penalty values of the outcome regression"},
                                    {"outcome_grid_ratio", Kind::real, 1e-4, "penalty ratio of the outcome regression"},
                                    {"propensity_folds", Kind::count, 5, "CV folds of the propensity model"},
                                    {"propensity_grid_size", Kind::count, 30, "penalty values of the propensity model"},
                                    {"propensity_grid_ratio", Kind::real, 1e-2, "penalty ratio of the propensity model"}},
               hal_settings(), inference_settings()));

    ReportArgs rep;
    auto* c_rep = app.add_subcommand("report", "summary tables (markdown and CSV) from monte_carlo.csv");
    c_rep->add_option("csv", rep.csv, "monte_carlo.csv from simulate or cate-sim")->required();
    c_rep->add_option("--out-dir", rep.out_dir, "directory for tables.md and tables.csv")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (c_fit->parsed()) return cmd_fit(fit);
        if (c_pred->parsed()) return cmd_predict(pred);
        if (c_sim->parsed()) return cmd_simulate(sim);
        if (c_csim->parsed()) return cmd_cate_sim(csim);
        if (c_rep->parsed()) return cmd_report(rep);
    } catch (const std::exception& e) {
        std::cerr << "halinfer: " << e.what() << "\n";
        return exit_code_for(e);
    }
    return 4;
}
