#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "halinfer/io.hpp"
#include "halinfer/rng.hpp"

namespace fs = std::filesystem;
using halinfer::CounterRng;
using halinfer::format_double;

namespace {

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("halinfer_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    [[nodiscard]] std::string path(const std::string& name) const { return (dir_ / name).string(); }

    /// Exit status of the tool; stdout and stderr go to `log`.
    int run(const std::string& args) {
        const std::string cmd = std::string("\"") + HALINFER_EXE + "\" " + args + " > \"" + path("log") + "\" 2>&1";
        const int raw = std::system(cmd.c_str());
        return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    }

    [[nodiscard]] std::string read(const std::string& name) const {
        std::ifstream in(path(name));
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    void write(const std::string& name, const std::string& text) const { std::ofstream(path(name)) << text; }

    void write_data(const std::string& name, int n, std::uint64_t seed) const {
        CounterRng rng(seed);
        std::ostringstream os;
        os << "x1,x2,y\n";
        for (int i = 0; i < n; ++i) {
            const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
            os << format_double(a) << "," << format_double(b) << "," << format_double(a * b + 0.3 * rng.normal()) << "\n";
        }
        write(name, os.str());
    }

    fs::path dir_;
};

const std::string kSmallFit = " --grid-size 12 --folds 3 ";
const std::string kSmallSim =
    " --scenarios 1 --dims 1 --sizes 60 --runs 4 --test-points 3 --grid-size 10 --folds 3 ";

} // namespace

TEST_F(Cli, FitThenPredict) {
    write_data("d.csv", 60, 1);
    ASSERT_EQ(run("fit " + path("d.csv") + " -o " + path("m.json") + kSmallFit + "--summary " + path("s.json")), 0)
        << read("log");
    const auto arc = nlohmann::json::parse(read("m.json"));
    EXPECT_EQ(arc["format"], "halinfer-model");
    EXPECT_TRUE(arc.contains("config"));
    EXPECT_EQ(arc["config"]["grid_size"], 12);
    EXPECT_TRUE(arc["fingerprints"].contains("data"));

    write("p.csv", "x1,x2\n0,0\n1,-1\n0.5,1.5\n");
    ASSERT_EQ(run("predict " + path("m.json") + " " + path("p.csv") + " -o " + path("r.csv")), 0) << read("log");
    const auto out = read("r.csv");
    EXPECT_NE(out.find("# halinfer"), std::string::npos);
    EXPECT_NE(out.find("data_fingerprint"), std::string::npos);
    const auto t = halinfer::read_csv_string(out);
    EXPECT_EQ(t.header, (std::vector<std::string>{"x1", "x2", "estimator", "selector", "k", "s_k", "psi", "se", "gamma",
                                                  "ci_lo", "ci_hi", "ci_consv_lo", "ci_consv_hi"}));
    EXPECT_EQ(t.rows.size(), 27u);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const double psi = halinfer::parse_cell(t, r, t.column("psi"));
        const double lo = halinfer::parse_cell(t, r, t.column("ci_lo"));
        const double hi = halinfer::parse_cell(t, r, t.column("ci_hi"));
        EXPECT_NEAR(0.5 * (lo + hi), psi, 1e-12 * (1.0 + std::abs(psi)));
        EXPECT_LE(halinfer::parse_cell(t, r, t.column("ci_consv_lo")), lo);
        EXPECT_GE(halinfer::parse_cell(t, r, t.column("ci_consv_hi")), hi);
    }
    ASSERT_EQ(run("predict " + path("m.json") + " " + path("p.csv") + " -o " + path("r2.csv")), 0);
    EXPECT_EQ(read("r2.csv"), out);
}

TEST_F(Cli, FitIsDeterministic) {
    write_data("d.csv", 50, 2);
    ASSERT_EQ(run("fit " + path("d.csv") + " -o " + path("a.json") + kSmallFit), 0) << read("log");
    ASSERT_EQ(run("fit " + path("d.csv") + " -o " + path("b.json") + kSmallFit), 0);
    EXPECT_EQ(read("a.json"), read("b.json"));
}

TEST_F(Cli, InputErrorsExitWithTwo) {
    write("bad.csv", "x1,x2,y\n1,2,3\n1,2,3\n1,2,3\n1,2,3\n1,2,3\n1,2,3\n4,,6\n");
    EXPECT_EQ(run("fit " + path("bad.csv") + " -o " + path("m.json")), 2);
    EXPECT_NE(read("log").find("row 7, column x2"), std::string::npos) << read("log");
    write_data("d.csv", 40, 3);
    EXPECT_EQ(run("fit " + path("d.csv") + " -o " + path("m.json") + " --order 2"), 2);
    EXPECT_EQ(run("fit " + path("d.csv") + " -o " + path("m.json") + " --no-such-flag 1"), 2);
    EXPECT_EQ(run("fit " + path("missing.csv") + " -o " + path("m.json")), 2);
    write("cfg.json", R"({"bogus": 1})");
    EXPECT_EQ(run("fit " + path("d.csv") + " -o " + path("m.json") + " --config " + path("cfg.json")), 2);

    ASSERT_EQ(run("fit " + path("d.csv") + " -o " + path("m.json") + kSmallFit), 0) << read("log");
    write("p.csv", "x1\n0\n");
    EXPECT_EQ(run("predict " + path("m.json") + " " + path("p.csv") + " -o " + path("r.csv")), 2);
    write("p.csv", "x1,x2\n0,0\n");
    EXPECT_EQ(run("predict " + path("m.json") + " " + path("p.csv") + " -o " + path("r.csv") + " --alpha 1.5"), 2);
}

TEST_F(Cli, NonConvergenceExitsWithThree) {
    write_data("d.csv", 40, 4);
    EXPECT_EQ(run("fit " + path("d.csv") + " -o " + path("m.json") + kSmallFit + "--max-iter 1"), 3) << read("log");
}

TEST_F(Cli, ConfigFileIsOverriddenByFlags) {
    write_data("d.csv", 40, 5);
    write("cfg.json", R"({"grid_size": 8, "folds": 4})");
    ASSERT_EQ(run("fit " + path("d.csv") + " -o " + path("m.json") + " --config " + path("cfg.json") + " --folds 3"), 0)
        << read("log");
    const auto arc = nlohmann::json::parse(read("m.json"));
    EXPECT_EQ(arc["config"]["grid_size"], 8);
    EXPECT_EQ(arc["config"]["folds"], 3);
    EXPECT_EQ(arc["grid"]["lambdas"].size(), 8u);
}

TEST_F(Cli, SimulateIsIndependentOfThreadCount) {
    ASSERT_EQ(run("simulate --out-dir " + path("one") + kSmallSim + "--threads 1"), 0) << read("log");
    ASSERT_EQ(run("simulate --out-dir " + path("three") + kSmallSim + "--threads 3"), 0) << read("log");
    EXPECT_EQ(read("one/monte_carlo.csv"), read("three/monte_carlo.csv"));
    EXPECT_EQ(read("one/summary.json"), read("three/summary.json"));
    const auto csv = read("one/monte_carlo.csv");
    EXPECT_NE(csv.find("# halinfer"), std::string::npos);
    EXPECT_NE(csv.find("seed"), std::string::npos);
    EXPECT_NE(csv.find("test_point_fingerprint"), std::string::npos);

    ASSERT_EQ(run("report " + path("one/monte_carlo.csv") + " --out-dir " + path("tables")), 0) << read("log");
    EXPECT_NE(read("tables/tables.md").find("oracle"), std::string::npos);
    EXPECT_FALSE(read("tables/tables.csv").empty());
}

TEST_F(Cli, ThreadsFallBackToTheEnvironment) {
    ASSERT_EQ(run("simulate --out-dir " + path("flag") + kSmallSim + "--threads 2"), 0) << read("log");
    ASSERT_EQ(::setenv("HALINFER_THREADS", "2", 1), 0);
    const int rc = run("simulate --out-dir " + path("env") + kSmallSim);
    ::unsetenv("HALINFER_THREADS");
    ASSERT_EQ(rc, 0) << read("log");
    EXPECT_EQ(read("flag/monte_carlo.csv"), read("env/monte_carlo.csv"));
    ASSERT_EQ(::setenv("HALINFER_THREADS", "many", 1), 0);
    EXPECT_EQ(run("simulate --out-dir " + path("bad") + kSmallSim), 2);
    ::unsetenv("HALINFER_THREADS");
}

TEST_F(Cli, CateSimulationWritesReports) {
    ASSERT_EQ(run("cate-sim --out-dir " + path("c") +
                  " --n 120 --runs 2 --test-points 3 --outcome-folds 3 --outcome-grid-size 8 --propensity-folds 3"
                  " --propensity-grid-size 6 --grid-size 10 --folds 3 --selectors cv --estimators regular"),
              0)
        << read("log");
    const auto t = halinfer::read_csv_string(read("c/monte_carlo.csv"));
    EXPECT_EQ(t.rows.size(), 3u);
    EXPECT_EQ(t.rows[0][t.column("estimand")], "CATE");
    EXPECT_TRUE(nlohmann::json::parse(read("c/summary.json")).is_object());
}
