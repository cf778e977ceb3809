#include "gcsm/cli.hpp"
#include "gcsm/experiments.hpp"
#include "gcsm/gp.hpp"
#include "gcsm/spectral.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace gcsm;

namespace {

const fs::path data_dir{GCSM_TEST_DATA_DIR};

struct CliRun {
    int status;
    std::string out;
    std::string err;
};

CliRun cli(std::vector<std::string> args) {
    args.insert(args.begin(), "gcsm");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int status = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {status, out.str(), err.str()};
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("gcsm_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    std::string write(const std::string& name, const std::string& body) const {
        std::ofstream(dir_ / name) << body;
        return path(name);
    }

    fs::path dir_;
};

std::string slurp(const std::string& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::vector<double>> read_rows(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        std::vector<double> r;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) r.push_back(std::stod(cell));
        rows.push_back(r);
    }
    return rows;
}

std::string series_csv(int n, double dx, double (*f)(double)) {
    std::string s = "t,y\n";
    char buf[96];
    for (int i = 0; i < n; ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", i * dx, f(i * dx));
        s += buf;
    }
    return s;
}

const std::regex fit_line(R"(fit nlml=[-0-9.e+]+ iters=[0-9]+ jitter=[-0-9.e+]+\n)");

}  // namespace

TEST_F(Cli, FitThenPredictAirline) {
    const std::string air = (data_dir / "airline.csv").string();
    const CliRun f = cli({"fit", "--dataset", air, "--kernel", "SM", "--q", "10", "--seed", "7", "--train-rows", "96",
                       "--out", path("m.json")});
    ASSERT_EQ(f.status, 0) << f.err;
    EXPECT_TRUE(std::regex_match(f.out, fit_line)) << f.out;
    const ModelDocument doc = model_from_json(nlohmann::json::parse(slurp(path("m.json"))));
    EXPECT_TRUE(std::isfinite(doc.info.nlml));

    const CliRun p = cli({"predict", "--model", path("m.json"), "--dataset", air, "--from", "97", "--to", "144"});
    ASSERT_EQ(p.status, 0) << p.err;
    EXPECT_EQ(p.out.substr(0, p.out.find('\n')), "t,mean,var");
    const auto rows = read_rows(p.out);
    ASSERT_EQ(rows.size(), 48u);
    EXPECT_EQ(rows.front()[0], 97.0);
    EXPECT_EQ(rows.back()[0], 144.0);
    for (const auto& r : rows) {
        EXPECT_GT(r[1], 100.0);
        EXPECT_GE(r[2], 0.0);
    }
}

TEST_F(Cli, FitErrors) {
    const std::string air = (data_dir / "airline.csv").string();
    const CliRun k = cli({"fit", "--dataset", air, "--kernel", "Bogus", "--out", path("m.json")});
    EXPECT_EQ(k.status, 2);
    EXPECT_EQ(k.err.rfind("error E_KERNEL_UNKNOWN: ", 0), 0u) << k.err;
    EXPECT_FALSE(fs::exists(path("m.json")));

    const CliRun d = cli({"fit", "--dataset", path("missing.csv"), "--out", path("m.json")});
    EXPECT_EQ(d.status, 2);
    EXPECT_EQ(d.err.rfind("error E_DATASET_IO: ", 0), 0u) << d.err;
    EXPECT_NE(d.err.find("missing.csv"), std::string::npos);

    const CliRun u = cli({"fit"});
    EXPECT_EQ(u.status, 2);
    EXPECT_EQ(u.err.rfind("error E_USAGE: ", 0), 0u);
    EXPECT_EQ(cli({"fit", "--dataset", air, "--delays", "maybe"}).status, 2);
    EXPECT_EQ(cli({"frobnicate"}).status, 2);
}

TEST_F(Cli, NoiselessToyInterpolates) {
    const std::string toy = write("toy.csv", series_csv(25, 0.4, [](double x) { return std::sin(x) + 0.5 * x; }));
    const CliRun f = cli({"fit", "--dataset", toy, "--kernel", "SE", "--max-iters", "500", "--out", path("m.json")});
    ASSERT_EQ(f.status, 0) << f.err;
    std::string inputs = "t\n";
    for (int i = 0; i < 25; ++i) inputs += std::to_string(i * 0.4) + "\n";
    const CliRun p = cli({"predict", "--model", path("m.json"), "--dataset", toy, "--inputs", write("in.csv", inputs),
                       "--out", path("pred.csv")});
    ASSERT_EQ(p.status, 0) << p.err;
    EXPECT_TRUE(p.out.empty());
    const auto rows = read_rows(slurp(path("pred.csv")));
    ASSERT_EQ(rows.size(), 25u);
    for (int i = 0; i < 25; ++i) {
        const double x = i * 0.4;
        EXPECT_NEAR(rows[i][1], std::sin(x) + 0.5 * x, 1e-5) << x;
    }
}

TEST_F(Cli, PredictErrors) {
    const std::string air = (data_dir / "airline.csv").string();
    ASSERT_EQ(cli({"fit", "--dataset", air, "--kernel", "SE", "--max-iters", "20", "--out", path("m.json")}).status, 0);
    const auto bad_range = [&](std::vector<std::string> extra) {
        std::vector<std::string> args{"predict", "--model", path("m.json"), "--dataset", air};
        args.insert(args.end(), extra.begin(), extra.end());
        const CliRun r = cli(args);
        EXPECT_EQ(r.status, 2);
        return r.err;
    };
    EXPECT_EQ(bad_range({"--from", "10", "--to", "5"}).rfind("error E_RANGE", 0), 0u);
    EXPECT_EQ(bad_range({"--from", "1"}).rfind("error E_RANGE", 0), 0u);
    EXPECT_EQ(bad_range({"--from", "1", "--to", "5", "--step", "0"}).rfind("error E_RANGE", 0), 0u);
    bad_range({"--from", "abc", "--to", "5"});

    const std::string other = write("other.csv", "t,y\n1,2\n2,3\n3,5\n");
    const CliRun m = cli({"predict", "--model", path("m.json"), "--dataset", other, "--from", "1", "--to", "2"});
    EXPECT_EQ(m.status, 2);
    EXPECT_EQ(m.err.rfind("error E_MODEL_INCOMPATIBLE: ", 0), 0u) << m.err;

    const CliRun j = cli({"predict", "--model", write("junk.json", "{not json"), "--dataset", air, "--from", "1",
                       "--to", "2"});
    EXPECT_EQ(j.status, 2);
    EXPECT_EQ(j.err.rfind("error E_MODEL_INCOMPATIBLE: ", 0), 0u) << j.err;
}

TEST_F(Cli, SpectrumOfCosine) {
    const std::string csv =
        write("cos.csv", series_csv(200, 0.1, [](double x) { return std::cos(2.0 * std::numbers::pi * 1.5 * x); }));
    const CliRun r = cli({"spectrum", "--dataset", csv, "--q", "1", "--out", path("init.json"), "--spectrum-out",
                       path("spec.csv")});
    ASSERT_EQ(r.status, 0) << r.err;
    EXPECT_EQ(r.out, "spectrum bins=100 q=1\n");

    std::ifstream in(path("spec.csv"));
    const Spectrum s = read_spectrum_csv(in);
    ASSERT_EQ(s.freqs.size(), 100u);
    const auto peak = std::max_element(s.density.begin(), s.density.end()) - s.density.begin();
    EXPECT_NEAR(s.freqs[static_cast<std::size_t>(peak)], 1.5, 1e-12);

    const KernelSpec spec = kernel_from_json(nlohmann::json::parse(slurp(path("init.json"))));
    EXPECT_NEAR(std::get<SmKernel>(spec).components[0].mu[0], 1.5, 0.05);

    const CliRun q = cli({"spectrum", "--dataset", csv, "--q", "500", "--out", path("a.json"), "--spectrum-out",
                       path("b.csv")});
    EXPECT_EQ(q.status, 2);
    EXPECT_EQ(q.err.rfind("error E_GMM_Q: ", 0), 0u) << q.err;
}

TEST_F(Cli, ExperimentAirlineOutputsAndDeterminism) {
    const std::vector<std::string> base{"experiment", "--suite",    "airline", "--seed",       "7",
                                        "--kernels",  "SE,SM,GCSM", "--max-iters", "30", "--restarts", "2"};
    auto run_into = [&](const std::string& out) {
        std::vector<std::string> args = base;
        args.insert(args.end(), {"--out", path(out)});
        return cli(args);
    };
    const CliRun a = run_into("a");
    ASSERT_EQ(a.status, 0) << a.err;
    const CliRun b = run_into("b");
    ASSERT_EQ(b.status, 0) << b.err;
    EXPECT_EQ(a.out, b.out);
    EXPECT_EQ(slurp(path("a/results.csv")), slurp(path("b/results.csv")));
    EXPECT_EQ(slurp(path("a/results.json")), slurp(path("b/results.json")));
    for (const char* g : {"sm", "gcsm", "absdiff"}) {
        const std::string f = "/gram_airline_" + std::string(g) + ".csv";
        ASSERT_TRUE(fs::exists(path("a") + f)) << f;
        EXPECT_EQ(slurp(path("a") + f), slurp(path("b") + f));
    }
    // Table: header, one task row.
    std::istringstream table(a.out);
    std::string header, row, extra;
    std::getline(table, header);
    std::getline(table, row);
    EXPECT_TRUE(std::regex_match(header, std::regex(R"(MAE +SE +SM +GCSM)")));
    EXPECT_TRUE(std::regex_match(row, std::regex(R"(airline( +[0-9]+\.[0-9]{4}){3})"))) << row;
    EXPECT_FALSE(std::getline(table, extra));

    const auto rows = slurp(path("a/results.csv"));
    EXPECT_EQ(std::count(rows.begin(), rows.end(), '\n'), 4);
    const CliRun bad = cli({"experiment", "--suite", "nothing", "--out", path("c")});
    EXPECT_EQ(bad.status, 2);
}

TEST_F(Cli, ExperimentAllCellsFailedExitsOne) {
    // Targets whose variance overflows: the lone cell cannot be fitted.
    const std::string dd = path("data");
    fs::create_directories(dd);
    std::string rows = "t,y\n";
    for (int i = 1; i <= 144; ++i) rows += std::to_string(i) + (i % 2 ? ",1e300\n" : ",-1e300\n");
    std::ofstream(dd + "/airline.csv") << rows;
    const CliRun r = cli({"experiment", "--suite", "airline", "--data-dir", dd, "--kernels", "Periodic", "--out",
                       path("o"), "--max-iters", "5"});
    EXPECT_EQ(r.status, 1) << r.out << r.err;
    EXPECT_NE(r.out.find("cell airline/Periodic: "), std::string::npos);
}
