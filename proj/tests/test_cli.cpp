#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "jumpvol/cli.hpp"

using namespace jumpvol;
namespace fs = std::filesystem;

namespace {

const char* kSmall = R"([run]
mode = all
seed = 11

[preferences]
delta = -1
kappa1 = 0.01
kappa2 = 2.5
kappa3 = 1

[market]
r = constant 0.03
alpha = affine 0.10 0.02
beta = constant 0.2
sigma = constant 0.2
gamma = mark
jump_rate = 1
jump_atoms = -0.15:0.5, 0.1:0.5
factor = ou 1

[actuarial]
horizon = 1
lambda = constant 0.02
rho = constant 0.05
eta1 = constant 0.03
eta2 = constant 0.04

[grid]
t_count = 6
y_count = 7
paths = 16

[simulation]
steps = 50
paths = 200

[example]
y_count = 6
n_outer = 2
n_inner = 50
adjoint_steps = 20
)";

fs::path temp_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("jumpvol_cli_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string write_config(const fs::path& dir, const std::string& text) {
    const fs::path p = dir / "scenario.ini";
    std::ofstream(p, std::ios::binary) << text;
    return p.string();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string replace(std::string s, const std::string& from, const std::string& to) {
    const auto pos = s.find(from);
    if (pos == std::string::npos) throw std::logic_error("pattern not found: " + from);
    return s.replace(pos, from.size(), to);
}

int run_quiet(RunOptions o, std::string* err_text = nullptr) {
    std::ostringstream log, err;
    const int code = run(o, log, err);
    if (err_text) *err_text = err.str();
    return code;
}

}  // namespace

TEST(Config, LineAnchoredErrors) {
    try {
        ConfigFile::parse("[run]\nseed = 1\n\n[run]\n", "s.ini");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.line(), 4u);
        EXPECT_NE(std::string(e.what()).find("s.ini:4"), std::string::npos);
    }
    try {
        ConfigFile::parse("[run]\nseed = 1\nseed = 2\n");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
    EXPECT_THROW(ConfigFile::parse("seed = 1\n"), ConfigError);
    EXPECT_THROW(ConfigFile::parse("[run\n"), ConfigError);
    EXPECT_THROW(ConfigFile::parse("[run]\njunk\n"), ConfigError);
}

TEST(Config, CommentsAndTypedAccess) {
    const ConfigFile cf = ConfigFile::parse("# header\n[a]\nx = 1.5 ; trailing\nn = 7\nbad = 1.5x\n");
    EXPECT_EQ(cf.get_double("a", "x", 0.0), 1.5);
    EXPECT_EQ(cf.get_uint("a", "n", 0), 7u);
    EXPECT_EQ(cf.get_double("a", "missing", 2.0), 2.0);
    try {
        cf.get_double("a", "bad", 0.0);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.line(), 5u);
    }
    EXPECT_THROW(cf.get_uint("a", "x", 0), ConfigError);
}

TEST(Scenario, UnknownKeyPointsAtLine) {
    std::string text = replace(kSmall, "paths = 200", "paths = 200\nstepz = 4");
    try {
        parse_scenario(ConfigFile::parse(text));
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("stepz"), std::string::npos);
        EXPECT_GT(e.line(), 0u);
    }
}

TEST(Scenario, BadValuesRejected) {
    EXPECT_THROW(parse_scenario(ConfigFile::parse(replace(kSmall, "delta = -1", "delta = 1"))), ConfigError);
    EXPECT_THROW(parse_scenario(ConfigFile::parse(replace(kSmall, "t_count = 6", "t_count = 6\nomega = 1.5"))),
                 ConfigError);
    EXPECT_THROW(parse_scenario(ConfigFile::parse(replace(kSmall, "factor = ou 1", "factor = spline"))), ConfigError);
    EXPECT_THROW(parse_scenario(ConfigFile::parse(replace(kSmall, "mode = all", "mode = everything"))), ConfigError);
    EXPECT_THROW(parse_scenario(ConfigFile::parse(replace(kSmall, "paths = 200", "paths = 1"))), ConfigError);
}

TEST(Scenario, ShippedScenariosParse) {
    for (const char* name : {"default.ini", "merton.ini", "ou_example.ini"}) {
        const ScenarioConfig sc = parse_scenario(ConfigFile::load(std::string(JUMPVOL_SCENARIO_DIR) + "/" + name));
        EXPECT_TRUE(sc.seed.has_value()) << name;
    }
}

TEST(Run, ConfigErrorsExitTwo) {
    const fs::path d = temp_dir("errors");
    std::string err;
    EXPECT_EQ(run_quiet({(d / "absent.ini").string()}, &err), 2);
    const std::string no_seed = write_config(d, replace(kSmall, "seed = 11\n", ""));
    EXPECT_EQ(run_quiet({no_seed, std::nullopt, std::nullopt, (d / "o").string()}, &err), 2);
    EXPECT_NE(err.find("seed"), std::string::npos);
    const std::string no_market = write_config(d, replace(kSmall, "[market]", "[markets]"));
    EXPECT_EQ(run_quiet({no_market, std::string("solve-h"), std::nullopt, (d / "o").string()}, &err), 2);
    EXPECT_EQ(run_quiet({no_seed, std::string("nonsense"), std::uint64_t{1}, (d / "o").string()}, &err), 2);
}

TEST(Run, AssumptionFailureExitsThreeUnlessAllowed) {
    const fs::path d = temp_dir("assume");
    const std::string cfg = write_config(d, replace(kSmall, "alpha = affine 0.10 0.02", "alpha = constant 0.01"));
    std::string err;
    RunOptions o{cfg, std::string("solve-h"), std::nullopt, (d / "o").string()};
    EXPECT_EQ(run_quiet(o, &err), 3);
    EXPECT_NE(err.find("FAIL assumption mu > 0"), std::string::npos);
    o.allow_assumption_failures = true;
    EXPECT_EQ(run_quiet(o), 0);
    EXPECT_TRUE(fs::exists(d / "o" / "h_grid.csv"));
}

TEST(Run, ExampleModeWritesComparisonTable) {
    const fs::path d = temp_dir("example");
    const std::string cfg = write_config(d, kSmall);
    ASSERT_EQ(run_quiet({cfg, std::string("example"), std::nullopt, (d / "o").string()}), 0);
    std::istringstream in(slurp(d / "o" / "example_comparison.csv"));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line.rfind("# config_hash=", 0), 0u);
    EXPECT_NE(line.find("seed=11"), std::string::npos);
    std::getline(in, line);
    EXPECT_EQ(line, "y,pi_foc,pi_printed,pi_generic,abs_generic_minus_foc,gamma_y_equals_delta\r");
    int rows = 0, coincide = 0;
    while (std::getline(in, line)) {
        ++rows;
        coincide += line.back() == '\r' && line[line.size() - 2] == '1';
    }
    EXPECT_EQ(rows, 6);
    EXPECT_EQ(coincide, 1);  // y = 1 with gamma = delta = 0.5
    EXPECT_TRUE(fs::exists(d / "o" / "example_adjoint.csv"));
}

TEST(Run, SameSeedGivesByteIdenticalOutputs) {
    const fs::path d = temp_dir("determinism");
    const std::string cfg = write_config(d, kSmall);
    for (const char* o : {"a", "b"})
        ASSERT_EQ(run_quiet({cfg, std::string("simulate"), std::nullopt, (d / o).string()}), 0);
    ASSERT_EQ(run_quiet({cfg, std::string("example"), std::nullopt, (d / "a").string()}), 0);
    ASSERT_EQ(run_quiet({cfg, std::string("example"), std::nullopt, (d / "b").string()}), 0);
    for (const char* f : {"h_grid.csv", "paths_summary.csv", "performance.csv", "example_comparison.csv",
                          "example_adjoint.csv"}) {
        const std::string a = slurp(d / "a" / f);
        EXPECT_FALSE(a.empty()) << f;
        EXPECT_EQ(a, slurp(d / "b" / f)) << f;
    }
    ASSERT_EQ(run_quiet({cfg, std::string("simulate"), std::uint64_t{12}, (d / "c").string()}), 0);
    EXPECT_NE(slurp(d / "a" / "performance.csv"), slurp(d / "c" / "performance.csv"));
}

TEST(Run, MertonVerifyPasses) {
    const fs::path d = temp_dir("merton");
    RunOptions o{std::string(JUMPVOL_SCENARIO_DIR) + "/merton.ini", std::nullopt, std::nullopt, (d / "o").string()};
    ASSERT_EQ(run_quiet(o), 0);
    const std::string report = slurp(d / "o" / "verification_report.txt");
    EXPECT_EQ(report.find("FAIL"), std::string::npos);
    EXPECT_NE(report.find("PASS adjoint martingale [0,1]"), std::string::npos);
    EXPECT_NE(report.find("PASS necessary condition detects"), std::string::npos);
}

TEST(Csv, QuotingAndHash) {
    EXPECT_EQ(csv_field("plain"), "plain");
    EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
    EXPECT_EQ(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
    EXPECT_EQ(csv_field("two\nlines"), "\"two\nlines\"");
    EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(hex64(255), "00000000000000ff");
    EXPECT_EQ(fmt(0.1), "0.1");
    EXPECT_EQ(fmt(std::nan("")), "nan");
}

TEST(Csv, RowWidthChecked) {
    const fs::path d = temp_dir("csv");
    CsvWriter w((d / "x.csv").string(), "stamp", {"a", "b"});
    EXPECT_THROW(w.row({"1"}), InputError);
}
