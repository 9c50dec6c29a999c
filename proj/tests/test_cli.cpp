#include <sysid/experiment.hpp>

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace sysid;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / ("sysid_cli_" + std::string(info->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    fs::path write(const std::string& name, const std::string& text) const {
        const auto path = dir_ / name;
        std::ofstream(path, std::ios::binary) << text;
        return path;
    }

    cli::ExperimentConfig config(const std::string& text, const std::string& out = "out") const {
        auto cfg = cli::load_config(write("config.json", text));
        cfg.output = (dir_ / out).string();
        return cfg;
    }

    fs::path dir_;
};

std::string slurp(const fs::path& p) { return io::read_file(p); }

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

// Unit-gain, well-behaved (n=3, m=p=2) system.
const std::string explicit_system = R"("system": {
        "A": [[0.5, 0.3, 0.0], [0.0, 0.4, 0.2], [0.0, 0.0, -0.3]],
        "B": [[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]],
        "C": [[1.0, 0.0, 0.5], [0.0, 1.0, 0.0]],
        "D": [[0.0, 0.0], [0.0, 0.0]]})";

std::string error_of(const std::string& text) {
    try {
        cli::parse_config(text, "cfg.json");
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(ConfigParse, LinePreciseErrors) {
    EXPECT_NE(error_of("{\n  \"schema\": 1,\n  \"horizn\": 10\n}").find("cfg.json:3: horizn: unknown key"),
              std::string::npos);
    EXPECT_NE(error_of("{\n  \"schema\": 1,\n  \"system\": {\n    \"family\": \"nope\"\n  }\n}").find("cfg.json:4:"),
              std::string::npos);
    EXPECT_NE(error_of("{\n  \"schema\": 1,\n  \"noise\": {\"sigma_w\": \"big\"}\n}").find("cfg.json:3: noise.sigma_w"),
              std::string::npos);
    EXPECT_NE(error_of("{\n  \"schema\": 1,\n  \"horizon\": 10,\n}").find("cfg.json:4: invalid JSON"), std::string::npos);
    EXPECT_NE(error_of("{\"horizon\": 10}").find("schema"), std::string::npos);
    EXPECT_NE(error_of("{\"schema\": 2}").find("unsupported schema"), std::string::npos);
    EXPECT_NE(error_of("{\"schema\": 1, \"mode\": \"fast\"}").find("mode"), std::string::npos);
}

TEST(ConfigParse, HorizonZeroRejected) {
    EXPECT_NE(error_of("{\"schema\": 1,\n \"horizon\": 0}").find("cfg.json:2: horizon: must be >= 1"),
              std::string::npos);
}

TEST(ConfigParse, DefaultsAndEcho) {
    const auto cfg = cli::parse_config(R"({"schema": 1, "system": {"family": "appendix-scalar"}})");
    EXPECT_EQ(cfg.mode, Mode::practical);
    EXPECT_EQ(cfg.noise.sigma_w, 10.0);
    EXPECT_EQ(cfg.stabilizer.s, 2);
    const auto echo = cli::config_to_json(cfg);
    EXPECT_EQ(echo["mode"], "practical");
    EXPECT_EQ(echo["horizon"], 20000);
    EXPECT_TRUE(echo.contains("stabilizer"));
    const auto again = cli::parse_config(echo.dump());
    EXPECT_EQ(cli::config_to_json(again), echo);
}

TEST_F(CliTest, SimulateAppendixFormat) {
    const auto cfg = config(R"({"schema": 1, "horizon": 100, "system": {"family": "appendix-scalar"}})");
    std::ostringstream log;
    EXPECT_EQ(cli::cmd_simulate(cfg, log), 0);
    const auto csv = slurp(dir_ / "out" / "trajectory.csv");
    EXPECT_EQ(csv.substr(0, csv.find("\r\n")), "t,u_1,y_1");
    EXPECT_EQ(count_lines(csv), 102u);
    EXPECT_NE(csv.find("\r\n100,"), std::string::npos);
    const auto tr = io::trajectory_from_csv(csv);
    EXPECT_EQ(tr.T, 100);
    EXPECT_FALSE(fs::exists(dir_ / "out" / "trajectory.hidden.csv"));
}

TEST_F(CliTest, SimulateDeterministic) {
    const std::string text =
        R"({"schema": 1, "seed": 5, "horizon": 300, "write_hidden": true,
            "system": {"family": "random-stable", "n": 3, "m": 2, "p": 2},
            "noise": {"kind": "laplace", "sigma_w": 0.5, "sigma_z": 0.5, "sigma_x0": 1}})";
    std::ostringstream log;
    cli::cmd_simulate(config(text, "a"), log);
    cli::cmd_simulate(config(text, "b"), log);
    for (const char* f : {"trajectory.csv", "trajectory.hidden.csv", "system.json"})
        EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
    auto other = config(text, "c");
    other.seed = 6;
    cli::cmd_simulate(other, log);
    EXPECT_NE(slurp(dir_ / "a" / "trajectory.csv"), slurp(dir_ / "c" / "trajectory.csv"));
}

TEST_F(CliTest, IdentifyNoiseless) {
    const auto cfg = config(R"({"schema": 1, "seed": 3, "horizon": 100000, )" + explicit_system + R"(,
        "noise": {"sigma_w": 0, "sigma_z": 0},
        "stabilizer": {"s": 2}})");
    ASSERT_TRUE(condition_report(cli::make_system(cfg), 2, 100.0).well_behaved);
    std::ostringstream log;
    ASSERT_EQ(cli::cmd_identify(cfg, "", log), 0);
    const auto report = io::json::parse(slurp(dir_ / "out" / "report.json"));
    EXPECT_LE(report["markov_distance"].get<double>(), 0.1) << log.str();
    EXPECT_TRUE(report["stabilizer"]["feasible"].get<bool>());
    EXPECT_EQ(report["mode"], "practical");
    EXPECT_EQ(report["config"]["stabilizer"]["s"], 2);
    EXPECT_TRUE(report.contains("naive_markov_errors"));
    const auto real = io::system_from_json(io::json::parse(slurp(dir_ / "out" / "realization.json")));
    EXPECT_EQ(real.n(), 3);
    const auto markov = io::json::parse(slurp(dir_ / "out" / "markov.json"));
    EXPECT_EQ(markov["blocks"].size(), markov["k"].get<std::size_t>() + 1);
}

TEST_F(CliTest, IdentifyAppendixReportsBothEstimators) {
    const auto cfg = config(R"({"schema": 1, "horizon": 20000, "system": {"family": "appendix-scalar"},
        "stabilizer": {"s": 1}})");
    std::ostringstream log;
    ASSERT_EQ(cli::cmd_identify(cfg, "", log), 0);
    const auto report = io::json::parse(slurp(dir_ / "out" / "report.json"));
    EXPECT_EQ(report["markov_errors"].size(), report["naive_markov_errors"].size());
    EXPECT_TRUE(report.contains("max_markov_error"));
    EXPECT_TRUE(report.contains("naive_max_markov_error"));
}

TEST_F(CliTest, IdentifyFromTrajectoryFileWithNonzeroInitialState) {
    const std::string& sys_text = explicit_system;
    std::ostringstream log;
    cli::cmd_simulate(config(R"({"schema": 1, "horizon": 50000, )" + sys_text +
                                 R"(, "noise": {"sigma_w": 0.1, "sigma_z": 0.1, "sigma_x0": 5}})",
                             "sim"),
                      log);
    const auto cfg = config(R"({"schema": 1, )" + sys_text + R"(, "noise": {"sigma_w": 0.1, "sigma_z": 0.1},
        "stabilizer": {"s": 2}})");
    ASSERT_EQ(cli::cmd_identify(cfg, (dir_ / "sim" / "trajectory.csv").string(), log), 0);
    const auto report = io::json::parse(slurp(dir_ / "out" / "report.json"));
    EXPECT_LE(report["markov_distance"].get<double>(), 0.2);
    EXPECT_EQ(report["horizon"], 50000);
}

TEST_F(CliTest, TruncatedTrajectoryLeavesNoOutput) {
    std::ostringstream log;
    cli::cmd_simulate(config(R"({"schema": 1, "horizon": 12, "system": {"family": "jordan-integrator"}})", "sim"), log);
    const auto cfg = config(R"({"schema": 1, "system": {"family": "jordan-integrator"}, "stabilizer": {"s": 2}})");
    EXPECT_THROW(cli::cmd_identify(cfg, (dir_ / "sim" / "trajectory.csv").string(), log), PreconditionError);
    EXPECT_FALSE(fs::exists(dir_ / "out"));

    auto text = slurp(dir_ / "sim" / "trajectory.csv");
    text.resize(text.size() - 7);
    write("broken.csv", text);
    EXPECT_THROW(cli::cmd_identify(cfg, (dir_ / "broken.csv").string(), log), Error);
    EXPECT_FALSE(fs::exists(dir_ / "out"));
}

TEST_F(CliTest, LowerboundGrid) {
    const auto cfg = config(R"({"schema": 1, "lowerbound": {"deltas": [0, 1e-3, 1e-4], "horizons": [5, 10, 20]}})");
    std::ostringstream log;
    cli::cmd_lowerbound(cfg, log);
    const auto csv = slurp(dir_ / "out" / "lowerbound.csv");
    EXPECT_EQ(count_lines(csv), 10u);
    EXPECT_EQ(csv.substr(0, csv.find("\r\n")), "delta,T,mult_factor,paper_bound,markov_distance,parameter_gap");
    const auto j = io::json::parse(slurp(dir_ / "out" / "lowerbound.json"));
    ASSERT_EQ(j["rows"].size(), 9u);
    for (const auto& row : j["rows"]) {
        if (row["delta"].get<double>() == 0.0) {
            EXPECT_LE(row["mult_factor"].get<double>(), 1e-9);
        }
        if (row["delta"].get<double>() == 1e-3 && row["T"] == 10) {
            EXPECT_LE(row["mult_factor"].get<double>(), 0.066);
        }
    }
}

TEST(VarianceDemo, TrialCountsAgree) {
    const auto small = variance_blowup_experiment(100, 100, 21);
    const auto large = variance_blowup_experiment(100, 2000, 21);
    EXPECT_LE(std::abs(small.second_moment - large.second_moment), 0.3 * large.second_moment);
}

TEST_F(CliTest, VarianceDemoOutputs) {
    const auto cfg = config(R"({"schema": 1, "variance_demo": {"horizons": [100, 1000], "trials": 200,
        "stabilized_horizon": 100000}})");
    std::ostringstream log;
    cli::cmd_variance_demo(cfg, log);
    const auto csv = slurp(dir_ / "out" / "variance.csv");
    EXPECT_EQ(csv.substr(0, csv.find("\r\n")), "kind,T,trials,second_moment");
    EXPECT_EQ(count_lines(csv), 5u);
    const auto j = io::json::parse(slurp(dir_ / "out" / "variance_summary.json"));
    EXPECT_LE(j["long_run"]["stabilized_abs_error_X1"].get<double>(), 0.5);
    for (const auto& row : j["rows"])
        if (row["kind"] == "naive") {
            EXPECT_GE(row["second_moment"].get<double>(), 15.0);
        }
}

TEST_F(CliTest, ProbeOutputs) {
    const auto cfg = config(R"({"schema": 1, "system": {"family": "jordan-integrator"},
        "probe": {"kinds": ["gaussian", "rademacher"], "samples": 20000}})");
    std::ostringstream log;
    cli::cmd_probe(cfg, log);
    const auto j = io::json::parse(slurp(dir_ / "out" / "probe.json"));
    ASSERT_EQ(j["distributions"].size(), 2u);
    for (const auto& d : j["distributions"]) EXPECT_TRUE(d["within_bound"].get<bool>());
    EXPECT_EQ(j["power_norm"].size(), 3u);
    EXPECT_TRUE(j["condition"].contains("kappa_obs"));
}

#ifdef SYSID_CLI_PATH
TEST_F(CliTest, BinaryExitCodes) {
    const auto good = write("good.json", R"({"schema": 1, "horizon": 50, "system": {"family": "appendix-scalar"}})");
    const auto bad = write("bad.json", "{\n \"schema\": 1,\n \"horizon\": 0\n}");
    const std::string bin = SYSID_CLI_PATH;
    const auto run = [&](const std::string& args) {
        const int rc = std::system((bin + " " + args + " > " + (dir_ / "log.txt").string() + " 2>&1").c_str());
        return WEXITSTATUS(rc);
    };
    EXPECT_EQ(run("simulate --config " + good.string() + " --seed 9 --out " + (dir_ / "x").string()), 0);
    EXPECT_TRUE(fs::exists(dir_ / "x" / "trajectory.csv"));
    EXPECT_EQ(run("simulate --config " + bad.string() + " --out " + (dir_ / "y").string()), 2);
    EXPECT_NE(slurp(dir_ / "log.txt").find("bad.json:3: horizon"), std::string::npos);
    EXPECT_FALSE(fs::exists(dir_ / "y"));
    EXPECT_NE(run("frobnicate --config " + good.string()), 0);
    EXPECT_EQ(run("simulate --config " + good.string() + " --seed 9 --out " + (dir_ / "z").string()), 0);
    EXPECT_EQ(slurp(dir_ / "x" / "trajectory.csv"), slurp(dir_ / "z" / "trajectory.csv"));
}
#endif
