#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include <gtest/gtest.h>
#include <json.hpp>

#include "dido/commands.hpp"
#include "dido/log_io.hpp"

using namespace dido;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dido_cmd_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  std::ofstream(dir / "run.toml") << text;
  return dir / "run.toml";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

int guarded(const std::function<int()>& f) {
  std::ostringstream err;
  return run_guarded(f, err);
}

constexpr const char* kExcited = R"(
seed = 5
[sim]
trajectory = "random"
duration = 10.0
max_speed = 2.0
trajectory_seed = 3
[params]
tau = 1.3
d = [0.1, 0.1, 0.05]
t_IB = [0.02, -0.01, 0.03]
[filter.init]
tau = 1.3
d = [0.1, 0.1, 0.05]
t_IB = [0.02, -0.01, 0.03]
[providers.vp]
sigma_v = 0.0
sigma_p = 0.0
)";

}  // namespace

TEST(CmdSimulate, HoverFiveSecondsAt400Hz) {
  const fs::path d = scratch("sim_hover");
  CommandOptions o;
  o.config = write_config(d, "[sim]\ntrajectory = \"hover\"\nduration = 5.0\n");
  o.out = d / "log";
  std::ostringstream log;
  ASSERT_EQ(cmd_simulate(o, log), kExitOk);
  EXPECT_EQ(read_csv(o.out / "imu.csv", imu_header()).rows.size(), 2000u);
  EXPECT_TRUE(fs::exists(o.out / "rotor.csv"));
  EXPECT_TRUE(fs::exists(o.out / "truth.csv"));
  EXPECT_TRUE(fs::exists(o.out / "config.toml"));
}

TEST(CmdSimulate, SameSeedSameFiles) {
  const fs::path d = scratch("sim_det");
  CommandOptions o;
  o.config = write_config(d, "[sim]\ntrajectory = \"figure8\"\nduration = 3.0\n"
                             "[noise]\nsigma_accel = [0.05, 0.05, 0.05]\n");
  std::ostringstream log;
  o.out = d / "a";
  ASSERT_EQ(cmd_simulate(o, log), kExitOk);
  o.out = d / "b";
  ASSERT_EQ(cmd_simulate(o, log), kExitOk);
  o.out = d / "c";
  o.seed = 99;
  ASSERT_EQ(cmd_simulate(o, log), kExitOk);
  for (const char* f : {"imu.csv", "rotor.csv", "truth.csv", "config.toml"})
    EXPECT_EQ(slurp(d / "a" / f), slurp(d / "b" / f)) << f;
  EXPECT_NE(slurp(d / "a" / "imu.csv"), slurp(d / "c" / "imu.csv"));
}

TEST(CmdEstimate, ZeroNoiseOracleSummary) {
  const fs::path d = scratch("est");
  CommandOptions o;
  o.config = write_config(d, kExcited);
  o.out = d / "log";
  std::ostringstream log;
  ASSERT_EQ(cmd_simulate(o, log), kExitOk);
  o.out = d / "est";
  ASSERT_EQ(cmd_estimate(d / "log", o, log), kExitOk);
  const json s = read_json(o.out / "summary.json");
  EXPECT_EQ(s["status"], "ok");
  EXPECT_LT(s["metrics"]["ate"].get<double>(), 1e-3);
  EXPECT_NEAR(s["final"]["tau"].get<double>(), 1.3, 1e-3);
  const CsvTable est = read_csv(o.out / "estimate.csv", estimate_header());
  EXPECT_EQ(est.rows.size(), 4000u);
  EXPECT_TRUE(fs::exists(o.out / "forces.csv"));

  // evaluate against the same log reproduces the summary ATE
  o.out = d / "eval";
  ASSERT_EQ(cmd_evaluate(d / "est" / "estimate.csv", d / "log", o, log), kExitOk);
  const json m = read_json(o.out / "metrics.json");
  EXPECT_NEAR(m["ate"].get<double>(), s["metrics"]["ate"].get<double>(), 1e-12);
  EXPECT_TRUE(m.contains("afe"));
}

TEST(CmdEstimate, MissingRotorIsUsageError) {
  const fs::path d = scratch("norotor");
  CommandOptions o;
  o.config = write_config(d, "[sim]\nduration = 1.0\n");
  o.out = d / "log";
  std::ostringstream log;
  ASSERT_EQ(cmd_simulate(o, log), kExitOk);
  fs::remove(d / "log" / "rotor.csv");
  o.out = d / "est";
  EXPECT_EQ(guarded([&] { return cmd_estimate(d / "log", o, log); }), kExitUsage);
}

TEST(CmdEstimate, BadConfigIsUsageError) {
  const fs::path d = scratch("badcfg");
  CommandOptions o;
  o.config = write_config(d, "[filter]\nsigma_acel = 0.1\n");
  std::ostringstream log;
  EXPECT_EQ(guarded([&] { return cmd_simulate(o, log); }), kExitUsage);
  o.config = d / "absent.toml";
  EXPECT_EQ(guarded([&] { return cmd_simulate(o, log); }), kExitUsage);
}

TEST(CmdSimulate, DivergenceExitCode) {
  const fs::path d = scratch("diverge");
  CommandOptions o;
  o.config = write_config(d, "[sim]\ntrajectory = \"random\"\nmax_speed = 3.0\ndivergence_radius = 0.01\n");
  o.out = d / "log";
  std::ostringstream log;
  EXPECT_EQ(guarded([&] { return cmd_simulate(o, log); }), kExitSimDiverged);
}

TEST(CmdEvaluate, IdenticalFilesGiveZero) {
  const fs::path d = scratch("eval_same");
  const std::vector<std::string>& h = estimate_header();
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 50; ++i) {
    std::vector<double> r(h.size(), 0.0);
    r[0] = 0.01 * i;
    r[1] = 1.0;
    r[5] = 0.1 * i;
    r[17] = 1.0;
    rows.push_back(r);
  }
  write_csv(d / "estimate.csv", h, rows);
  std::vector<std::vector<double>> truth;
  for (const auto& r : rows) {
    std::vector<double> t(truth_header().size(), 0.0);
    t[0] = r[0];
    t[1] = 1.0;
    t[5] = r[5];
    truth.push_back(t);
  }
  write_csv(d / "truth.csv", truth_header(), truth);
  CommandOptions o;
  o.out = d / "out";
  std::ostringstream log;
  ASSERT_EQ(cmd_evaluate(d / "estimate.csv", d / "truth.csv", o, log), kExitOk);
  const json m = read_json(o.out / "metrics.json");
  for (const char* k : {"ate", "are", "rte", "rre", "td", "rd"}) EXPECT_EQ(m[k].get<double>(), 0.0) << k;
}

TEST(CmdParamStudy, ZeroPerturbationStaysPut) {
  const fs::path d = scratch("ps_zero");
  CommandOptions o;
  o.config = write_config(d, std::string(kExcited) +
                                 "[study]\nruns = 2\nperturb_tau = 0.0\nperturb_d = 0.0\n"
                                 "[noise]\nsigma_accel = [0.05, 0.05, 0.05]\nsigma_gyro = [0.001, 0.001, 0.001]\n");
  o.out = d / "out";
  std::ostringstream log;
  ASSERT_EQ(cmd_param_study({}, o, log), kExitOk);
  const json j = read_json(o.out / "param_study.json");
  ASSERT_EQ(j["runs"].size(), 2u);
  for (const auto& r : j["runs"]) {
    EXPECT_LT(r["tau_rel_error"].get<double>(), 0.005);
    for (const auto& e : r["d_abs_error"]) EXPECT_LT(e.get<double>(), 0.01);
  }
  EXPECT_GT(read_csv(o.out / "param_traces.csv").rows.size(), 2u);
}

TEST(CmdMcConsistency, WritesBandAndTrace) {
  const fs::path d = scratch("mc");
  CommandOptions o;
  o.config = write_config(d, "[sim]\ntrajectory = \"circle\"\nduration = 3.0\n"
                             "[noise]\nsigma_accel = [0.05, 0.05, 0.05]\n");
  o.runs = 2;
  o.out = d / "out";
  std::ostringstream log;
  ASSERT_EQ(cmd_mc_consistency(o, log), kExitOk);
  const json j = read_json(o.out / "mc_consistency.json");
  EXPECT_EQ(j["runs"].get<int>(), 2);
  EXPECT_EQ(j["dof"].get<int>(), 6);
  EXPECT_LT(j["band"][0].get<double>(), 6.0);
  EXPECT_GT(j["band"][1].get<double>(), 6.0);
  EXPECT_TRUE(fs::exists(o.out / "nees.csv"));
}

TEST(CmdGradcheck, PassesAndWritesReport) {
  const fs::path d = scratch("gc");
  CommandOptions o;
  o.out = d;
  std::ostringstream log;
  EXPECT_EQ(cmd_gradcheck(o, log), kExitOk);
  EXPECT_LT(read_json(d / "gradcheck.json")["max_rel_error"].get<double>(), 1e-5);
}

#ifdef DIDO_CLI_PATH
TEST(Cli, ExitCodes) {
  const fs::path d = scratch("cli");
  const std::string cli = DIDO_CLI_PATH;
  auto run = [&](const std::string& args) {
    const int rc = std::system((cli + " " + args + " > " + (d / "stdout.txt").string() + " 2>&1").c_str());
    return WEXITSTATUS(rc);
  };
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("fly"), 1);
  std::ofstream(d / "hover.toml") << "[sim]\ntrajectory = \"hover\"\nduration = 2.0\n";
  EXPECT_EQ(run("simulate --config " + (d / "hover.toml").string() + " --out " + (d / "log").string()), 0);
  EXPECT_EQ(read_csv(d / "log" / "imu.csv").rows.size(), 800u);
  EXPECT_EQ(run("estimate " + (d / "log").string() + " --config " + (d / "hover.toml").string() +
                " --out " + (d / "est").string()),
            0);
  EXPECT_TRUE(fs::exists(d / "est" / "summary.json"));
  fs::remove(d / "log" / "rotor.csv");
  EXPECT_EQ(run("estimate " + (d / "log").string() + " --out " + (d / "est2").string()), 1);
}
#endif
