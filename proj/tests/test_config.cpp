#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "dido/config.hpp"
#include "dido/errors.hpp"

using namespace dido;
namespace fs = std::filesystem;

TEST(ConfigDocument, ParsesSectionsAndValues) {
  const ConfigDocument d = ConfigDocument::parse(R"(
seed = 7   # trailing comment
[sim]
trajectory = "random"
duration = 12.5
[filter.init]
tau = 1.1
d = [0.1, 0.2, 0.0]
[providers.vp]
vnet = ["a.json", "b.json", "c.json"]
[filter]
gate = true
)");
  EXPECT_EQ(std::get<double>(d.values.at("seed")), 7.0);
  EXPECT_EQ(std::get<std::string>(d.values.at("sim.trajectory")), "random");
  EXPECT_EQ(std::get<std::vector<double>>(d.values.at("filter.init.d")).size(), 3u);
  EXPECT_EQ(std::get<std::vector<std::string>>(d.values.at("providers.vp.vnet"))[1], "b.json");
  EXPECT_TRUE(std::get<bool>(d.values.at("filter.gate")));
}

TEST(ConfigDocument, RejectsBadSyntax) {
  EXPECT_THROW(ConfigDocument::parse("a = 1\na = 2\n"), ConfigError);
  EXPECT_THROW(ConfigDocument::parse("[sim\nx = 1\n"), ConfigError);
  EXPECT_THROW(ConfigDocument::parse("x = \n"), ConfigError);
  EXPECT_THROW(ConfigDocument::parse("x = \"unterminated\n"), ConfigError);
  try {
    ConfigDocument::parse("a = 1\n\nb = [1, 2\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(ParseConfig, UnknownKeyRejected) {
  EXPECT_THROW(parse_config("[sim]\nduraton = 3\n"), ConfigError);
  EXPECT_THROW(parse_config("[simulation]\nduration = 3\n"), ConfigError);
  EXPECT_THROW(parse_config("seed = \"one\"\n"), ConfigError);
  EXPECT_THROW(parse_config("[sim]\ntrajectory = \"spiral\"\n"), ConfigError);
}

TEST(ParseConfig, AppliesOverDefaults) {
  const RunConfig c = parse_config(R"(
seed = 42
[sim]
trajectory = "circle"
radius = 2.0
[params]
tau = 1.3
t_IB = [0.01, 0.02, 0.03]
[filter]
sigma_accel = 0.1
[providers.debias]
mode = "null"
)");
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.sim.trajectory.kind, TrajectoryKind::Circle);
  EXPECT_EQ(c.sim.trajectory.radius, 2.0);
  EXPECT_EQ(c.params.tau, 1.3);
  EXPECT_EQ(c.params.t_IB, Vec3(0.01, 0.02, 0.03));
  EXPECT_EQ(c.filter.sigma_accel, 0.1);
  EXPECT_EQ(c.providers.debias.mode, ProviderMode::Null);
  EXPECT_EQ(c.filter.sigma_gyro, FilterConfig{}.sigma_gyro);
}

TEST(ParseConfig, RoundTripThroughToml) {
  RunConfig c = parse_config(R"(
seed = 9
[sim]
trajectory = "random"
max_speed = 2.5
trajectory_seed = 11
[noise]
sigma_accel = [0.05, 0.05, 0.06]
b_gyro0 = [0.001, 0.0, -0.002]
[params]
q_IB = [0.99, 0.01, 0.02, 0.1]
[filter]
attitude_coupling_s = 1.5
[study]
runs = 4
)");
  sync_derived(c);
  const std::string text = to_toml(c);
  const RunConfig back = parse_config(text);
  EXPECT_EQ(to_toml(back), text);
  EXPECT_EQ(back.seed, 9u);
  EXPECT_EQ(back.sim.trajectory.seed, 11u);
  EXPECT_EQ(back.noise.sigma_accel, c.noise.sigma_accel);
  EXPECT_EQ(back.params.q_IB.coeffs(), c.params.q_IB.coeffs());
  EXPECT_EQ(back.filter.attitude_coupling_s, 1.5);
  EXPECT_EQ(back.study.runs, 4u);
}

TEST(ParseConfig, ValidationFailures) {
  RunConfig c = parse_config("[params]\nmass = 1.0\n");
  EXPECT_NO_THROW(c.validate());
  c.sim.trajectory.duration = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(parse_config("[study]\nperturb_tau = 1.5\n").validate(), ConfigError);
  EXPECT_THROW(parse_config("[providers.residual]\nmode = \"neural\"\n").validate(), ConfigError);
}

TEST(SyncDerived, FollowsParams) {
  RunConfig c;
  c.params.mass = 1.7;
  c.params.t_IB = Vec3(0.1, 0.0, 0.0);
  sync_derived(c);
  EXPECT_EQ(c.filter.mass, 1.7);
  EXPECT_EQ(c.providers.vp.truth_t_IB, Vec3(0.1, 0.0, 0.0));
}

TEST(LoadConfig, ResolvesWeightPathsAndMissingFiles) {
  const fs::path dir = fs::temp_directory_path() / "dido_cfg";
  fs::create_directories(dir);
  std::ofstream(dir / "run.toml") << "[providers.residual]\nweights = \"nets/res.json\"\n";
  const RunConfig c = load_config(dir / "run.toml");
  EXPECT_EQ(c.providers.residual.weights, dir / "nets/res.json");
  const RunConfig w = load_config(dir / "run.toml", "/opt/w");
  EXPECT_EQ(w.providers.residual.weights, fs::path("/opt/w/nets/res.json"));
  EXPECT_THROW(load_config(dir / "missing.toml"), Error);
}

TEST(TrajectoryKindNames, RoundTrip) {
  for (auto k : {TrajectoryKind::Hover, TrajectoryKind::Circle, TrajectoryKind::Figure8,
                 TrajectoryKind::Random, TrajectoryKind::Vertical})
    EXPECT_EQ(parse_trajectory_kind(to_string(k)), k);
}
