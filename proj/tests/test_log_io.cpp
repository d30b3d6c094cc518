#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include "dido/errors.hpp"
#include "dido/log_io.hpp"

using namespace dido;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dido_log_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

FlightLog noisy_log(std::uint64_t seed) {
  TrajectorySpec s;
  s.kind = TrajectoryKind::Circle;
  s.duration = 2.0;
  NoiseSpec n;
  n.sigma_gyro = Vec3::Constant(1e-3);
  n.sigma_accel = Vec3::Constant(0.05);
  n.b_gyro0 = Vec3(0.01, -0.02, 0.005);
  DynParams p;
  p.t_IB = Vec3(0.02, 0.0, -0.01);
  return simulate_flight(p, s, ResidualModel::zero(), n, SimOptions{}, seed);
}

}  // namespace

TEST(FormatDouble, RoundTrips) {
  for (double x : {0.0, -0.0, 1.0 / 3.0, 9.8, 1e-300, -123456.789e10,
                   std::numeric_limits<double>::max(), std::numeric_limits<double>::denorm_min()}) {
    EXPECT_EQ(std::strtod(format_double(x).c_str(), nullptr), x) << format_double(x);
  }
}

TEST(Csv, WriteReadRoundTrip) {
  const fs::path d = scratch("csv");
  write_csv(d / "a.csv", {"x", "y"}, {{1.0, 2.5}, {-3.0, 1.0 / 7.0}});
  const CsvTable t = read_csv(d / "a.csv", {"x", "y"});
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[1][1], 1.0 / 7.0);
}

TEST(Csv, Errors) {
  const fs::path d = scratch("csv_err");
  EXPECT_THROW(read_csv(d / "missing.csv"), IoError);
  write_csv(d / "a.csv", {"x", "y"}, {{1.0, 2.0}});
  EXPECT_THROW(read_csv(d / "a.csv", {"x", "z"}), IoError);
  std::ofstream(d / "ragged.csv") << "x,y\n1,2\n3\n";
  EXPECT_THROW(read_csv(d / "ragged.csv"), IoError);
  std::ofstream(d / "bad.csv") << "x,y\n1,abc\n";
  EXPECT_THROW(read_csv(d / "bad.csv"), IoError);
}

TEST(FlightLogIo, RoundTripPreservesStreams) {
  const FlightLog log = noisy_log(3);
  const fs::path d = scratch("rt");
  write_flight_log(d, log);
  const FlightLog back = read_flight_log(d);
  ASSERT_EQ(back.imu.size(), log.imu.size());
  ASSERT_EQ(back.rotors.size(), log.rotors.size());
  ASSERT_EQ(back.truth.size(), log.truth.size());
  for (std::size_t i = 0; i < log.imu.size(); ++i) {
    EXPECT_EQ(back.imu[i].t, log.imu[i].t);
    EXPECT_EQ(back.imu[i].accel, log.imu[i].accel);
    EXPECT_EQ(back.imu[i].gyro, log.imu[i].gyro);
    EXPECT_EQ(back.truth[i].p_GB, log.truth[i].p_GB);
    EXPECT_EQ(back.truth[i].v_GB, log.truth[i].v_GB);
    EXPECT_EQ(back.truth[i].b_gyro, log.truth[i].b_gyro);
  }
  for (std::size_t i = 0; i < log.rotors.size(); ++i) EXPECT_EQ(back.rotors[i].u.u, log.rotors[i].u.u);
}

TEST(FlightLogIo, SameSeedSameBytes) {
  const fs::path a = scratch("bytes_a"), b = scratch("bytes_b");
  write_flight_log(a, noisy_log(5));
  write_flight_log(b, noisy_log(5));
  for (const char* f : {"imu.csv", "rotor.csv", "truth.csv"}) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST(FlightLogIo, TruthOptional) {
  const fs::path d = scratch("notruth");
  write_flight_log(d, noisy_log(1));
  fs::remove(d / "truth.csv");
  EXPECT_THROW(read_flight_log(d, true), IoError);
  const FlightLog log = read_flight_log(d, false);
  EXPECT_TRUE(log.truth.empty());
  EXPECT_FALSE(log.imu.empty());
}

TEST(FlightLogIo, MissingRotorIsIoError) {
  const fs::path d = scratch("norotor");
  write_flight_log(d, noisy_log(1));
  fs::remove(d / "rotor.csv");
  EXPECT_THROW(read_flight_log(d, false), IoError);
}
