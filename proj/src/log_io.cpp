#include "dido/log_io.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "dido/errors.hpp"

namespace dido {

namespace fs = std::filesystem;

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string strip(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && s[i] == ' ') ++i;
  return s.substr(i);
}

}  // namespace

CsvTable read_csv(const fs::path& path, const std::vector<std::string>& expected_header) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + ": missing header row");
  for (auto& h : split(line)) table.header.push_back(strip(h));
  if (!expected_header.empty() && table.header != expected_header) {
    throw IoError(path.string() + ": unexpected header");
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip(line);
    if (line.empty()) continue;
    const auto fields = split(line);
    if (fields.size() != table.header.size()) {
      throw IoError(path.string() + ": wrong field count on line " + std::to_string(lineno));
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) {
      const std::string s = strip(f);
      char* end = nullptr;
      errno = 0;
      const double x = std::strtod(s.c_str(), &end);
      if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE) {
        throw IoError(path.string() + ": bad number '" + s + "' on line " +
                      std::to_string(lineno));
      }
      row.push_back(x);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << format_double(r[i]);
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

const std::vector<std::string>& imu_header() {
  static const std::vector<std::string> h{"t", "gx", "gy", "gz", "ax", "ay", "az"};
  return h;
}

const std::vector<std::string>& rotor_header() {
  static const std::vector<std::string> h{"t", "u1", "u2", "u3", "u4"};
  return h;
}

const std::vector<std::string>& truth_header() {
  static const std::vector<std::string> h{"t",   "qw",  "qx",  "qy",  "qz",  "px",  "py",
                                          "pz",  "vx",  "vy",  "vz",  "bgx", "bgy", "bgz",
                                          "bax", "bay", "baz", "frx", "fry", "frz"};
  return h;
}

void write_flight_log(const fs::path& dir, const FlightLog& log) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  std::vector<std::vector<double>> rows;
  rows.reserve(log.imu.size());
  for (const auto& s : log.imu) {
    rows.push_back({s.t, s.gyro.x(), s.gyro.y(), s.gyro.z(), s.accel.x(), s.accel.y(),
                    s.accel.z()});
  }
  write_csv(dir / "imu.csv", imu_header(), rows);

  rows.clear();
  for (const auto& s : log.rotors) rows.push_back({s.t, s.u.u[0], s.u.u[1], s.u.u[2], s.u.u[3]});
  write_csv(dir / "rotor.csv", rotor_header(), rows);

  rows.clear();
  for (const auto& s : log.truth) {
    rows.push_back({s.t, s.q_GI.w(), s.q_GI.x(), s.q_GI.y(), s.q_GI.z(), s.p_GB.x(), s.p_GB.y(),
                    s.p_GB.z(), s.v_GB.x(), s.v_GB.y(), s.v_GB.z(), s.b_gyro.x(), s.b_gyro.y(),
                    s.b_gyro.z(), s.b_accel.x(), s.b_accel.y(), s.b_accel.z(), s.f_res.x(),
                    s.f_res.y(), s.f_res.z()});
  }
  write_csv(dir / "truth.csv", truth_header(), rows);
}

FlightLog read_flight_log(const fs::path& dir, bool require_truth) {
  FlightLog log;
  const auto imu = read_csv(dir / "imu.csv", imu_header());
  for (const auto& r : imu.rows) {
    log.imu.push_back({r[0], Vec3(r[1], r[2], r[3]), Vec3(r[4], r[5], r[6])});
  }
  const auto rot = read_csv(dir / "rotor.csv", rotor_header());
  for (const auto& r : rot.rows) {
    RotorSample s;
    s.t = r[0];
    s.u.u = {r[1], r[2], r[3], r[4]};
    log.rotors.push_back(s);
  }
  if (require_truth || fs::exists(dir / "truth.csv")) {
    const auto tru = read_csv(dir / "truth.csv", truth_header());
    for (const auto& r : tru.rows) {
      TruthSample s;
      s.t = r[0];
      try {
        s.q_GI = UnitQuaternion(r[1], r[2], r[3], r[4]);
      } catch (const std::invalid_argument&) {
        throw IoError("truth.csv: invalid quaternion at t=" + format_double(r[0]));
      }
      s.p_GB = Vec3(r[5], r[6], r[7]);
      s.v_GB = Vec3(r[8], r[9], r[10]);
      s.b_gyro = Vec3(r[11], r[12], r[13]);
      s.b_accel = Vec3(r[14], r[15], r[16]);
      s.f_res = Vec3(r[17], r[18], r[19]);
      log.truth.push_back(s);
    }
    const std::size_t n = log.truth.size();
    if (n == log.imu.size()) {
      for (std::size_t i = 0; i < n; ++i) log.truth[i].omega_I = log.imu[i].gyro - log.truth[i].b_gyro;
    }
    for (std::size_t i = 0; n >= 2 && i < n; ++i) {
      const std::size_t a = i == 0 ? 0 : i - 1;
      const std::size_t b = i + 1 == n ? n - 1 : i + 1;
      const double h = log.truth[b].t - log.truth[a].t;
      log.truth[i].a_GB = (log.truth[b].v_GB - log.truth[a].v_GB) / h;
      log.truth[i].alpha_I = (log.truth[b].omega_I - log.truth[a].omega_I) / h;
    }
  }
  try {
    log.validate();
  } catch (const std::invalid_argument& e) {
    throw IoError(dir.string() + ": " + e.what());
  }
  return log;
}

}  // namespace dido
