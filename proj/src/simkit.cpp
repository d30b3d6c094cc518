#include "dido/simkit.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "dido/errors.hpp"
#include "dido/rng.hpp"

namespace dido {

// ---------------------------------------------------------------------------
// FlightLog

std::size_t FlightLog::index_at(double t) const {
  if (imu.empty()) throw RangeError("FlightLog::index_at: empty log");
  auto it = std::lower_bound(imu.begin(), imu.end(), t,
                             [](const ImuSample& s, double tt) { return s.t < tt; });
  if (it == imu.end()) return imu.size() - 1;
  const auto i = static_cast<std::size_t>(it - imu.begin());
  if (i > 0 && std::abs(imu[i - 1].t - t) <= std::abs(it->t - t)) return i - 1;
  return i;
}

const RotorSample& FlightLog::rotor_at(double t) const {
  if (rotors.empty()) throw RangeError("FlightLog::rotor_at: no rotor samples");
  auto it = std::upper_bound(rotors.begin(), rotors.end(), t + 1e-12,
                             [](double tt, const RotorSample& s) { return tt < s.t; });
  if (it == rotors.begin()) return rotors.front();
  return *(it - 1);
}

double FlightLog::imu_dt() const {
  if (imu.size() < 2) throw InsufficientData("FlightLog::imu_dt: fewer than 2 samples");
  return (imu.back().t - imu.front().t) / static_cast<double>(imu.size() - 1);
}

void FlightLog::validate() const {
  auto check_increasing = [](const auto& seq, const char* name) {
    for (std::size_t i = 1; i < seq.size(); ++i) {
      if (!(seq[i].t > seq[i - 1].t)) {
        std::ostringstream os;
        os << "FlightLog: " << name << " timestamps not strictly increasing at row " << i;
        throw std::invalid_argument(os.str());
      }
    }
  };
  check_increasing(imu, "imu");
  check_increasing(rotors, "rotor");
  check_increasing(truth, "truth");
  if (!truth.empty() && truth.size() != imu.size()) {
    throw std::invalid_argument("FlightLog: truth and imu lengths differ");
  }
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (std::abs(truth[i].t - imu[i].t) > 1e-9) {
      throw std::invalid_argument("FlightLog: truth not sampled at imu timestamps");
    }
  }
}

// ---------------------------------------------------------------------------
// Models

Vec3 ResidualModel::eval(const Vec3& v_B) const {
  switch (kind) {
    case Kind::Zero: return Vec3::Zero();
    case Kind::Constant: return c;
    case Kind::QuadDrag: return -k * v_B.norm() * v_B;
  }
  return Vec3::Zero();
}

void NoiseSpec::validate() const {
  for (const Vec3* s : {&sigma_gyro, &sigma_accel, &sigma_bg_walk, &sigma_ba_walk}) {
    if ((s->array() < 0.0).any() || !s->allFinite())
      throw std::invalid_argument("NoiseSpec: standard deviations must be finite and >= 0");
  }
  if (!b_gyro0.allFinite() || !b_accel0.allFinite())
    throw std::invalid_argument("NoiseSpec: initial biases not finite");
}

namespace {

struct StateDot {
  Vec3 p, v;
  Vec4 q;
  Vec3 w;
};

StateDot derivative(const Vec3& v, const Vec4& qc, const Vec3& w, const DynParams& params,
                    const RotorSpeeds& u, const ResidualModel& res, const Vec3& omega_cmd,
                    double k_rate) {
  const UnitQuaternion q(qc);
  const Vec3 v_B = q.matrix().transpose() * v;
  StateDot d;
  d.p = v;
  d.v = accel_world(params, q, u, v, res.eval(v_B));
  // q_dot = 0.5 q (x) [0, w]
  d.q << -qc[1] * w.x() - qc[2] * w.y() - qc[3] * w.z(),
      qc[0] * w.x() + qc[2] * w.z() - qc[3] * w.y(),
      qc[0] * w.y() - qc[1] * w.z() + qc[3] * w.x(),
      qc[0] * w.z() + qc[1] * w.y() - qc[2] * w.x();
  d.q *= 0.5;
  d.w = k_rate * (omega_cmd - w);
  return d;
}

}  // namespace

RigidState step_rk4(const RigidState& s, const DynParams& params, const RotorSpeeds& u,
                    const ResidualModel& res, const Vec3& omega_cmd, double k_rate, double dt) {
  const Vec4 q0 = s.q_GB.coeffs();
  auto f = [&](const Vec3& v, const Vec4& q, const Vec3& w) {
    return derivative(v, q, w, params, u, res, omega_cmd, k_rate);
  };
  const StateDot k1 = f(s.v, q0, s.omega_B);
  const StateDot k2 = f(s.v + 0.5 * dt * k1.v, q0 + 0.5 * dt * k1.q, s.omega_B + 0.5 * dt * k1.w);
  const StateDot k3 = f(s.v + 0.5 * dt * k2.v, q0 + 0.5 * dt * k2.q, s.omega_B + 0.5 * dt * k2.w);
  const StateDot k4 = f(s.v + dt * k3.v, q0 + dt * k3.q, s.omega_B + dt * k3.w);
  RigidState out;
  out.p = s.p + dt / 6.0 * (k1.p + 2.0 * k2.p + 2.0 * k3.p + k4.p);
  out.v = s.v + dt / 6.0 * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v);
  out.q_GB = UnitQuaternion(Vec4(q0 + dt / 6.0 * (k1.q + 2.0 * k2.q + 2.0 * k3.q + k4.q)));
  out.omega_B = s.omega_B + dt / 6.0 * (k1.w + 2.0 * k2.w + 2.0 * k3.w + k4.w);
  return out;
}

ImuKinematics inject_extrinsics(const BodyKinematics& body, const UnitQuaternion& q_IB,
                                const Vec3& t_IB) {
  const Mat3 R_IB = q_IB.matrix();
  ImuKinematics k;
  k.omega_I = R_IB * body.omega_B;
  k.alpha_I = R_IB * body.alpha_B;
  k.accel_I = R_IB * body.specific_force_B - k.omega_I.cross(k.omega_I.cross(t_IB)) -
              k.alpha_I.cross(t_IB);
  return k;
}

namespace {

/// Attitude whose body z is along f and whose heading is yaw.
Mat3 attitude_from_thrust(const Vec3& f, double yaw) {
  const Vec3 z = f.normalized();
  const Vec3 xc(std::cos(yaw), std::sin(yaw), 0.0);
  Vec3 y = z.cross(xc);
  if (y.norm() < 1e-6) y = z.cross(Vec3::UnitX());  // thrust horizontal along heading
  y.normalize();
  const Vec3 x = y.cross(z);
  Mat3 R;
  R.col(0) = x;
  R.col(1) = y;
  R.col(2) = z;
  return R;
}

struct Command {
  RotorSpeeds u;
  Vec3 omega_cmd = Vec3::Zero();
};

Command control(const RigidState& s, const ReferenceState& ref, const DynParams& params,
                const ControllerGains& g) {
  const Vec3 a_des = ref.a + g.kp * (ref.p - s.p) + g.kd * (ref.v - s.v);
  Vec3 f_des = params.mass * (a_des - gravity_world());
  if (f_des.z() < 0.1 * params.mass * kGravity) f_des.z() = 0.1 * params.mass * kGravity;
  Command c;
  const double u_ss = f_des.norm() / params.tau;
  c.u = RotorSpeeds::uniform(std::sqrt(u_ss / 4.0));
  const Mat3 R_des = attitude_from_thrust(f_des, ref.yaw);
  const Mat3 R = s.q_GB.matrix();
  Vec3 e = quat_log(UnitQuaternion::from_matrix(R.transpose() * R_des));
  c.omega_cmd = g.k_att * e;
  const double n = c.omega_cmd.norm();
  if (n > g.max_rate) c.omega_cmd *= g.max_rate / n;
  return c;
}

}  // namespace

FlightLog simulate_flight(const DynParams& params, const TrajectorySpec& spec,
                          const ResidualModel& res_model, const NoiseSpec& noise,
                          const SimOptions& options, std::uint64_t seed) {
  params.validate();
  noise.validate();
  const ReferenceTrajectory traj(spec);
  if (!(options.f_imu > 0.0) || !(options.f_rotor > 0.0) || options.f_imu < options.f_rotor) {
    throw std::invalid_argument("simulate_flight: need f_imu >= f_rotor > 0");
  }
  const double ratio_f = options.f_imu / options.f_rotor;
  const long ratio = std::lround(ratio_f);
  if (std::abs(ratio_f - static_cast<double>(ratio)) > 1e-9) {
    throw std::invalid_argument("simulate_flight: f_imu must be an integer multiple of f_rotor");
  }
  const auto n = static_cast<std::size_t>(std::lround(spec.duration * options.f_imu));
  if (n < 10) throw std::invalid_argument("simulate_flight: fewer than 10 IMU samples");
  const double dt = 1.0 / options.f_imu;

  Rng rng_imu(seed, "sim.imu");
  Rng rng_bias(seed, "sim.bias");

  const ReferenceState ref0 = traj.sample(0.0);
  RigidState s;
  s.p = ref0.p;
  s.v = ref0.v;
  s.q_GB = UnitQuaternion::from_matrix(
      attitude_from_thrust(params.mass * (ref0.a - gravity_world()), ref0.yaw));

  const UnitQuaternion q_BI = params.q_IB.conj();
  Vec3 b_g = noise.b_gyro0, b_a = noise.b_accel0;
  const double sqdt = std::sqrt(dt);

  FlightLog log;
  log.imu.reserve(n);
  log.truth.reserve(n);
  log.rotors.reserve(n / static_cast<std::size_t>(ratio) + 1);

  Command cmd;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * dt;
    const ReferenceState ref = traj.sample(std::min(t, spec.duration));
    if (!s.p.allFinite() || !s.v.allFinite() || (s.p - ref.p).norm() > options.divergence_radius) {
      std::ostringstream os;
      os << "simulate_flight: tracking error exceeded " << options.divergence_radius
         << " m at t=" << t;
      throw SimDiverged(os.str());
    }
    if (k % static_cast<std::size_t>(ratio) == 0) {
      cmd = control(s, ref, params, options.gains);
      log.rotors.push_back({t, cmd.u});
    }

    const Mat3 R_GB = s.q_GB.matrix();
    const Vec3 v_B = R_GB.transpose() * s.v;
    const Vec3 f_res = res_model.eval(v_B);
    BodyKinematics body;
    body.omega_B = s.omega_B;
    body.alpha_B = options.gains.k_rate * (cmd.omega_cmd - s.omega_B);
    body.specific_force_B = body_force(params, cmd.u, v_B, f_res) / params.mass;
    const ImuKinematics kin = inject_extrinsics(body, params.q_IB, params.t_IB);

    ImuSample m;
    m.t = t;
    m.gyro = kin.omega_I + b_g + rng_imu.normal3(noise.sigma_gyro);
    m.accel = kin.accel_I + b_a + rng_imu.normal3(noise.sigma_accel);
    log.imu.push_back(m);

    TruthSample tr;
    tr.t = t;
    tr.q_GI = s.q_GB * q_BI;
    tr.p_GB = s.p;
    tr.v_GB = s.v;
    tr.a_GB = R_GB * body.specific_force_B + gravity_world();
    tr.omega_I = kin.omega_I;
    tr.alpha_I = kin.alpha_I;
    tr.b_gyro = b_g;
    tr.b_accel = b_a;
    tr.f_res = f_res;
    log.truth.push_back(tr);

    b_g += sqdt * rng_bias.normal3(noise.sigma_bg_walk);
    b_a += sqdt * rng_bias.normal3(noise.sigma_ba_walk);
    s = step_rk4(s, params, cmd.u, res_model, cmd.omega_cmd, options.gains.k_rate, dt);
  }
  return log;
}

}  // namespace dido
