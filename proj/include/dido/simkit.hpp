#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dido/dynamics.hpp"
#include "dido/geom.hpp"

namespace dido {

// ---------------------------------------------------------------------------
// Flight log

struct ImuSample {
  double t = 0.0;
  Vec3 gyro = Vec3::Zero();   ///< rad/s, I frame
  Vec3 accel = Vec3::Zero();  ///< m/s^2, I frame
};

struct RotorSample {
  double t = 0.0;
  RotorSpeeds u;
};

struct TruthSample {
  double t = 0.0;
  UnitQuaternion q_GI;
  Vec3 p_GB = Vec3::Zero();
  Vec3 v_GB = Vec3::Zero();
  Vec3 a_GB = Vec3::Zero();
  Vec3 omega_I = Vec3::Zero();
  Vec3 alpha_I = Vec3::Zero();  ///< analytic controller value; estimators must not read it
  Vec3 b_gyro = Vec3::Zero();
  Vec3 b_accel = Vec3::Zero();
  Vec3 f_res = Vec3::Zero();
};

/// Time-aligned measurement and ground-truth streams. Truth is sampled at the
/// IMU timestamps; rotor timestamps are a subset of them.
struct FlightLog {
  std::vector<ImuSample> imu;
  std::vector<RotorSample> rotors;
  std::vector<TruthSample> truth;

  /// Index of the IMU/truth sample at time t (nearest). Throws RangeError
  /// when the log is empty.
  std::size_t index_at(double t) const;
  /// Latest rotor sample with timestamp <= t (zero-order hold).
  const RotorSample& rotor_at(double t) const;
  double imu_dt() const;
  /// Throws std::invalid_argument on non-increasing timestamps or misaligned streams.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Trajectories

enum class TrajectoryKind { Hover, Circle, Figure8, Random, Vertical };
enum class YawMode { Constant, Forward };

struct TrajectorySpec {
  TrajectoryKind kind = TrajectoryKind::Hover;
  double radius = 1.0;     ///< circle, m
  double scale = 1.0;      ///< figure8, m
  double period = 10.0;    ///< circle / figure8 / vertical, s
  double amplitude = 0.5;  ///< vertical, m
  std::uint64_t seed = 0;  ///< random
  int sinusoids = 3;       ///< random, per axis
  double max_speed = 1.0;  ///< random, m/s
  YawMode yaw_mode = YawMode::Constant;
  double yaw0 = 0.0;
  Vec3 origin = Vec3(0.0, 0.0, 1.0);
  double duration = 10.0;  ///< s

  void validate() const;
};

struct ReferenceState {
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 a = Vec3::Zero();
  double yaw = 0.0;
};

/// Analytic C2 reference. The random kind precomputes its seeded sinusoid
/// coefficients and the amplitude scale that makes max |v| equal max_speed.
class ReferenceTrajectory {
 public:
  explicit ReferenceTrajectory(const TrajectorySpec& spec);
  /// Throws RangeError for t outside [0, duration].
  ReferenceState sample(double t) const;
  const TrajectorySpec& spec() const { return spec_; }

 private:
  struct Sinusoid {
    double amplitude;
    double omega;
    double phase;
  };
  TrajectorySpec spec_;
  std::vector<Sinusoid> axes_[3];
};

ReferenceState reference_trajectory(const TrajectorySpec& spec, double t);

// ---------------------------------------------------------------------------
// Simulation

struct ResidualModel {
  enum class Kind { Zero, Constant, QuadDrag };
  Kind kind = Kind::Zero;
  Vec3 c = Vec3::Zero();  ///< constant force, N
  double k = 0.0;         ///< quadratic drag, f = -k |v_B| v_B

  Vec3 eval(const Vec3& v_B) const;
  static ResidualModel zero() { return {}; }
  static ResidualModel constant(const Vec3& c) { return {Kind::Constant, c, 0.0}; }
  static ResidualModel quad_drag(double k) { return {Kind::QuadDrag, Vec3::Zero(), k}; }
};

struct NoiseSpec {
  Vec3 sigma_gyro = Vec3::Zero();     ///< rad/s per sample
  Vec3 sigma_accel = Vec3::Zero();    ///< m/s^2 per sample
  Vec3 sigma_bg_walk = Vec3::Zero();  ///< rad/s/sqrt(s)
  Vec3 sigma_ba_walk = Vec3::Zero();  ///< m/s^2/sqrt(s)
  Vec3 b_gyro0 = Vec3::Zero();
  Vec3 b_accel0 = Vec3::Zero();

  void validate() const;
  static NoiseSpec zero() { return {}; }
};

struct ControllerGains {
  double kp = 4.0;      ///< position, 1/s^2
  double kd = 4.0;      ///< velocity, 1/s
  double k_att = 8.0;   ///< attitude error -> rate command, 1/s
  double k_rate = 30.0; ///< rate error -> angular acceleration, 1/s
  double max_rate = 4.0;  ///< rad/s
};

struct SimOptions {
  double f_imu = 400.0;
  double f_rotor = 100.0;
  ControllerGains gains;
  double divergence_radius = 10.0;  ///< m
};

/// Rigid-body truth state integrated by the simulator.
struct RigidState {
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  UnitQuaternion q_GB;
  Vec3 omega_B = Vec3::Zero();
};

/// One RK4 step of the rigid-body model with held rotor speeds and rate
/// command; angular acceleration is k_rate * (omega_cmd - omega_B).
RigidState step_rk4(const RigidState& s, const DynParams& params, const RotorSpeeds& u,
                    const ResidualModel& res, const Vec3& omega_cmd, double k_rate, double dt);

/// Body-frame IMU-relevant kinematics at the centre of mass.
struct BodyKinematics {
  Vec3 omega_B = Vec3::Zero();
  Vec3 alpha_B = Vec3::Zero();
  Vec3 specific_force_B = Vec3::Zero();  ///< F_B / m
};

/// Noise-free IMU quantities in the I frame at the IMU point.
struct ImuKinematics {
  Vec3 omega_I = Vec3::Zero();
  Vec3 alpha_I = Vec3::Zero();
  Vec3 accel_I = Vec3::Zero();
};

/// Re-expresses body kinematics in the IMU frame and adds the lever-arm
/// terms -w x (w x t) - alpha x t. Identity extrinsics are a no-op.
ImuKinematics inject_extrinsics(const BodyKinematics& body, const UnitQuaternion& q_IB,
                                const Vec3& t_IB);

/// Closed-loop flight: flatness feedforward + PD position feedback, RK4 truth
/// at the IMU rate, rotor commands held between rotor samples, IMU corrupted
/// by white noise and random-walk biases. Throws SimDiverged.
FlightLog simulate_flight(const DynParams& params, const TrajectorySpec& spec,
                          const ResidualModel& res_model, const NoiseSpec& noise,
                          const SimOptions& options, std::uint64_t seed);

}  // namespace dido
