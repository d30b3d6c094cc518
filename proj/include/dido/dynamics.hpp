#pragma once

#include <array>

#include "dido/geom.hpp"

namespace dido {

/// Physical model parameters of the quadrotor.
struct DynParams {
  double mass = 1.0;  ///< kg
  double tau = 1.1;   ///< thrust coefficient, N per (scaled speed)^2
  Vec3 d = Vec3::Zero();  ///< effective linear drag coefficients (dx, dy, dz)
  UnitQuaternion q_IB;    ///< extrinsic rotation, B -> I
  Vec3 t_IB = Vec3::Zero();  ///< B origin expressed in the I frame, m

  /// Throws std::invalid_argument unless mass > 0, tau > 0, d >= 0.
  void validate() const;
};

/// Rotor speeds already divided by 10000.
struct RotorSpeeds {
  std::array<double, 4> u{0.0, 0.0, 0.0, 0.0};

  static RotorSpeeds uniform(double ui) { return {{ui, ui, ui, ui}}; }
  double sum() const { return u[0] + u[1] + u[2] + u[3]; }
  double sum_sq() const { return u[0] * u[0] + u[1] * u[1] + u[2] * u[2] + u[3] * u[3]; }
  void validate() const;
};

/// Unmodeled body-frame force and its diagonal covariance.
struct ResidualForce {
  Vec3 f_res = Vec3::Zero();              ///< N
  Vec3 sigma2_f = Vec3::Constant(1e-6);   ///< N^2
};

/// tau*Uss*e3 - Us*diag(d)*v_B + f_res, in the body frame.
Vec3 body_force(const DynParams& p, const RotorSpeeds& u, const Vec3& v_B, const Vec3& f_res);

/// World-frame acceleration of the body: R_GB * F_B / m + g_world.
Vec3 accel_world(const DynParams& p, const UnitQuaternion& q_GB, const RotorSpeeds& u,
                 const Vec3& v_G, const Vec3& f_res);

/// Specific force sensed at the IMU point, expressed in the I frame.
/// q_GB is the body attitude; omega_I and alpha_I are the body angular rate and
/// angular acceleration expressed in the I frame.
Vec3 imu_accel_predict(const DynParams& p, const UnitQuaternion& q_GB, const RotorSpeeds& u,
                       const Vec3& v_G, const Vec3& f_res, const Vec3& omega_I,
                       const Vec3& alpha_I);

/// Hover rotor speed for equal rotors: tau * 4 u^2 = m g.
double hover_rotor_speed(const DynParams& p);

}  // namespace dido
