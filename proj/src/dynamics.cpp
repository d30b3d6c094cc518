#include "dido/dynamics.hpp"

#include <cmath>
#include <stdexcept>

namespace dido {

void DynParams::validate() const {
  if (!(mass > 0.0)) throw std::invalid_argument("DynParams: mass must be positive");
  if (!(tau > 0.0)) throw std::invalid_argument("DynParams: tau must be positive");
  if ((d.array() < 0.0).any()) throw std::invalid_argument("DynParams: drag must be >= 0");
  if (!t_IB.allFinite()) throw std::invalid_argument("DynParams: t_IB not finite");
}

void RotorSpeeds::validate() const {
  for (double ui : u) {
    if (!(ui >= 0.0) || !std::isfinite(ui)) {
      throw std::invalid_argument("RotorSpeeds: speeds must be finite and >= 0");
    }
  }
}

Vec3 body_force(const DynParams& p, const RotorSpeeds& u, const Vec3& v_B, const Vec3& f_res) {
  return p.tau * u.sum_sq() * e3() - u.sum() * p.d.cwiseProduct(v_B) + f_res;
}

Vec3 accel_world(const DynParams& p, const UnitQuaternion& q_GB, const RotorSpeeds& u,
                 const Vec3& v_G, const Vec3& f_res) {
  const Mat3 R_GB = q_GB.matrix();
  const Vec3 F = body_force(p, u, R_GB.transpose() * v_G, f_res);
  return R_GB * F / p.mass + gravity_world();
}

Vec3 imu_accel_predict(const DynParams& p, const UnitQuaternion& q_GB, const RotorSpeeds& u,
                       const Vec3& v_G, const Vec3& f_res, const Vec3& omega_I,
                       const Vec3& alpha_I) {
  const Vec3 v_B = q_GB.matrix().transpose() * v_G;
  const Vec3 F = body_force(p, u, v_B, f_res);
  return p.q_IB.matrix() * F / p.mass - omega_I.cross(omega_I.cross(p.t_IB)) -
         alpha_I.cross(p.t_IB);
}

double hover_rotor_speed(const DynParams& p) {
  return std::sqrt(p.mass * kGravity / (4.0 * p.tau));
}

}  // namespace dido
