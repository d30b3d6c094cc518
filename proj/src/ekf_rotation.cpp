#include <cmath>

#include "dido/ekf.hpp"
#include "dido/errors.hpp"

namespace dido {

double chi2_quantile(int dof, double p) {
  static constexpr double table[6][3] = {{3.841, 6.635, 10.828},  {5.991, 9.210, 13.816},
                                         {7.815, 11.345, 16.266}, {9.488, 13.277, 18.467},
                                         {11.070, 15.086, 20.515}, {12.592, 16.812, 22.458}};
  if (dof < 1 || dof > 6) throw std::invalid_argument("chi2_quantile: dof must be in 1..6");
  int col;
  if (std::abs(p - 0.95) < 1e-9) col = 0;
  else if (std::abs(p - 0.99) < 1e-9) col = 1;
  else if (std::abs(p - 0.999) < 1e-9) col = 2;
  else throw std::invalid_argument("chi2_quantile: supported levels are 0.95, 0.99, 0.999");
  return table[dof - 1][col];
}

void FilterConfig::validate() const {
  auto pos = [](double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string("filter.") + what + " must be positive");
  };
  auto nonneg = [](double v, const char* what) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string("filter.") + what + " must be >= 0");
  };
  pos(mass, "mass");
  pos(sigma_gyro, "sigma_gyro");
  pos(sigma_accel, "sigma_accel");
  pos(sigma_gravity, "sigma_gravity");
  pos(gravity_norm_gate, "gravity_norm_gate");
  pos(scale_accel, "scale_accel");
  pos(scale_vp, "scale_vp");
  pos(rate_cutoff_hz, "rate_cutoff_hz");
  pos(init.tau, "init.tau");
  nonneg(attitude_coupling_s, "attitude_coupling_s");
  nonneg(sigma_tau_walk, "sigma_tau_walk");
  nonneg(sigma_d_walk, "sigma_d_walk");
  nonneg(sigma_q_IB_walk, "sigma_q_IB_walk");
  nonneg(sigma_t_IB_walk, "sigma_t_IB_walk");
  for (double v : {init.var_q, init.var_p, init.var_v, init.var_tau, init.var_d, init.var_q_IB,
                   init.var_t_IB})
    pos(v, "init variance");
  if (gravity_every == 0) throw ConfigError("filter.gravity_every must be positive");
  if (gate) chi2_quantile(1, gate_quantile);
}

void rot_predict(RotStageState& s, const Vec3& omega_hat, double dt, const Mat3& Sigma_omega) {
  if (!(dt > 0.0)) throw std::invalid_argument("rot_predict: dt must be positive");
  s.q_GI = integrate_gyro(s.q_GI, omega_hat, dt);
  const Mat3 F = so3_exp(-omega_hat * dt);
  s.P = F * s.P * F.transpose() + Sigma_omega * dt;
  s.P = 0.5 * (s.P + s.P.transpose());
}

Mat3 gravity_jacobian(const UnitQuaternion& q_GI) {
  return skew(q_GI.matrix().transpose() * gravity_up());
}

UpdateInfo rot_update_gravity(RotStageState& s, const Vec3& a_hat, const Mat3& Sigma_a, bool gate,
                              double gate_quantile) {
  if (!(a_hat.norm() > 1.0)) throw UpdateRejected("rot_update_gravity: near free fall");
  const Mat3 R = s.q_GI.matrix();
  const Vec3 r = a_hat - R.transpose() * gravity_up();
  const Mat3 H = gravity_jacobian(s.q_GI);
  const Mat3 S = H * s.P * H.transpose() + Sigma_a;
  const Eigen::LDLT<Mat3> ldlt(S);
  UpdateInfo info;
  info.nis = r.dot(ldlt.solve(r));
  if (gate && info.nis > chi2_quantile(3, gate_quantile))
    throw UpdateRejected("rot_update_gravity: innovation gate");
  const Mat3 K = s.P * H.transpose() * ldlt.solve(Mat3::Identity());
  const Vec3 dth = K * r;
  const Mat3 IKH = Mat3::Identity() - K * H;
  s.P = IKH * s.P * IKH.transpose() + K * Sigma_a * K.transpose();
  // Re-express the error in the corrected frame. A pure tilt correction then
  // leaves the world-vertical (yaw) variance exactly as it was.
  const Mat3 G = so3_exp(-dth);
  s.P = G * s.P * G.transpose();
  s.P = 0.5 * (s.P + s.P.transpose());
  s.q_GI = s.q_GI * quat_exp(dth);
  info.accepted = true;
  return info;
}

}  // namespace dido
