#include <algorithm>
#include <cmath>

#include "dido/ekf.hpp"
#include "dido/errors.hpp"
#include "dido/providers.hpp"

namespace dido {

namespace {

using Row3 = Eigen::Matrix<double, 3, kTransDim>;
constexpr int kAug = kTransDim + 6;
using MatA = Eigen::Matrix<double, kAug, kAug>;

// Body force and the pieces its Jacobians share.
struct ForceTerms {
  Mat3 R_GI, R_IB, R_GB, D;
  Vec3 v_B, F_B;
  double Us = 0.0, Uss = 0.0;
};

ForceTerms force_terms(const TransStageState& s, const RotorSpeeds& u, const UnitQuaternion& q_GI,
                       const Vec3& f_res) {
  ForceTerms f;
  f.R_GI = q_GI.matrix();
  f.R_IB = s.q_IB.matrix();
  f.R_GB = f.R_GI * f.R_IB;
  f.D = s.d.asDiagonal();
  f.v_B = f.R_GB.transpose() * s.v_GB;
  f.Us = u.sum();
  f.Uss = u.sum_sq();
  f.F_B = s.tau * f.Uss * e3() - f.Us * f.D * f.v_B + f_res;
  return f;
}

// Jacobian of lead * F_B / m. The world acceleration uses lead = R_GB, the
// accelerometer model lead = R_IB; both rotate the same body force, and a
// right perturbation of q_IB moves both the lead rotation and v_B.
Row3 force_jacobian(const ForceTerms& f, const Mat3& lead, double m) {
  Row3 J = Row3::Zero();
  J.block<3, 3>(0, ix::v) = -(f.Us / m) * lead * f.D * f.R_GB.transpose();
  J.col(ix::tau) = lead * e3() * (f.Uss / m);
  J.block<3, 3>(0, ix::d) = -(f.Us / m) * lead * Mat3(f.v_B.asDiagonal());
  J.block<3, 3>(0, ix::th) = lead * (-skew(f.F_B) - f.Us * f.D * skew(f.v_B)) / m;
  return J;
}

void symmetrize(Mat16& P) { P = 0.5 * (P + P.transpose()); }

void inject(TransStageState& s, const Vec16& dx) {
  s.p_GB += dx.segment<3>(ix::p);
  s.v_GB += dx.segment<3>(ix::v);
  s.tau = std::max(s.tau + dx[ix::tau], 1e-6);
  s.d += dx.segment<3>(ix::d);
  s.q_IB = s.q_IB * quat_exp(dx.segment<3>(ix::th));
  s.t_IB += dx.segment<3>(ix::t);
}

// Schmidt-Kalman update over [state; anchor]: the anchor block enters the
// innovation covariance and keeps its cross terms, but is never corrected.
template <int N>
UpdateInfo schmidt_update(TransStageState& s, const Eigen::Matrix<double, N, 1>& r,
                          const Eigen::Matrix<double, N, kTransDim>& Hx,
                          const Eigen::Matrix<double, N, 6>& Ha,
                          const Eigen::Matrix<double, N, N>& R, bool gate, double q) {
  MatA P;
  P.topLeftCorner<kTransDim, kTransDim>() = s.P;
  P.topRightCorner<kTransDim, 6>() = s.anchor.cross;
  P.bottomLeftCorner<6, kTransDim>() = s.anchor.cross.transpose();
  P.bottomRightCorner<6, 6>() = s.anchor.cov;
  Eigen::Matrix<double, N, kAug> H;
  H << Hx, Ha;
  const Eigen::Matrix<double, N, N> S = H * P * H.transpose() + R;
  const Eigen::LDLT<Eigen::Matrix<double, N, N>> ldlt(S);
  UpdateInfo info;
  info.nis = r.dot(ldlt.solve(r));
  if (!std::isfinite(info.nis)) return info;
  if (gate && info.nis > chi2_quantile(N, q)) return info;
  Eigen::Matrix<double, kAug, N> K = ldlt.solve(H * P).transpose();
  K.template bottomRows<6>().setZero();
  const MatA IKH = MatA::Identity() - K * H;
  const MatA Pn = IKH * P * IKH.transpose() + K * R * K.transpose();
  s.P = Pn.topLeftCorner<kTransDim, kTransDim>();
  symmetrize(s.P);
  s.anchor.cross = Pn.topRightCorner<kTransDim, 6>();
  inject(s, K.template topRows<kTransDim>() * r);
  info.accepted = true;
  return info;
}

}  // namespace

DynParams TransStageState::params(double mass) const {
  DynParams p;
  p.mass = mass;
  p.tau = tau;
  p.d = d;
  p.q_IB = q_IB;
  p.t_IB = t_IB;
  return p;
}

Vec3 trans_accel(const TransStageState& s, double mass, const RotorSpeeds& u,
                 const UnitQuaternion& q_GI, const Vec3& f_res) {
  const ForceTerms f = force_terms(s, u, q_GI, f_res);
  return f.R_GB * f.F_B / mass + gravity_world();
}

Row3 trans_accel_jacobian(const TransStageState& s, double mass, const RotorSpeeds& u,
                          const UnitQuaternion& q_GI, const Vec3& f_res) {
  const ForceTerms f = force_terms(s, u, q_GI, f_res);
  return force_jacobian(f, f.R_GB, mass);
}

Mat16 trans_predict(TransStageState& s, double mass, const RotorSpeeds& u,
                    const UnitQuaternion& q_GI, const ResidualForce& f, double dt,
                    const ProcessNoise& noise, const Vec3& omega_I) {
  if (!(dt > 0.0)) throw std::invalid_argument("trans_predict: dt must be positive");
  // Force at the mid-step attitude and velocity; holding either over the step
  // leaves a first-order error (w dt |f| / 2, and drag scales with Us).
  const UnitQuaternion q_mid = integrate_gyro(q_GI, omega_I, 0.5 * dt);
  TransStageState mid = s;
  mid.v_GB += 0.5 * dt * trans_accel(s, mass, u, q_mid, f.f_res);
  const ForceTerms ft = force_terms(mid, u, q_mid, f.f_res);
  const Vec3 a = ft.R_GB * ft.F_B / mass + gravity_world();
  // Chain the mid-step velocity back to the step start.
  const Row3 J_mid = force_jacobian(ft, ft.R_GB, mass);
  const ForceTerms f0 = force_terms(s, u, q_mid, f.f_res);
  const Row3 J = J_mid + J_mid.block<3, 3>(0, ix::v) * (0.5 * dt) * force_jacobian(f0, f0.R_GB, mass);

  Mat16 F = Mat16::Identity();
  F.block<3, 3>(ix::p, ix::v) += Mat3::Identity() * dt;
  F.block<3, kTransDim>(ix::p, 0) += 0.5 * dt * dt * J;
  F.block<3, kTransDim>(ix::v, 0) += dt * J;

  s.p_GB += s.v_GB * dt + 0.5 * a * dt * dt;
  s.v_GB += a * dt;

  // Residual-force density through R_GB / m, attitude input through
  // -R_GI [R_IB F_B / m]x.
  const Mat3 Ja = -ft.R_GI * skew(ft.R_IB * ft.F_B / mass);
  const Mat3 Qa = ft.R_GB * Mat3(f.sigma2_f.asDiagonal()) * ft.R_GB.transpose() / (mass * mass) +
                  Ja * noise.attitude * Ja.transpose();
  Mat16 Q = Mat16::Zero();
  Q.block<3, 3>(ix::p, ix::p) = Qa * (dt * dt * dt / 4.0);
  Q.block<3, 3>(ix::p, ix::v) = Qa * (dt * dt / 2.0);
  Q.block<3, 3>(ix::v, ix::p) = Qa * (dt * dt / 2.0);
  Q.block<3, 3>(ix::v, ix::v) = Qa * dt;
  Q(ix::tau, ix::tau) = noise.tau * dt;
  Q.block<3, 3>(ix::d, ix::d) = Mat3::Identity() * noise.d * dt;
  Q.block<3, 3>(ix::th, ix::th) = Mat3::Identity() * noise.q_IB * dt;
  Q.block<3, 3>(ix::t, ix::t) = Mat3::Identity() * noise.t_IB * dt;

  s.P = F * s.P * F.transpose() + Q;
  symmetrize(s.P);
  s.anchor.cross = F * s.anchor.cross;
  return F;
}

Vec3 trans_accel_measurement(const TransStageState& s, double mass, const RotorSpeeds& u,
                             const UnitQuaternion& q_GI, const Vec3& f_res,
                             const Vec3& omega_hat, const Vec3& alpha_hat) {
  const ForceTerms f = force_terms(s, u, q_GI, f_res);
  return f.R_IB * f.F_B / mass - omega_hat.cross(omega_hat.cross(s.t_IB)) -
         alpha_hat.cross(s.t_IB);
}

Row3 trans_accel_measurement_jacobian(const TransStageState& s, double mass, const RotorSpeeds& u,
                                      const UnitQuaternion& q_GI, const Vec3& f_res,
                                      const Vec3& omega_hat, const Vec3& alpha_hat) {
  const ForceTerms f = force_terms(s, u, q_GI, f_res);
  Row3 H = force_jacobian(f, f.R_IB, mass);
  H.block<3, 3>(0, ix::t) = -skew(omega_hat) * skew(omega_hat) - skew(alpha_hat);
  return H;
}

UpdateInfo trans_update_accel(TransStageState& s, double mass, const Vec3& a_meas,
                              const Vec3& omega_hat, const Vec3& alpha_hat, const RotorSpeeds& u,
                              const UnitQuaternion& q_GI, const ResidualForce& f,
                              const Mat3& Sigma_a, bool gate, double gate_quantile) {
  const Vec3 r = a_meas - trans_accel_measurement(s, mass, u, q_GI, f.f_res, omega_hat, alpha_hat);
  const Row3 H = trans_accel_measurement_jacobian(s, mass, u, q_GI, f.f_res, omega_hat, alpha_hat);
  const Mat3 R_IB = s.q_IB.matrix();
  const Mat3 R = Sigma_a + R_IB * Mat3(f.sigma2_f.asDiagonal()) * R_IB.transpose() / (mass * mass);
  return schmidt_update<3>(s, r, H, Eigen::Matrix<double, 3, 6>::Zero(), R, gate, gate_quantile);
}

Vec3 state_v_GI(const TransStageState& s, const UnitQuaternion& q_GI, const Vec3& omega_hat) {
  return s.v_GB - q_GI.matrix() * omega_hat.cross(s.t_IB);
}

Vec3 state_p_GI(const TransStageState& s, const UnitQuaternion& q_GI) {
  return s.p_GB - q_GI.matrix() * s.t_IB;
}

Eigen::Matrix<double, 6, kTransDim> trans_vp_jacobian(const TransStageState&,
                                                      const UnitQuaternion& q_GI,
                                                      const Vec3& omega_hat) {
  const Mat3 R = q_GI.matrix();
  Eigen::Matrix<double, 6, kTransDim> H = Eigen::Matrix<double, 6, kTransDim>::Zero();
  H.block<3, 3>(0, ix::v) = Mat3::Identity();
  H.block<3, 3>(0, ix::t) = -R * skew(omega_hat);
  H.block<3, 3>(3, ix::p) = Mat3::Identity();
  H.block<3, 3>(3, ix::t) = -R;
  return H;
}

void trans_set_anchor(TransStageState& s, double t, const UnitQuaternion& q_GI,
                      const Vec3& omega_hat, AnchorMode mode) {
  VpAnchor& a = s.anchor;
  a.active = true;
  a.t = t;
  a.p_GI = state_p_GI(s, q_GI);
  a.v_GI = state_v_GI(s, q_GI, omega_hat);
  if (mode == AnchorMode::Known) {
    a.cov.setZero();
    a.cross.setZero();
    return;
  }
  // Anchor layout [dp_GI; dv_GI]; the V-P Jacobian rows are [v; p].
  const auto H = trans_vp_jacobian(s, q_GI, omega_hat);
  Eigen::Matrix<double, 6, kTransDim> J;
  J << H.bottomRows<3>(), H.topRows<3>();
  a.cross = s.P * J.transpose();
  a.cov = J * a.cross;
  a.cov = 0.5 * (a.cov + a.cov.transpose());
}

UpdateInfo trans_update_vp(TransStageState& s, const VpObservation& obs, const UnitQuaternion& q_GI,
                           const Vec3& omega_hat, double cov_scale, bool gate,
                           double gate_quantile) {
  if (!s.anchor.active) throw InsufficientData("trans_update_vp: no active anchor");
  if (std::abs(obs.anchor_t - s.anchor.t) > 1e-9)
    throw std::invalid_argument("trans_update_vp: observation formed against a different anchor");
  Eigen::Matrix<double, 6, 1> r;
  r << obs.v_GI - state_v_GI(s, q_GI, omega_hat), obs.p_GI - state_p_GI(s, q_GI);
  const auto Hx = trans_vp_jacobian(s, q_GI, omega_hat);
  Eigen::Matrix<double, 6, 6> Ha = Eigen::Matrix<double, 6, 6>::Zero();
  Ha.block<3, 3>(0, 3) = -Mat3::Identity();
  Ha.block<3, 3>(3, 0) = -Mat3::Identity();
  Eigen::Matrix<double, 6, 1> var;
  var << obs.sigma2_v, obs.sigma2_p;
  const Eigen::Matrix<double, 6, 6> R = (cov_scale * var).asDiagonal();
  return schmidt_update<6>(s, r, Hx, Ha, R, gate, gate_quantile);
}

TransStageState make_trans_state(const Vec3& p_GB, const Vec3& v_GB, const FilterInit& init) {
  TransStageState s;
  s.p_GB = p_GB;
  s.v_GB = v_GB;
  s.tau = init.tau;
  s.d = init.d;
  s.q_IB = init.q_IB;
  s.t_IB = init.t_IB;
  Vec16 diag;
  diag << Vec3::Constant(init.var_p), Vec3::Constant(init.var_v), init.var_tau,
      Vec3::Constant(init.var_d), Vec3::Constant(init.var_q_IB), Vec3::Constant(init.var_t_IB);
  s.P = diag.asDiagonal();
  return s;
}

double min_eigenvalue(const Mat16& P) {
  const Mat16 S = 0.5 * (P + P.transpose());
  return Eigen::SelfAdjointEigenSolver<Mat16>(S, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

}  // namespace dido
