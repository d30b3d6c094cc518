#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "dido/ekf.hpp"
#include "dido/errors.hpp"
#include "dido/providers.hpp"

using namespace dido;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// Independent error-state retraction: additive except the extrinsic
// rotation, which is perturbed on the right.
TransStageState perturbed(const TransStageState& s, int i, double h) {
  TransStageState o = s;
  if (i < 3) o.p_GB[i] += h;
  else if (i < 6) o.v_GB[i - 3] += h;
  else if (i == 6) o.tau += h;
  else if (i < 10) o.d[i - 7] += h;
  else if (i < 13) o.q_IB = o.q_IB * quat_exp(Vec3::Unit(i - 10) * h);
  else o.t_IB[i - 13] += h;
  return o;
}

Vec16 difference(const TransStageState& a, const TransStageState& b) {
  Vec16 d;
  d << a.p_GB - b.p_GB, a.v_GB - b.v_GB, a.tau - b.tau, a.d - b.d,
      quat_log(b.q_IB.conj() * a.q_IB), a.t_IB - b.t_IB;
  return d;
}

TransStageState generic_state() {
  TransStageState s;
  s.p_GB = Vec3(0.3, -1.0, 2.0);
  s.v_GB = Vec3(1.2, -0.4, 0.3);
  s.tau = 1.25;
  s.d = Vec3(0.12, 0.08, 0.05);
  s.q_IB = quat_exp(Vec3(0.05, -0.03, 0.2));
  s.t_IB = Vec3(0.04, -0.02, 0.03);
  s.P = Mat16::Identity() * 1e-3;
  return s;
}

const RotorSpeeds kRotors{{0.95, 1.02, 0.98, 1.05}};
const UnitQuaternion kAtt = quat_exp(Vec3(0.2, -0.1, 0.7));
const Vec3 kOmega(0.4, -0.3, 0.9), kAlpha(1.0, 0.5, -2.0), kRes(0.05, -0.02, 0.1);

template <class Fn>
Eigen::MatrixXd numeric_jacobian(const TransStageState& s, Fn f, int rows) {
  Eigen::MatrixXd J(rows, kTransDim);
  const double h = 1e-6;
  for (int i = 0; i < kTransDim; ++i)
    J.col(i) = (f(perturbed(s, i, h)) - f(perturbed(s, i, -h))) / (2 * h);
  return J;
}

}  // namespace

// ---------------------------------------------------------------------------
// Rotation stage

TEST(RotPredict, ZeroRateGrowsCovarianceOnly) {
  RotStageState s;
  s.q_GI = kAtt;
  s.P = Mat3::Identity() * 1e-4;
  const Mat3 Q = Vec3(1e-6, 2e-6, 3e-6).asDiagonal();
  rot_predict(s, Vec3::Zero(), 0.01, Q);
  EXPECT_LT((s.q_GI.coeffs() - kAtt.coeffs()).norm(), 1e-15);
  EXPECT_LT((s.P - (Mat3::Identity() * 1e-4 + Q * 0.01)).norm(), 1e-18);
}

TEST(RotPredict, TransitionMatchesFiniteDifference) {
  // error propagates as exp(-[w]x dt)
  const double dt = 0.0025;
  const Vec3 dth(1e-6, -2e-6, 0.5e-6);
  const UnitQuaternion a = integrate_gyro(kAtt, kOmega, dt);
  const UnitQuaternion b = integrate_gyro(kAtt * quat_exp(dth), kOmega, dt);
  const Vec3 got = quat_log(a.conj() * b);
  EXPECT_LT((got - so3_exp(-kOmega * dt) * dth).norm(), 1e-15);
}

TEST(GravityUpdate, ExactMeasurementNoCorrection) {
  RotStageState s;
  s.q_GI = kAtt;
  s.P = Mat3::Identity() * 1e-3;
  rot_update_gravity(s, kAtt.matrix().transpose() * gravity_up(), Mat3::Identity() * 0.01);
  EXPECT_LT((s.q_GI.coeffs() - kAtt.coeffs()).norm(), 1e-15);
}

TEST(GravityUpdate, NullSpaceIsExact) {
  for (const auto& q : {kAtt, UnitQuaternion{}, quat_exp(Vec3(1.0, 2.0, -0.5))}) {
    const Vec3 g_I = q.matrix().transpose() * gravity_up();
    EXPECT_EQ((gravity_jacobian(q) * g_I).norm(), 0.0);
  }
}

TEST(GravityUpdate, YawVarianceNeverDecreases) {
  // Yaw along u = R^T e3 is in the null space of H, so with yaw uncorrelated
  // from tilt no update can shrink its variance.
  RotStageState s;
  s.q_GI = kAtt;
  for (int i = 0; i < 50; ++i) {
    const Vec3 u = (s.q_GI.matrix().transpose() * e3()).normalized();
    s.P = 2e-3 * (Mat3::Identity() - u * u.transpose()) + (1e-3 + 1e-4 * i) * u * u.transpose();
    const double before = u.dot(s.P * u);
    rot_update_gravity(s, kAtt.matrix().transpose() * gravity_up() + Vec3(0.01, -0.02, 0.0),
                       Mat3::Identity() * 0.25);
    const Vec3 u2 = (s.q_GI.matrix().transpose() * e3()).normalized();
    EXPECT_GE(u2.dot(s.P * u2), before * (1 - 1e-12));
  }
}

TEST(GravityUpdate, TiltConvergesWithinTwoSeconds) {
  RotStageState s;
  s.q_GI = UnitQuaternion::from_axis_angle(Vec3(1, 1, 0).normalized(), 5 * kDeg);
  s.P = Mat3::Identity() * std::pow(5 * kDeg, 2);
  const Mat3 Qw = Mat3::Identity() * 1e-6;
  for (int k = 0; k < 800; ++k) {
    rot_update_gravity(s, gravity_up(), Mat3::Identity());
    rot_predict(s, Vec3::Zero(), 0.0025, Qw);
  }
  const double tilt = std::acos(std::clamp((s.q_GI.matrix() * e3()).z(), -1.0, 1.0));
  EXPECT_LT(tilt, 0.5 * kDeg);
}

TEST(GravityUpdate, RejectsFreeFallAndGate) {
  RotStageState s;
  EXPECT_THROW(rot_update_gravity(s, Vec3(0.1, 0, 0.2), Mat3::Identity()), UpdateRejected);
  s.P = Mat3::Identity() * 1e-8;
  EXPECT_THROW(rot_update_gravity(s, Vec3(5, 0, 5), Mat3::Identity() * 1e-4, true), UpdateRejected);
  EXPECT_EQ(s.q_GI.coeffs(), UnitQuaternion{}.coeffs());
}

TEST(Chi2Quantile, Table) {
  EXPECT_NEAR(chi2_quantile(1, 0.95), 3.841, 1e-3);
  EXPECT_NEAR(chi2_quantile(3, 0.99), 11.345, 1e-3);
  EXPECT_NEAR(chi2_quantile(6, 0.999), 22.458, 1e-3);
  EXPECT_THROW(chi2_quantile(7, 0.95), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Translation stage

TEST(TransAccel, HoverAndFreeFall) {
  TransStageState s;
  s.tau = 1.1;
  const RotorSpeeds hover = RotorSpeeds::uniform(std::sqrt(9.8 / 4.4));
  EXPECT_LT(trans_accel(s, 1.0, hover, UnitQuaternion{}, Vec3::Zero()).norm(), 1e-12);
  const Vec3 r(0.2, 0.0, -0.1);
  EXPECT_LT((trans_accel(s, 2.0, RotorSpeeds{}, kAtt, r) - (gravity_world() + kAtt.matrix() * r / 2.0)).norm(),
            1e-14);
}

TEST(TransAccel, JacobianMatchesFiniteDifference) {
  const TransStageState s = generic_state();
  const auto f = [&](const TransStageState& x) -> Eigen::VectorXd {
    return trans_accel(x, 1.3, kRotors, kAtt, kRes);
  };
  const Eigen::MatrixXd Jn = numeric_jacobian(s, f, 3);
  const Eigen::MatrixXd Ja = trans_accel_jacobian(s, 1.3, kRotors, kAtt, kRes);
  EXPECT_LT((Ja - Jn).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(TransAccelMeasurement, JacobianMatchesFiniteDifference) {
  const TransStageState s = generic_state();
  const auto f = [&](const TransStageState& x) -> Eigen::VectorXd {
    return trans_accel_measurement(x, 1.3, kRotors, kAtt, kRes, kOmega, kAlpha);
  };
  const Eigen::MatrixXd Jn = numeric_jacobian(s, f, 3);
  const Eigen::MatrixXd Ja = trans_accel_measurement_jacobian(s, 1.3, kRotors, kAtt, kRes, kOmega, kAlpha);
  EXPECT_LT((Ja - Jn).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(TransAccelMeasurement, ThrustErrorShowsOnZ) {
  // 10% thrust-coefficient error, level and at rest: residual on z only.
  TransStageState s;
  s.tau = 1.3;
  const RotorSpeeds u = RotorSpeeds::uniform(0.9);
  const Vec3 a_true = trans_accel_measurement(s, 1.0, u, UnitQuaternion{}, Vec3::Zero(), Vec3::Zero(), Vec3::Zero());
  s.tau = 1.43;
  const Vec3 a_off = trans_accel_measurement(s, 1.0, u, UnitQuaternion{}, Vec3::Zero(), Vec3::Zero(), Vec3::Zero());
  EXPECT_LT((a_off - a_true - Vec3(0, 0, 0.13 * u.sum_sq())).norm(), 1e-12);
}

TEST(TransVp, JacobianMatchesFiniteDifference) {
  const TransStageState s = generic_state();
  const auto f = [&](const TransStageState& x) -> Eigen::VectorXd {
    Eigen::VectorXd y(6);
    y << state_v_GI(x, kAtt, kOmega), state_p_GI(x, kAtt);
    return y;
  };
  const Eigen::MatrixXd Jn = numeric_jacobian(s, f, 6);
  const Eigen::MatrixXd Ja = trans_vp_jacobian(s, kAtt, kOmega);
  EXPECT_LT((Ja - Jn).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(TransVp, ZeroRateHasNoLeverVelocityTerm) {
  const auto H = trans_vp_jacobian(generic_state(), kAtt, Vec3::Zero());
  EXPECT_EQ((H.block<3, 3>(0, ix::t).norm()), 0.0);
}

TEST(TransVp, ZeroLeverArmIsDirect) {
  TransStageState s = generic_state();
  s.t_IB.setZero();
  EXPECT_EQ(state_v_GI(s, kAtt, kOmega), s.v_GB);
  EXPECT_EQ(state_p_GI(s, kAtt), s.p_GB);
}

TEST(TransPredict, HoverWithTrueParamsIsStationary) {
  TransStageState s;
  s.tau = 1.1;
  s.p_GB = Vec3(1, 2, 3);
  const RotorSpeeds hover = RotorSpeeds::uniform(std::sqrt(9.8 / 4.4));
  for (int i = 0; i < 400; ++i)
    trans_predict(s, 1.0, hover, UnitQuaternion{}, ResidualForce{}, 0.0025, ProcessNoise{});
  EXPECT_LT((s.p_GB - Vec3(1, 2, 3)).norm(), 1e-12);
  EXPECT_LT(s.v_GB.norm(), 1e-12);
}

TEST(TransPredict, FreeFallKinematics) {
  TransStageState s;
  s.v_GB = Vec3(1, 0, 0);
  trans_predict(s, 1.0, RotorSpeeds{}, UnitQuaternion{}, ResidualForce{}, 0.1, ProcessNoise{});
  EXPECT_LT((s.p_GB - Vec3(0.1, 0, -0.049)).norm(), 1e-14);
  EXPECT_LT((s.v_GB - Vec3(1, 0, -0.98)).norm(), 1e-14);
}

TEST(TransPredict, TransitionMatchesFiniteDifference) {
  const TransStageState s0 = generic_state();
  ResidualForce f;
  f.f_res = kRes;
  const double dt = 0.0025;
  auto step = [&](TransStageState x) {
    trans_predict(x, 1.3, kRotors, kAtt, f, dt, ProcessNoise{}, kOmega);
    return x;
  };
  TransStageState nominal = s0;
  const Mat16 F = trans_predict(nominal, 1.3, kRotors, kAtt, f, dt, ProcessNoise{}, kOmega);
  Mat16 Fn;
  const double h = 1e-6;
  for (int i = 0; i < kTransDim; ++i)
    Fn.col(i) = (difference(step(perturbed(s0, i, h)), nominal) -
                 difference(step(perturbed(s0, i, -h)), nominal)) / (2 * h);
  EXPECT_LT((F - Fn).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(TransPredict, CovarianceStaysSymmetricPsd) {
  TransStageState s = generic_state();
  ProcessNoise pn;
  pn.attitude = Mat3::Identity() * 1e-6;
  pn.tau = 1e-8;
  for (int i = 0; i < 2000; ++i) trans_predict(s, 1.3, kRotors, kAtt, ResidualForce{}, 0.0025, pn, kOmega);
  EXPECT_LT((s.P - s.P.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_GE(min_eigenvalue(s.P), -1e-10);
}

TEST(TransUpdateAccel, ZeroResidualNoChange) {
  TransStageState s = generic_state();
  ResidualForce f;
  f.f_res = kRes;
  const Vec3 a = trans_accel_measurement(s, 1.3, kRotors, kAtt, kRes, kOmega, kAlpha);
  const TransStageState before = s;
  trans_update_accel(s, 1.3, a, kOmega, kAlpha, kRotors, kAtt, f, Mat3::Identity() * 0.0025);
  EXPECT_LT(difference(s, before).norm(), 1e-15);
  EXPECT_LT(s.P.trace(), before.P.trace());
}

TEST(TransUpdateVp, ExactObservationPullsToTruth) {
  TransStageState truth = generic_state();
  TransStageState s = truth;
  s.P = Mat16::Identity() * 1e-4;
  trans_set_anchor(s, 0.0, kAtt, kOmega, AnchorMode::Known);
  s.p_GB += Vec3(0.01, -0.01, 0.005);
  s.v_GB += Vec3(-0.01, 0.0, 0.01);
  VpObservation o;
  o.v_GI = state_v_GI(truth, kAtt, kOmega);
  o.p_GI = state_p_GI(truth, kAtt);
  o.sigma2_v = o.sigma2_p = Vec3::Constant(kMinVariance);
  o.anchor_t = 0.0;
  trans_update_vp(s, o, kAtt, kOmega);
  EXPECT_LT((state_p_GI(s, kAtt) - o.p_GI).norm(), 1e-6);
  EXPECT_LT((state_v_GI(s, kAtt, kOmega) - o.v_GI).norm(), 1e-6);
}

TEST(TransUpdateVp, RequiresMatchingAnchor) {
  TransStageState s = generic_state();
  VpObservation o;
  EXPECT_THROW(trans_update_vp(s, o, kAtt, kOmega), InsufficientData);
  trans_set_anchor(s, 1.0, kAtt, kOmega, AnchorMode::Consider);
  o.anchor_t = 2.0;
  EXPECT_THROW(trans_update_vp(s, o, kAtt, kOmega), std::invalid_argument);
}

TEST(TransSetAnchor, ConsiderCarriesCovariance) {
  TransStageState s = generic_state();
  trans_set_anchor(s, 0.0, kAtt, kOmega, AnchorMode::Consider);
  EXPECT_GT(s.anchor.cov.trace(), 0.0);
  EXPECT_EQ(s.anchor.p_GI, state_p_GI(s, kAtt));
  trans_set_anchor(s, 0.0, kAtt, kOmega, AnchorMode::Known);
  EXPECT_EQ(s.anchor.cov.norm(), 0.0);
}

TEST(MakeTransState, UsesInitBlock) {
  FilterInit init;
  init.tau = 1.2;
  const TransStageState s = make_trans_state(Vec3(1, 0, 0), Vec3::Zero(), init);
  EXPECT_EQ(s.tau, 1.2);
  EXPECT_EQ(s.P(ix::tau, ix::tau), init.var_tau);
  EXPECT_EQ(s.P(ix::t + 2, ix::t + 2), init.var_t_IB);
}

TEST(FilterConfigValidate, RejectsBadValues) {
  FilterConfig c;
  EXPECT_NO_THROW(c.validate());
  c.sigma_accel = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = FilterConfig{};
  c.attitude_coupling_s = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}
