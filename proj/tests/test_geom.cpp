#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "dido/errors.hpp"
#include "dido/geom.hpp"

using namespace dido;

namespace {

constexpr double kPi = std::numbers::pi;

UnitQuaternion rot_z(double deg) {
  return UnitQuaternion::from_axis_angle(Vec3::UnitZ(), deg * kPi / 180.0);
}

// Same rotation, either sign.
double quat_gap(const UnitQuaternion& a, const UnitQuaternion& b) {
  const Vec4 x = a.coeffs(), y = b.coeffs();
  return std::min((x - y).norm(), (x + y).norm());
}

// Oracle independent of the library: Eigen's angle-axis matrix.
Mat3 eigen_rot(const Vec3& v) {
  if (v.norm() == 0.0) return Mat3::Identity();
  return Eigen::AngleAxisd(v.norm(), v.normalized()).toRotationMatrix();
}

Vec3 random_vec(std::mt19937_64& g, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(g), u(g), u(g)};
}

}  // namespace

TEST(QuatMul, IdentityIsNeutral) {
  const UnitQuaternion q(0.3, -0.2, 0.5, 0.7);
  EXPECT_LT(quat_gap(UnitQuaternion::identity() * q, q), 1e-15);
  EXPECT_LT(quat_gap(q * UnitQuaternion::identity(), q), 1e-15);
}

TEST(QuatMul, QuarterTurnsCompose) {
  const UnitQuaternion half = rot_z(90) * rot_z(90);
  EXPECT_LT(quat_gap(half, rot_z(180)), 1e-12);
  EXPECT_NEAR(half.angle(), kPi, 1e-12);
}

TEST(QuatMul, InverseIsIdentity) {
  const UnitQuaternion q(0.1, 0.9, -0.3, 0.2);
  EXPECT_LT(quat_gap(q * q.conj(), UnitQuaternion::identity()), 1e-15);
}

TEST(QuatMul, MatrixHomomorphism) {
  std::mt19937_64 g(11);
  for (int i = 0; i < 200; ++i) {
    const UnitQuaternion a = quat_exp(random_vec(g, 3.0));
    const UnitQuaternion b = quat_exp(random_vec(g, 3.0));
    EXPECT_LT(((a * b).matrix() - a.matrix() * b.matrix()).norm(), 1e-12);
  }
}

TEST(UnitQuaternionCtor, NormalisesAndPicksPositiveW) {
  const UnitQuaternion q(-2.0, 0.0, 0.0, 0.0);
  EXPECT_DOUBLE_EQ(q.w(), 1.0);
  EXPECT_THROW(UnitQuaternion(0, 0, 0, 0), std::invalid_argument);
  EXPECT_THROW(UnitQuaternion(NAN, 0, 0, 1), std::invalid_argument);
}

TEST(QuatExp, ZeroIsIdentity) {
  EXPECT_LT(quat_gap(quat_exp(Vec3::Zero()), UnitQuaternion::identity()), 1e-15);
}

TEST(QuatExp, MatchesAngleAxisOracle) {
  std::mt19937_64 g(5);
  for (int i = 0; i < 200; ++i) {
    const Vec3 v = random_vec(g, 2.0);
    EXPECT_LT((quat_exp(v).matrix() - eigen_rot(v)).norm(), 1e-12);
    EXPECT_LT((so3_exp(v) - eigen_rot(v)).norm(), 1e-12);
  }
}

TEST(QuatExp, NearPiClosedForm) {
  const double a = kPi - 1e-3;
  const UnitQuaternion q = quat_exp(Vec3(a, 0, 0));
  EXPECT_NEAR(q.w(), std::cos(a / 2), 1e-15);
  EXPECT_NEAR(q.w(), 5e-4, 1e-9);
  EXPECT_NEAR(q.x(), 1.0, 1e-6);
}

TEST(QuatLog, RoundTripAtNormPointThree) {
  const Vec3 v = Vec3(1, -2, 0.5).normalized() * 0.3;
  EXPECT_LT((quat_log(quat_exp(v)) - v).norm(), 1e-12);
}

TEST(QuatLog, RoundTripRandom) {
  std::mt19937_64 g(9);
  for (int i = 0; i < 500; ++i) {
    Vec3 v = random_vec(g, 1.0);
    v *= (kPi - 1e-3) * std::uniform_real_distribution<double>(0.0, 1.0)(g) / std::max(v.norm(), 1e-12);
    EXPECT_LT((quat_log(quat_exp(v)) - v).norm(), 1e-9);
  }
  for (double n : {0.0, 1e-12, 1e-8, 1e-4}) {
    const Vec3 v = Vec3(0.6, 0.0, 0.8) * n;
    EXPECT_LT((quat_log(quat_exp(v)) - v).norm(), 1e-15);
  }
}

TEST(QuatLog, DegenerateAtPi) {
  EXPECT_THROW(quat_log(rot_z(180)), DegenerateRotation);
}

TEST(IntegrateGyro, ZeroRateKeepsAttitude) {
  const UnitQuaternion q(0.5, 0.5, -0.5, 0.5);
  EXPECT_LT(quat_gap(integrate_gyro(q, Vec3::Zero(), 0.01), q), 1e-15);
}

TEST(IntegrateGyro, ClosedFormQuarterTurn) {
  const UnitQuaternion q = integrate_gyro(UnitQuaternion::identity(), Vec3(0, 0, kPi), 0.5);
  EXPECT_LT(quat_gap(q, rot_z(90)), 1e-12);
}

TEST(IntegrateGyro, ConstantRateManySteps) {
  // 400 Hz for 1 s about a fixed axis equals one exponential of the total angle.
  const Vec3 w(0.3, -0.4, 1.2);
  UnitQuaternion q;
  for (int i = 0; i < 400; ++i) q = integrate_gyro(q, w, 1.0 / 400);
  EXPECT_LT((q.matrix() - eigen_rot(w)).norm(), 1e-12);
}

TEST(IntegrateGyro, RejectsNonPositiveDt) {
  EXPECT_THROW(integrate_gyro(UnitQuaternion{}, Vec3::Zero(), 0.0), std::invalid_argument);
}

TEST(Rotate, Basics) {
  const Vec3 v(1.5, -2, 3);
  EXPECT_LT((rotate(UnitQuaternion::identity(), v) - v).norm(), 1e-15);
  EXPECT_LT((rotate(rot_z(90), Vec3::UnitX()) - Vec3::UnitY()).norm(), 1e-15);
  const UnitQuaternion q(0.2, 0.4, -0.1, 0.9);
  EXPECT_LT((rotate(q, v) - q.matrix() * v).norm(), 1e-14);
}

TEST(Skew, CrossProduct) {
  const Vec3 a(1, 2, 3), b(-4, 0.5, 2);
  EXPECT_EQ(skew(a) * a, Vec3::Zero());
  EXPECT_LT((skew(a) * b - a.cross(b)).norm(), 1e-15);
  EXPECT_EQ(skew(a).transpose(), -skew(a));
}

TEST(RightJacobian, FirstOrderPerturbation) {
  const Vec3 v(0.4, -0.7, 0.2), d(1e-6, -2e-6, 0.5e-6);
  const Mat3 lhs = so3_exp(v + d);
  const Mat3 rhs = so3_exp(v) * so3_exp(so3_right_jacobian(v) * d);
  EXPECT_LT((lhs - rhs).norm(), 1e-11);
}

TEST(Slerp, EndpointsAndMidpoint) {
  const UnitQuaternion a = rot_z(10), b = rot_z(70);
  EXPECT_LT(quat_gap(slerp(a, b, 0.0), a), 1e-12);
  EXPECT_LT(quat_gap(slerp(a, b, 1.0), b), 1e-12);
  EXPECT_LT(quat_gap(slerp(a, b, 0.5), rot_z(40)), 1e-12);
}

TEST(RotationDistance, ConstantOffset) {
  const UnitQuaternion ref(0.3, 0.1, 0.2, 0.9);
  const UnitQuaternion est = ref * rot_z(10);
  EXPECT_NEAR(rotation_distance(ref, est).norm(), 10 * kPi / 180, 1e-12);
}

TEST(EulerXyz, RecoversAngles) {
  const Vec3 e(0.1, -0.2, 0.3);
  const Mat3 R = (Eigen::AngleAxisd(e.z(), Vec3::UnitZ()) * Eigen::AngleAxisd(e.y(), Vec3::UnitY()) *
                  Eigen::AngleAxisd(e.x(), Vec3::UnitX()))
                     .toRotationMatrix();
  EXPECT_LT((euler_xyz(UnitQuaternion::from_matrix(R)) - e).norm(), 1e-12);
}

TEST(FromMatrix, RoundTrip) {
  std::mt19937_64 g(2);
  for (int i = 0; i < 100; ++i) {
    const UnitQuaternion q = quat_exp(random_vec(g, 3.0));
    EXPECT_LT(quat_gap(UnitQuaternion::from_matrix(q.matrix()), q), 1e-12);
  }
}
