#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "dido/dynamics.hpp"

using namespace dido;

namespace {

DynParams hover_params() {
  DynParams p;
  p.mass = 1.0;
  p.tau = 1.1;
  return p;
}

RotorSpeeds hover_speeds(double tau = 1.1, double mass = 1.0) {
  return RotorSpeeds::uniform(std::sqrt(mass * 9.8 / (4.0 * tau)));
}

}  // namespace

TEST(BodyForce, NoActuationNoForce) {
  EXPECT_EQ(body_force(hover_params(), RotorSpeeds{}, Vec3(1, 2, 3), Vec3::Zero()), Vec3::Zero());
}

TEST(BodyForce, HoverBalance) {
  const Vec3 f = body_force(hover_params(), hover_speeds(), Vec3::Zero(), Vec3::Zero());
  EXPECT_LT((f - Vec3(0, 0, 9.8)).norm(), 1e-12);
}

TEST(BodyForce, LinearDragHandEvaluation) {
  DynParams p = hover_params();
  p.d = Vec3(0.1, 0.1, 0.0);
  const Vec3 f = body_force(p, RotorSpeeds::uniform(0.5), Vec3(1, 0, 0), Vec3::Zero());
  // Us = 2 so drag is -2 * 0.1 * 1; thrust is 1.1 * 4 * 0.25.
  EXPECT_NEAR(f.x(), -0.2, 1e-15);
  EXPECT_NEAR(f.z(), 1.1, 1e-15);
}

TEST(BodyForce, ResidualAdds) {
  const Vec3 r(0.1, -0.2, 0.3);
  EXPECT_LT((body_force(hover_params(), RotorSpeeds{}, Vec3::Zero(), r) - r).norm(), 1e-15);
}

TEST(AccelWorld, HoverIsZero) {
  const Vec3 a = accel_world(hover_params(), UnitQuaternion{}, hover_speeds(), Vec3::Zero(), Vec3::Zero());
  EXPECT_LT(a.norm(), 1e-12);
}

TEST(AccelWorld, FreeFall) {
  const Vec3 a = accel_world(hover_params(), UnitQuaternion{}, RotorSpeeds{}, Vec3::Zero(), Vec3::Zero());
  EXPECT_LT((a - Vec3(0, 0, -9.8)).norm(), 1e-15);
}

TEST(AccelWorld, TiltedThrustRotatesByHand) {
  const double th = std::numbers::pi / 6;
  const UnitQuaternion q = UnitQuaternion::from_axis_angle(Vec3::UnitX(), th);
  const Vec3 a = accel_world(hover_params(), q, hover_speeds(), Vec3::Zero(), Vec3::Zero());
  // Thrust 9.8 along body z; a rotation about x by th tips it towards -y.
  const Vec3 expect(0.0, -9.8 * std::sin(th), 9.8 * std::cos(th) - 9.8);
  EXPECT_LT((a - expect).norm(), 1e-12);
}

TEST(ImuAccelPredict, ZeroLeverArmEqualsBodyForce) {
  DynParams p = hover_params();
  p.d = Vec3(0.2, 0.3, 0.1);
  const UnitQuaternion q(0.9, 0.1, -0.2, 0.3);
  const Vec3 v_G(0.5, -1, 0.2);
  const RotorSpeeds u{{0.9, 1.0, 1.1, 0.95}};
  const Vec3 v_B = q.conj().matrix() * v_G;
  const Vec3 f = body_force(p, u, v_B, Vec3::Zero()) / p.mass;
  const Vec3 got = imu_accel_predict(p, q, u, v_G, Vec3::Zero(), Vec3(1, 2, 3), Vec3(-1, 0, 2));
  EXPECT_LT((got - f).norm(), 1e-12);
}

TEST(ImuAccelPredict, CentripetalTerm) {
  DynParams p = hover_params();
  p.t_IB = Vec3(0.1, 0, 0);
  const Vec3 got = imu_accel_predict(p, UnitQuaternion{}, RotorSpeeds{}, Vec3::Zero(), Vec3::Zero(),
                                     Vec3(0, 0, 2), Vec3::Zero());
  EXPECT_LT((got - Vec3(0.4, 0, 0)).norm(), 1e-12);
}

TEST(ImuAccelPredict, StaticHoverReadsGravity) {
  const Vec3 got = imu_accel_predict(hover_params(), UnitQuaternion{}, hover_speeds(), Vec3::Zero(),
                                     Vec3::Zero(), Vec3::Zero(), Vec3::Zero());
  EXPECT_LT((got - Vec3(0, 0, 9.8)).norm(), 1e-12);
}

TEST(HoverRotorSpeed, InvertsThrust) {
  DynParams p = hover_params();
  p.tau = 1.3;
  p.mass = 1.4;
  const double u = hover_rotor_speed(p);
  EXPECT_NEAR(p.tau * 4 * u * u, p.mass * 9.8, 1e-12);
}

TEST(DynParamsValidate, RejectsNonPhysical) {
  DynParams p;
  p.mass = 0.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = DynParams{};
  p.tau = -1.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = DynParams{};
  p.d = Vec3(0, -0.1, 0);
  EXPECT_THROW(p.validate(), std::invalid_argument);
  RotorSpeeds u = RotorSpeeds::uniform(-0.1);
  EXPECT_THROW(u.validate(), std::invalid_argument);
}
