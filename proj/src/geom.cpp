#include "dido/geom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "dido/errors.hpp"

namespace dido {

namespace {
constexpr double kSmallAngle = 1e-8;
constexpr double kLogSingularMargin = 1e-6;
}  // namespace

UnitQuaternion::UnitQuaternion(double w, double x, double y, double z) {
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (!std::isfinite(n) || n == 0.0) {
    throw std::invalid_argument("UnitQuaternion: zero or non-finite quaternion");
  }
  const double s = (w < 0.0 ? -1.0 : 1.0) / n;
  w_ = w * s;
  x_ = x * s;
  y_ = y * s;
  z_ = z * s;
}

UnitQuaternion::UnitQuaternion(const Vec4& wxyz)
    : UnitQuaternion(wxyz[0], wxyz[1], wxyz[2], wxyz[3]) {}

UnitQuaternion UnitQuaternion::from_axis_angle(const Vec3& axis, double angle) {
  const double n = axis.norm();
  if (n == 0.0) return identity();
  return quat_exp(axis / n * angle);
}

UnitQuaternion UnitQuaternion::from_matrix(const Mat3& R) {
  const Eigen::Quaterniond q(R);
  return {q.w(), q.x(), q.y(), q.z()};
}

UnitQuaternion UnitQuaternion::conj() const {
  UnitQuaternion c;
  c.w_ = w_;
  c.x_ = -x_;
  c.y_ = -y_;
  c.z_ = -z_;
  return c;
}

Mat3 UnitQuaternion::matrix() const {
  const double ww = w_ * w_, xx = x_ * x_, yy = y_ * y_, zz = z_ * z_;
  const double xy = x_ * y_, xz = x_ * z_, yz = y_ * z_;
  const double wx = w_ * x_, wy = w_ * y_, wz = w_ * z_;
  Mat3 R;
  R << ww + xx - yy - zz, 2.0 * (xy - wz), 2.0 * (xz + wy),
      2.0 * (xy + wz), ww - xx + yy - zz, 2.0 * (yz - wx),
      2.0 * (xz - wy), 2.0 * (yz + wx), ww - xx - yy + zz;
  return R;
}

double UnitQuaternion::angle() const {
  return 2.0 * std::atan2(vec().norm(), w_);
}

UnitQuaternion quat_mul(const UnitQuaternion& a, const UnitQuaternion& b) {
  return {a.w() * b.w() - a.x() * b.x() - a.y() * b.y() - a.z() * b.z(),
          a.w() * b.x() + a.x() * b.w() + a.y() * b.z() - a.z() * b.y(),
          a.w() * b.y() - a.x() * b.z() + a.y() * b.w() + a.z() * b.x(),
          a.w() * b.z() + a.x() * b.y() - a.y() * b.x() + a.z() * b.w()};
}

UnitQuaternion quat_exp(const Vec3& v) {
  const double theta = v.norm();
  if (theta < kSmallAngle) {
    const double t2 = theta * theta;
    const Vec3 xyz = 0.5 * (1.0 - t2 / 24.0) * v;
    return {1.0 - t2 / 8.0, xyz.x(), xyz.y(), xyz.z()};
  }
  const double half = 0.5 * theta;
  const Vec3 xyz = std::sin(half) / theta * v;
  return {std::cos(half), xyz.x(), xyz.y(), xyz.z()};
}

Vec3 quat_log(const UnitQuaternion& q) {
  const Vec3 u = q.vec();
  const double s = u.norm();
  const double w = q.w();
  const double theta = 2.0 * std::atan2(s, w);
  if (theta >= std::numbers::pi - kLogSingularMargin) {
    throw DegenerateRotation("quat_log: rotation angle too close to pi");
  }
  if (s < kSmallAngle) {
    return 2.0 / w * (1.0 - s * s / (3.0 * w * w)) * u;
  }
  return theta / s * u;
}

UnitQuaternion integrate_gyro(const UnitQuaternion& q, const Vec3& omega, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("integrate_gyro: dt must be positive");
  return q * quat_exp(omega * dt);
}

Vec3 rotate(const UnitQuaternion& q, const Vec3& v) {
  // v + 2w (u x v) + 2 u x (u x v)
  const Vec3 u = q.vec();
  const Vec3 t = 2.0 * u.cross(v);
  return v + q.w() * t + u.cross(t);
}

Mat3 skew(const Vec3& v) {
  Mat3 S;
  S << 0.0, -v.z(), v.y(),
      v.z(), 0.0, -v.x(),
      -v.y(), v.x(), 0.0;
  return S;
}

Mat3 so3_exp(const Vec3& v) {
  const double theta = v.norm();
  const Mat3 K = skew(v);
  if (theta < kSmallAngle) {
    return Mat3::Identity() + K + 0.5 * K * K;
  }
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Mat3::Identity() + a * K + b * K * K;
}

Mat3 so3_right_jacobian(const Vec3& v) {
  const double theta = v.norm();
  const Mat3 K = skew(v);
  if (theta < 1e-5) return Mat3::Identity() - 0.5 * K + K * K / 6.0;
  const double t2 = theta * theta;
  return Mat3::Identity() - (1.0 - std::cos(theta)) / t2 * K +
         (theta - std::sin(theta)) / (t2 * theta) * K * K;
}

UnitQuaternion slerp(const UnitQuaternion& a, const UnitQuaternion& b, double s) {
  Vec4 qa = a.coeffs();
  Vec4 qb = b.coeffs();
  double d = qa.dot(qb);
  if (d < 0.0) {
    qb = -qb;
    d = -d;
  }
  if (d > 1.0 - 1e-12) {
    return UnitQuaternion(qa + s * (qb - qa));
  }
  const double omega = std::acos(std::min(d, 1.0));
  const double so = std::sin(omega);
  return UnitQuaternion(std::sin((1.0 - s) * omega) / so * qa + std::sin(s * omega) / so * qb);
}

Vec3 rotation_distance(const UnitQuaternion& ref, const UnitQuaternion& est) {
  return quat_log(est.conj() * ref);
}

Vec3 euler_xyz(const UnitQuaternion& q) {
  const Mat3 R = q.matrix();
  const double pitch = std::asin(std::clamp(-R(2, 0), -1.0, 1.0));
  const double roll = std::atan2(R(2, 1), R(2, 2));
  const double yaw = std::atan2(R(1, 0), R(0, 0));
  return {roll, pitch, yaw};
}

}  // namespace dido
