#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace dido {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec4 = Eigen::Vector4d;

/// Gravity magnitude used throughout (m/s^2).
inline constexpr double kGravity = 9.8;

/// World frame is z-up: gravitational acceleration points along -z.
inline Vec3 gravity_world() { return Vec3(0.0, 0.0, -kGravity); }

/// The accelerometer gravity term: a static, level IMU reads +kGravity on z.
inline Vec3 gravity_up() { return Vec3(0.0, 0.0, kGravity); }

inline Vec3 e3() { return Vec3::UnitZ(); }

/// Hamilton unit quaternion (w, x, y, z).
///
/// Every constructor normalizes and picks the w >= 0 representative, so two
/// quaternions describing the same rotation compare equal component-wise.
class UnitQuaternion {
 public:
  UnitQuaternion() = default;
  /// Throws std::invalid_argument on a zero or non-finite input.
  UnitQuaternion(double w, double x, double y, double z);
  explicit UnitQuaternion(const Vec4& wxyz);

  static UnitQuaternion identity() { return {}; }
  static UnitQuaternion from_axis_angle(const Vec3& axis, double angle);
  static UnitQuaternion from_matrix(const Mat3& R);

  double w() const { return w_; }
  double x() const { return x_; }
  double y() const { return y_; }
  double z() const { return z_; }
  Vec3 vec() const { return {x_, y_, z_}; }
  Vec4 coeffs() const { return {w_, x_, y_, z_}; }

  UnitQuaternion conj() const;
  /// Rotation matrix R such that rotate(q, v) == R * v.
  Mat3 matrix() const;
  /// Rotation angle in [0, pi].
  double angle() const;

 private:
  double w_ = 1.0;
  double x_ = 0.0;
  double y_ = 0.0;
  double z_ = 0.0;
};

UnitQuaternion quat_mul(const UnitQuaternion& a, const UnitQuaternion& b);
inline UnitQuaternion operator*(const UnitQuaternion& a, const UnitQuaternion& b) {
  return quat_mul(a, b);
}

/// exp(v) = (cos|v|/2, sin(|v|/2) v/|v|).
UnitQuaternion quat_exp(const Vec3& v);

/// Inverse of quat_exp. Throws DegenerateRotation when the rotation angle is
/// within 1e-6 of pi, where the axis is ill-defined.
Vec3 quat_log(const UnitQuaternion& q);

/// q (x) exp(omega * dt), omega expressed in the body frame of q.
/// Throws std::invalid_argument when dt <= 0.
UnitQuaternion integrate_gyro(const UnitQuaternion& q, const Vec3& omega, double dt);

Vec3 rotate(const UnitQuaternion& q, const Vec3& v);

/// skew(a) * b == a.cross(b).
Mat3 skew(const Vec3& v);

/// Rodrigues rotation matrix exp([v]x).
Mat3 so3_exp(const Vec3& v);

/// Right Jacobian of SO(3): exp(v + d) ~= exp(v) exp(J_r(v) d).
Mat3 so3_right_jacobian(const Vec3& v);

/// Spherical interpolation, s in [0, 1], along the shorter arc.
UnitQuaternion slerp(const UnitQuaternion& a, const UnitQuaternion& b, double s);

/// Rotation distance vector log(conj(est) (x) ref).
Vec3 rotation_distance(const UnitQuaternion& ref, const UnitQuaternion& est);

/// Tait-Bryan XYZ angles (roll, pitch, yaw) of R = Rz(yaw) Ry(pitch) Rx(roll).
Vec3 euler_xyz(const UnitQuaternion& q);

}  // namespace dido
