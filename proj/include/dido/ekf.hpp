#pragma once

#include <cstddef>

#include <Eigen/Dense>

#include "dido/dynamics.hpp"
#include "dido/geom.hpp"

namespace dido {

inline constexpr int kTransDim = 16;
using Mat16 = Eigen::Matrix<double, kTransDim, kTransDim>;
using Vec16 = Eigen::Matrix<double, kTransDim, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// Error-state layout of the translation stage.
namespace ix {
inline constexpr int p = 0, v = 3, tau = 6, d = 7, th = 10, t = 13;
}

/// Rotation stage: q_GI with a right-multiplicative error q = q_hat (x) exp(dtheta).
struct RotStageState {
  UnitQuaternion q_GI;
  Mat3 P = Mat3::Identity() * 1e-8;
};

enum class AnchorMode { Known, Consider };

/// Sequence anchor for V-P observations: the filter's v_GI / p_GI estimate
/// at the sequence start. In consider mode its error is kept in the
/// covariance (cross terms with the live state) but never corrected.
struct VpAnchor {
  bool active = false;
  double t = 0.0;
  Vec3 p_GI = Vec3::Zero();
  Vec3 v_GI = Vec3::Zero();
  Mat6 cov = Mat6::Zero();                              ///< [dp_GI; dv_GI]
  Eigen::Matrix<double, kTransDim, 6> cross = Eigen::Matrix<double, kTransDim, 6>::Zero();
};

/// Translation stage mean and error-state covariance over
/// [dp(3), dv(3), dtau(1), dd(3), dtheta_IB(3), dt_IB(3)].
struct TransStageState {
  Vec3 p_GB = Vec3::Zero();
  Vec3 v_GB = Vec3::Zero();
  double tau = 1.1;
  Vec3 d = Vec3::Zero();
  UnitQuaternion q_IB;
  Vec3 t_IB = Vec3::Zero();
  Mat16 P = Mat16::Identity();
  VpAnchor anchor;

  /// Model parameters implied by the state for a given mass.
  DynParams params(double mass) const;
};

/// Initial values and variances of the translation stage (defaults: the
/// tabulated flight setting).
struct FilterInit {
  double tau = 1.1;
  Vec3 d = Vec3::Zero();
  UnitQuaternion q_IB;
  Vec3 t_IB = Vec3::Zero();
  double var_q = 1e-8;
  double var_p = 1e-4;
  double var_v = 1e-6;
  double var_tau = 1e-4;
  double var_d = 5e-4;
  double var_q_IB = 5e-5;
  double var_t_IB = 5e-4;
};

struct FilterConfig {
  double mass = 1.0;               ///< known vehicle mass, kg
  double sigma_gyro = 1e-3;        ///< per-sample gyro white-noise std, rad/s
  double sigma_accel = 0.05;       ///< per-sample accelerometer std, m/s^2
  double sigma_gravity = 1.0;      ///< gravity-alignment measurement std, m/s^2
  double gravity_norm_gate = 1.0;  ///< skip gravity update when | |a| - g | exceeds this
  std::size_t gravity_every = 1;   ///< gravity update every n IMU samples
  double sigma_tau_walk = 0.0;     ///< stabilising random walks, per sqrt(s)
  double sigma_d_walk = 0.0;
  double sigma_q_IB_walk = 0.0;
  double sigma_t_IB_walk = 0.0;
  double scale_accel = 1.0;        ///< covariance scale on the accelerometer update
  double scale_vp = 1.0;           ///< covariance scale on V-P observations
  bool gate = false;               ///< chi-square innovation gate
  double gate_quantile = 0.999;    ///< 0.95, 0.99 or 0.999
  AnchorMode anchor = AnchorMode::Consider;
  double rate_cutoff_hz = 15.0;
  /// Correlation time (s) used to feed the rotation-stage covariance into the
  /// translation process noise as an attitude-input density; 0 disables.
  double attitude_coupling_s = 2.0;
  bool gravity_update = true;
  bool accel_update = true;
  bool vp_update = true;
  FilterInit init;

  /// Throws ConfigError.
  void validate() const;
};

struct UpdateInfo {
  bool accepted = false;
  double nis = 0.0;  ///< normalised innovation squared
};

/// Chi-square quantile for dof 1..6 at 0.95, 0.99 or 0.999.
double chi2_quantile(int dof, double p);

// ---------------------------------------------------------------------------
// Rotation stage

/// q <- q (x) exp(omega dt); P <- F P F^T + Sigma_omega dt with
/// F = exp(-[omega]x dt). Sigma_omega is a rate density (rad^2/s^2 * s).
void rot_predict(RotStageState& s, const Vec3& omega_hat, double dt, const Mat3& Sigma_omega);

/// Gravity alignment: a_hat = R_GI^T [0,0,g] + n. Throws UpdateRejected for
/// |a_hat| <= 1 m/s^2 or when the optional gate refuses it.
UpdateInfo rot_update_gravity(RotStageState& s, const Vec3& a_hat, const Mat3& Sigma_a,
                              bool gate = false, double gate_quantile = 0.999);

/// Measurement Jacobian of the gravity update wrt dtheta: [R_GI^T g]x.
Mat3 gravity_jacobian(const UnitQuaternion& q_GI);

// ---------------------------------------------------------------------------
// Translation stage

/// World acceleration of the body implied by the state.
Vec3 trans_accel(const TransStageState& s, double mass, const RotorSpeeds& u,
                 const UnitQuaternion& q_GI, const Vec3& f_res);

/// Jacobian of trans_accel wrt the 16 error coordinates (3 x 16).
Eigen::Matrix<double, 3, kTransDim> trans_accel_jacobian(const TransStageState& s, double mass,
                                                         const RotorSpeeds& u,
                                                         const UnitQuaternion& q_GI,
                                                         const Vec3& f_res);

struct ProcessNoise {
  Vec3 sigma2_f = Vec3::Constant(1e-6);  ///< residual-force density, N^2 s
  double tau = 0.0, d = 0.0, q_IB = 0.0, t_IB = 0.0;  ///< random-walk variances per s
  /// Attitude-input error density (rad^2 s) on the right of q_GI, mapped
  /// onto the acceleration like the residual force.
  Mat3 attitude = Mat3::Zero();
};

/// p += v dt + a dt^2/2, v += a dt with R_GB = R_GI R_IB and the force
/// evaluated at the mid-step attitude q_GI exp(omega_I dt/2) and velocity;
/// tau, d, extrinsics constant. Returns the transition matrix used.
Mat16 trans_predict(TransStageState& s, double mass, const RotorSpeeds& u,
                    const UnitQuaternion& q_GI, const ResidualForce& f, double dt,
                    const ProcessNoise& noise, const Vec3& omega_I = Vec3::Zero());

/// Accelerometer model at the IMU point and its Jacobian.
Vec3 trans_accel_measurement(const TransStageState& s, double mass, const RotorSpeeds& u,
                             const UnitQuaternion& q_GI, const Vec3& f_res,
                             const Vec3& omega_hat, const Vec3& alpha_hat);
Eigen::Matrix<double, 3, kTransDim> trans_accel_measurement_jacobian(
    const TransStageState& s, double mass, const RotorSpeeds& u, const UnitQuaternion& q_GI,
    const Vec3& f_res, const Vec3& omega_hat, const Vec3& alpha_hat);

/// Specific-force update. Measurement noise Sigma_a plus the residual-force
/// covariance mapped through R_IB / m.
UpdateInfo trans_update_accel(TransStageState& s, double mass, const Vec3& a_meas,
                              const Vec3& omega_hat, const Vec3& alpha_hat, const RotorSpeeds& u,
                              const UnitQuaternion& q_GI, const ResidualForce& f,
                              const Mat3& Sigma_a, bool gate = false,
                              double gate_quantile = 0.999);

/// IMU-point velocity and position implied by the state.
Vec3 state_v_GI(const TransStageState& s, const UnitQuaternion& q_GI, const Vec3& omega_hat);
Vec3 state_p_GI(const TransStageState& s, const UnitQuaternion& q_GI);

/// Records the current v_GI / p_GI as the sequence anchor.
void trans_set_anchor(TransStageState& s, double t, const UnitQuaternion& q_GI,
                      const Vec3& omega_hat, AnchorMode mode);

/// Stacked velocity / position update of the IMU point:
///   v_hat = v_GB - R_GI (omega x t_IB),  p_hat = p_GB - R_GI t_IB.
/// The observation must be formed against the current anchor.
struct VpObservation;
UpdateInfo trans_update_vp(TransStageState& s, const VpObservation& obs,
                           const UnitQuaternion& q_GI, const Vec3& omega_hat, double cov_scale = 1.0,
                           bool gate = false, double gate_quantile = 0.999);

/// Stacked 6 x 16 Jacobian of the V-P model (rows: velocity, then position).
Eigen::Matrix<double, 6, kTransDim> trans_vp_jacobian(const TransStageState& s,
                                                      const UnitQuaternion& q_GI,
                                                      const Vec3& omega_hat);

/// Initial translation state from the filter init block.
TransStageState make_trans_state(const Vec3& p_GB, const Vec3& v_GB, const FilterInit& init);

/// Smallest eigenvalue of the symmetric part.
double min_eigenvalue(const Mat16& P);

}  // namespace dido
