#pragma once

#include <cstddef>
#include <vector>

#include "dido/dynamics.hpp"
#include "dido/geom.hpp"
#include "dido/nn.hpp"
#include "dido/simkit.hpp"

namespace dido {

enum class LossPhase { Mse, Nll };

/// Scalar loss value with gradients w.r.t. per-sample predictions.
struct LossGrad {
  double value = 0.0;
  std::vector<Vec3> d_pred;  ///< bias or residual-force estimates
  std::vector<Vec3> d_xi;    ///< log-std heads (NLL phase only)
};

// ---------------------------------------------------------------------------
// De-bias losses

/// Raw IMU stream with ground-truth IMU attitude and velocity, constant dt.
struct ImuSegment {
  double dt = 0.0;
  std::vector<Vec3> gyro, accel;
  std::vector<UnitQuaternion> q_GI;
  std::vector<Vec3> v_GI;
  std::size_t size() const { return gyro.size(); }
};

/// Samples [begin, end) of a log; v_GI = v_GB - R_GI (omega_I x t_IB).
ImuSegment make_imu_segment(const FlightLog& log, const Vec3& t_IB, std::size_t begin,
                            std::size_t end);

/// Mean over non-overlapping windows of n steps of ||dv - dv_hat||^2, where
/// dv_hat sums (R (a - b_hat) + g_world) dt by forward Euler. b_hat holds one
/// estimate per sample. Throws InsufficientData when no full window fits.
LossGrad loss_debias_accel(const ImuSegment& seg, const std::vector<Vec3>& b_hat, std::size_t n);

/// Mean over windows of ||log(conj(q_hat) (x) q)||^2 with q_hat the product of
/// exp((gyro - b_hat) dt) over the window and q the true relative rotation.
LossGrad loss_debias_gyro(const ImuSegment& seg, const std::vector<Vec3>& b_hat, std::size_t n);

// ---------------------------------------------------------------------------
// Residual-dynamics loss

/// Per-sample target and model-only body accelerations.
struct ResDynSample {
  Vec3 a_target_B = Vec3::Zero();  ///< from ground-truth acceleration and lever terms
  Vec3 a_model_B = Vec3::Zero();   ///< (tau Uss e3 - Us D v_B)/m - R^T g
  double mass = 1.0;
};

/// Builds targets from a log with ground-truth parameters. omega and alpha
/// in the lever terms come from the low-pass filtered, truth-debiased gyro.
std::vector<ResDynSample> make_resdyn_samples(const FlightLog& log, const DynParams& params,
                                              double cutoff_hz = 15.0);

/// MSE: mean ||a_target - a_model - f_hat/m||^2.
/// NLL: (1/2N) sum [log det Sigma + ||m r||^2_Sigma], Sigma = diag(exp(2 xi)),
/// with the residual expressed as a force so Sigma is in N^2.
LossGrad loss_resdyn(const std::vector<ResDynSample>& samples, const std::vector<Vec3>& f_hat,
                     const std::vector<Vec3>& xi, LossPhase phase);

// ---------------------------------------------------------------------------
// V-P loss (single axis)

struct VpSequence {
  VecX v_true, p_true;  ///< relative to the sequence start, one entry per window
  VecX v_hat, p_hat;
  VecX xi_v, xi_p;      ///< NLL phase only
};

struct VpLossGrad {
  double value = 0.0;
  std::vector<VecX> d_v, d_p, d_xi_v, d_xi_p;
};

/// MSE: 1/(2 sum M) sum (e_v^2 + e_p^2). NLL adds log-variances and weights
/// the squared errors by exp(-2 xi).
VpLossGrad loss_vp(const std::vector<VpSequence>& batch, LossPhase phase);

// ---------------------------------------------------------------------------
// Extended-precision loss values, used by the finite-difference oracle.

using Vec3L = Vec3T<long double>;
using VecXL = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

long double loss_debias_accel_ext(const ImuSegment& seg, const std::vector<Vec3L>& b_hat,
                                  std::size_t n);
long double loss_debias_gyro_ext(const ImuSegment& seg, const std::vector<Vec3L>& b_hat,
                                 std::size_t n);
long double loss_resdyn_ext(const std::vector<ResDynSample>& samples,
                            const std::vector<Vec3L>& f_hat, const std::vector<Vec3L>& xi,
                            LossPhase phase);

struct VpPredictionExt {
  VecXL v_hat, p_hat, xi_v, xi_p;
};
/// Targets are read from batch; its prediction fields are ignored.
long double loss_vp_ext(const std::vector<VpSequence>& batch,
                        const std::vector<VpPredictionExt>& pred, LossPhase phase);

/// Lower bound of the NLL residual loss for fixed per-axis residuals,
/// attained at exp(2 xi) = r^2.
double nll_lower_bound(const std::vector<Vec3>& residual_force);

}  // namespace dido
