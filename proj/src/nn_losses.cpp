#include "dido/nn_losses.hpp"

#include <cmath>

#include "dido/errors.hpp"
#include "dido/rate_filter.hpp"

namespace dido {

ImuSegment make_imu_segment(const FlightLog& log, const Vec3& t_IB, std::size_t begin,
                            std::size_t end) {
  if (end > log.imu.size() || end > log.truth.size() || begin >= end) {
    throw RangeError("make_imu_segment: bad sample range");
  }
  ImuSegment seg;
  seg.dt = log.imu_dt();
  for (std::size_t i = begin; i < end; ++i) {
    const TruthSample& tr = log.truth[i];
    seg.gyro.push_back(log.imu[i].gyro);
    seg.accel.push_back(log.imu[i].accel);
    seg.q_GI.push_back(tr.q_GI);
    seg.v_GI.push_back(tr.v_GB - tr.q_GI.matrix() * tr.omega_I.cross(t_IB));
  }
  return seg;
}

namespace {

std::size_t window_count(const ImuSegment& seg, const std::vector<Vec3>& b_hat, std::size_t n) {
  if (b_hat.size() != seg.size()) throw ShapeError("loss: one bias estimate per sample required");
  if (n == 0 || seg.size() < n + 1) throw InsufficientData("loss: no complete window");
  return (seg.size() - 1) / n;
}

}  // namespace

LossGrad loss_debias_accel(const ImuSegment& seg, const std::vector<Vec3>& b_hat, std::size_t n) {
  const std::size_t N = window_count(seg, b_hat, n);
  LossGrad out;
  out.d_pred.assign(seg.size(), Vec3::Zero());
  const double dt = seg.dt;
  for (std::size_t w = 0; w < N; ++w) {
    const std::size_t i = w * n;
    Vec3 dv_hat = Vec3::Zero();
    for (std::size_t j = i; j < i + n; ++j) {
      dv_hat += (seg.q_GI[j].matrix() * (seg.accel[j] - b_hat[j]) + gravity_world()) * dt;
    }
    const Vec3 e = seg.v_GI[i + n] - seg.v_GI[i] - dv_hat;
    out.value += e.squaredNorm() / static_cast<double>(N);
    for (std::size_t j = i; j < i + n; ++j) {
      out.d_pred[j] += 2.0 * dt / static_cast<double>(N) * seg.q_GI[j].matrix().transpose() * e;
    }
  }
  return out;
}

LossGrad loss_debias_gyro(const ImuSegment& seg, const std::vector<Vec3>& b_hat, std::size_t n) {
  const std::size_t N = window_count(seg, b_hat, n);
  LossGrad out;
  out.d_pred.assign(seg.size(), Vec3::Zero());
  const double dt = seg.dt;
  std::vector<Vec3> phi(n);
  for (std::size_t w = 0; w < N; ++w) {
    const std::size_t i = w * n;
    UnitQuaternion q_hat;
    for (std::size_t j = 0; j < n; ++j) {
      phi[j] = (seg.gyro[i + j] - b_hat[i + j]) * dt;
      q_hat = q_hat * quat_exp(phi[j]);
    }
    const UnitQuaternion q_rel = seg.q_GI[i].conj() * seg.q_GI[i + n];
    const Vec3 e = quat_log(q_hat.conj() * q_rel);
    out.value += e.squaredNorm() / static_cast<double>(N);
    // dL/db_j = (2 dt / N) J_r(phi_j)^T R(B_j) e, B_j = product of steps after j.
    UnitQuaternion after;
    for (std::size_t j = n; j-- > 0;) {
      out.d_pred[i + j] += 2.0 * dt / static_cast<double>(N) *
                           so3_right_jacobian(phi[j]).transpose() * (after.matrix() * e);
      after = quat_exp(phi[j]) * after;
    }
  }
  return out;
}

std::vector<ResDynSample> make_resdyn_samples(const FlightLog& log, const DynParams& params,
                                              double cutoff_hz) {
  if (log.truth.size() != log.imu.size() || log.imu.size() < 2) {
    throw InsufficientData("make_resdyn_samples: log needs truth and at least 2 samples");
  }
  RateFilter filt(cutoff_hz, log.imu_dt());
  const Mat3 R_IB = params.q_IB.matrix();
  const Vec3& t = params.t_IB;
  std::vector<ResDynSample> out;
  out.reserve(log.imu.size());
  for (std::size_t k = 0; k < log.imu.size(); ++k) {
    const TruthSample& tr = log.truth[k];
    filt.update(log.imu[k].gyro - tr.b_gyro);
    const Mat3 R_GI = tr.q_GI.matrix();
    const Mat3 R_GB = R_GI * R_IB;
    // Ground-truth IMU-point acceleration from the true body motion.
    const Vec3 lever_true = tr.omega_I.cross(tr.omega_I.cross(t)) + tr.alpha_I.cross(t);
    const Vec3 a_GI = tr.a_GB - R_GI * lever_true;
    const Vec3 w = filt.omega(), al = filt.alpha();
    ResDynSample s;
    s.mass = params.mass;
    s.a_target_B = R_GB.transpose() * a_GI + R_IB.transpose() * (w.cross(w.cross(t)) + al.cross(t));
    const RotorSpeeds& u = log.rotor_at(tr.t).u;
    const Vec3 v_B = R_GB.transpose() * tr.v_GB;
    s.a_model_B = body_force(params, u, v_B, Vec3::Zero()) / params.mass -
                  R_GB.transpose() * gravity_up();
    out.push_back(s);
  }
  return out;
}

LossGrad loss_resdyn(const std::vector<ResDynSample>& samples, const std::vector<Vec3>& f_hat,
                     const std::vector<Vec3>& xi, LossPhase phase) {
  const std::size_t N = samples.size();
  if (N == 0) throw InsufficientData("loss_resdyn: empty batch");
  if (f_hat.size() != N) throw ShapeError("loss_resdyn: f_hat size mismatch");
  if (phase == LossPhase::Nll && xi.size() != N) throw ShapeError("loss_resdyn: xi size mismatch");
  const double inv_n = 1.0 / static_cast<double>(N);
  LossGrad out;
  out.d_pred.assign(N, Vec3::Zero());
  if (phase == LossPhase::Nll) out.d_xi.assign(N, Vec3::Zero());
  for (std::size_t i = 0; i < N; ++i) {
    const double m = samples[i].mass;
    const Vec3 r = samples[i].a_target_B - samples[i].a_model_B - f_hat[i] / m;
    if (phase == LossPhase::Mse) {
      out.value += r.squaredNorm() * inv_n;
      out.d_pred[i] = -2.0 / m * r * inv_n;
    } else {
      const Vec3 rf = m * r;
      const Vec3 inv_var = (-2.0 * xi[i]).array().exp();
      out.value += 0.5 * inv_n *
                   (2.0 * xi[i].sum() + rf.cwiseProduct(rf).cwiseProduct(inv_var).sum());
      out.d_pred[i] = -inv_n * rf.cwiseProduct(inv_var);
      out.d_xi[i] = inv_n * (Vec3::Ones() - rf.cwiseProduct(rf).cwiseProduct(inv_var));
    }
  }
  return out;
}

VpLossGrad loss_vp(const std::vector<VpSequence>& batch, LossPhase phase) {
  std::size_t total = 0;
  for (const auto& s : batch) {
    const auto M = s.v_true.size();
    if (s.p_true.size() != M || s.v_hat.size() != M || s.p_hat.size() != M)
      throw ShapeError("loss_vp: sequence length mismatch");
    if (phase == LossPhase::Nll && (s.xi_v.size() != M || s.xi_p.size() != M))
      throw ShapeError("loss_vp: xi length mismatch");
    total += static_cast<std::size_t>(M);
  }
  if (total == 0) throw InsufficientData("loss_vp: empty batch");
  const double c = 1.0 / (2.0 * static_cast<double>(total));
  VpLossGrad out;
  for (const auto& s : batch) {
    const VecX ev = s.v_true - s.v_hat;
    const VecX ep = s.p_true - s.p_hat;
    if (phase == LossPhase::Mse) {
      out.value += c * (ev.squaredNorm() + ep.squaredNorm());
      out.d_v.push_back(-2.0 * c * ev);
      out.d_p.push_back(-2.0 * c * ep);
    } else {
      const VecX iv = (-2.0 * s.xi_v).array().exp();
      const VecX ip = (-2.0 * s.xi_p).array().exp();
      out.value += c * (2.0 * s.xi_v.sum() + 2.0 * s.xi_p.sum() +
                        (ev.array().square() * iv.array()).sum() +
                        (ep.array().square() * ip.array()).sum());
      out.d_v.push_back((-2.0 * c * ev.array() * iv.array()).matrix());
      out.d_p.push_back((-2.0 * c * ep.array() * ip.array()).matrix());
      out.d_xi_v.push_back((2.0 * c * (1.0 - ev.array().square() * iv.array())).matrix());
      out.d_xi_p.push_back((2.0 * c * (1.0 - ep.array().square() * ip.array())).matrix());
    }
  }
  return out;
}

namespace {

using L = long double;
using Vec4L = Eigen::Matrix<L, 4, 1>;

Vec4L qmul(const Vec4L& a, const Vec4L& b) {
  return {a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
          a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
          a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
          a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
}

Vec4L qconj(const Vec4L& q) { return {q[0], -q[1], -q[2], -q[3]}; }

Vec4L qexp(const Vec3L& v) {
  const L th = v.norm();
  if (th < 1e-12L) return {1.0L - th * th / 8.0L, 0.5L * v[0], 0.5L * v[1], 0.5L * v[2]};
  const L s = std::sin(th / 2) / th;
  return {std::cos(th / 2), s * v[0], s * v[1], s * v[2]};
}

Vec3L qlog(Vec4L q) {
  q /= q.norm();
  if (q[0] < 0) q = -q;
  const Vec3L u = q.tail<3>();
  const L s = u.norm();
  if (s < 1e-15L) return 2.0L / q[0] * u;
  return 2.0L * std::atan2(s, q[0]) / s * u;
}

Vec4L qcoeffs(const UnitQuaternion& q) { return q.coeffs().cast<L>(); }

std::size_t window_count_ext(const ImuSegment& seg, std::size_t nb, std::size_t n) {
  if (nb != seg.size()) throw ShapeError("loss: one bias estimate per sample required");
  if (n == 0 || seg.size() < n + 1) throw InsufficientData("loss: no complete window");
  return (seg.size() - 1) / n;
}

}  // namespace

long double loss_debias_accel_ext(const ImuSegment& seg, const std::vector<Vec3L>& b_hat,
                                  std::size_t n) {
  const std::size_t N = window_count_ext(seg, b_hat.size(), n);
  const L dt = seg.dt;
  const Vec3L g = gravity_world().cast<L>();
  L value = 0;
  for (std::size_t w = 0; w < N; ++w) {
    const std::size_t i = w * n;
    Vec3L dv = Vec3L::Zero();
    for (std::size_t j = i; j < i + n; ++j) {
      dv += (seg.q_GI[j].matrix().cast<L>() * (seg.accel[j].cast<L>() - b_hat[j]) + g) * dt;
    }
    const Vec3L e = (seg.v_GI[i + n] - seg.v_GI[i]).cast<L>() - dv;
    value += e.squaredNorm();
  }
  return value / static_cast<L>(N);
}

long double loss_debias_gyro_ext(const ImuSegment& seg, const std::vector<Vec3L>& b_hat,
                                 std::size_t n) {
  const std::size_t N = window_count_ext(seg, b_hat.size(), n);
  const L dt = seg.dt;
  L value = 0;
  for (std::size_t w = 0; w < N; ++w) {
    const std::size_t i = w * n;
    Vec4L q_hat(1, 0, 0, 0);
    for (std::size_t j = i; j < i + n; ++j) {
      q_hat = qmul(q_hat, qexp((seg.gyro[j].cast<L>() - b_hat[j]) * dt));
      q_hat /= q_hat.norm();
    }
    const Vec4L q_rel = qmul(qconj(qcoeffs(seg.q_GI[i])), qcoeffs(seg.q_GI[i + n]));
    value += qlog(qmul(qconj(q_hat), q_rel)).squaredNorm();
  }
  return value / static_cast<L>(N);
}

long double loss_resdyn_ext(const std::vector<ResDynSample>& samples,
                            const std::vector<Vec3L>& f_hat, const std::vector<Vec3L>& xi,
                            LossPhase phase) {
  const std::size_t N = samples.size();
  if (N == 0) throw InsufficientData("loss_resdyn: empty batch");
  if (f_hat.size() != N) throw ShapeError("loss_resdyn: f_hat size mismatch");
  if (phase == LossPhase::Nll && xi.size() != N) throw ShapeError("loss_resdyn: xi size mismatch");
  L value = 0;
  for (std::size_t i = 0; i < N; ++i) {
    const L m = samples[i].mass;
    const Vec3L r = (samples[i].a_target_B - samples[i].a_model_B).cast<L>() - f_hat[i] / m;
    if (phase == LossPhase::Mse) {
      value += r.squaredNorm();
    } else {
      const Vec3L rf = m * r;
      value += 0.5L * (2.0L * xi[i].sum() +
                       (rf.array().square() * (-2.0L * xi[i].array()).exp()).sum());
    }
  }
  return value / static_cast<L>(N);
}

long double loss_vp_ext(const std::vector<VpSequence>& batch,
                        const std::vector<VpPredictionExt>& pred, LossPhase phase) {
  if (pred.size() != batch.size()) throw ShapeError("loss_vp: batch size mismatch");
  std::size_t total = 0;
  L value = 0;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const auto& s = batch[k];
    const auto& p = pred[k];
    const auto M = s.v_true.size();
    if (s.p_true.size() != M || p.v_hat.size() != M || p.p_hat.size() != M)
      throw ShapeError("loss_vp: sequence length mismatch");
    total += static_cast<std::size_t>(M);
    const VecXL ev = s.v_true.cast<L>() - p.v_hat;
    const VecXL ep = s.p_true.cast<L>() - p.p_hat;
    if (phase == LossPhase::Mse) {
      value += ev.squaredNorm() + ep.squaredNorm();
    } else {
      if (p.xi_v.size() != M || p.xi_p.size() != M) throw ShapeError("loss_vp: xi length mismatch");
      value += 2.0L * p.xi_v.sum() + 2.0L * p.xi_p.sum() +
               (ev.array().square() * (-2.0L * p.xi_v.array()).exp()).sum() +
               (ep.array().square() * (-2.0L * p.xi_p.array()).exp()).sum();
    }
  }
  if (total == 0) throw InsufficientData("loss_vp: empty batch");
  return value / (2.0L * static_cast<L>(total));
}

double nll_lower_bound(const std::vector<Vec3>& residual_force) {
  if (residual_force.empty()) throw InsufficientData("nll_lower_bound: empty batch");
  double s = 0.0;
  for (const auto& r : residual_force)
    for (int k = 0; k < 3; ++k) s += 0.5 * std::log(r[k] * r[k]) + 0.5;
  return s / static_cast<double>(residual_force.size());
}

}  // namespace dido
