#include "dido/pipeline.hpp"

#include <cmath>
#include <span>

#include "dido/errors.hpp"
#include "dido/rate_filter.hpp"

namespace dido {

UnitQuaternion align_to_gravity(const Vec3& accel) {
  if (!(accel.norm() > 1.0)) throw UpdateRejected("align_to_gravity: near free fall");
  // R^T up = a / |a|: rotate the measured up direction onto the world z axis.
  const Vec3 up = accel.normalized();
  const Vec3 axis = up.cross(e3());
  const double s = axis.norm(), c = up.dot(e3());
  if (s < 1e-12) return c > 0 ? UnitQuaternion() : UnitQuaternion::from_axis_angle(Vec3::UnitX(), M_PI);
  return UnitQuaternion::from_axis_angle(axis / s, std::atan2(s, c));
}

namespace {

bool finite(const TransStageState& s, const RotStageState& r) {
  return s.p_GB.allFinite() && s.v_GB.allFinite() && std::isfinite(s.tau) && s.d.allFinite() &&
         s.t_IB.allFinite() && s.P.allFinite() && r.P.allFinite() &&
         std::isfinite(r.q_GI.w()) && std::isfinite(s.q_IB.w());
}

}  // namespace

RunResult run_two_stage(const FlightLog& log, const ProviderConfig& providers,
                        const FilterConfig& filter, std::uint64_t seed,
                        const InitialOverride& init) {
  log.validate();
  providers.validate();
  filter.validate();
  const std::size_t N = log.imu.size();
  if (N < 2) throw InsufficientData("run_two_stage: log needs at least 2 IMU samples");
  if (log.rotors.empty()) throw InsufficientData("run_two_stage: log has no rotor samples");
  const bool have_truth = log.truth.size() == N;
  auto truth_at = [&](std::size_t k) -> const TruthSample* {
    return have_truth ? &log.truth[k] : nullptr;
  };
  const double dt_nom = log.imu_dt();

  DebiasProvider debias(providers.debias, seed);
  ResidualProvider residual(providers.residual, seed);
  VpProvider vp(providers.vp, dt_nom, seed);
  RateFilter rate(filter.rate_cutoff_hz, dt_nom);

  RunResult out;
  RotStageState rot;
  if (init.rot) {
    rot = *init.rot;
  } else {
    rot.q_GI = have_truth ? log.truth[0].q_GI : align_to_gravity(log.imu[0].accel);
    rot.P = Mat3::Identity() * filter.init.var_q;
  }
  TransStageState tr;
  if (init.trans) {
    tr = *init.trans;
  } else {
    tr = have_truth ? make_trans_state(log.truth[0].p_GB, log.truth[0].v_GB, filter.init)
                    : make_trans_state(Vec3::Zero(), Vec3::Zero(), filter.init);
  }

  const double m = filter.mass;
  const Mat3 Sigma_grav = Mat3::Identity() * (filter.sigma_gravity * filter.sigma_gravity);
  const Mat3 Sigma_a =
      Mat3::Identity() * (filter.sigma_accel * filter.sigma_accel * filter.scale_accel);
  ProcessNoise pn;
  pn.tau = filter.sigma_tau_walk * filter.sigma_tau_walk;
  pn.d = filter.sigma_d_walk * filter.sigma_d_walk;
  pn.q_IB = filter.sigma_q_IB_walk * filter.sigma_q_IB_walk;
  pn.t_IB = filter.sigma_t_IB_walk * filter.sigma_t_IB_walk;

  BiasEstimate bias;
  ResidualForce fres;
  fres.sigma2_f = Vec3::Constant(std::max(providers.residual.null_sigma * providers.residual.null_sigma, 1e-6));
  const std::size_t rw = providers.residual.window;
  MatX res_window = MatX::Zero(10, static_cast<Eigen::Index>(rw));
  std::size_t res_filled = 0;

  out.steps.reserve(N);
  for (std::size_t k = 0; k < N; ++k) {
    const ImuSample& imu = log.imu[k];
    const TruthSample* truth = truth_at(k);
    const RotorSpeeds& u = log.rotor_at(imu.t).u;

    const std::size_t bw = providers.debias.window;
    if (k + 1 >= bw && (k + 1 - bw) % providers.debias.stride == 0) {
      bias = debias.estimate(std::span<const ImuSample>(log.imu.data() + (k + 1 - bw), bw), truth);
    }
    const Vec3 w_hat = imu.gyro - bias.b_gyro;
    const Vec3 a_hat = imu.accel - bias.b_accel;
    rate.update(w_hat);
    const Vec3 w_f = rate.omega(), al_f = rate.alpha();

    if (filter.gravity_update && k % filter.gravity_every == 0) {
      if (std::abs(a_hat.norm() - kGravity) <= filter.gravity_norm_gate) {
        try {
          rot_update_gravity(rot, a_hat, Sigma_grav, filter.gate, filter.gate_quantile);
          ++out.counters.gravity_updates;
        } catch (const UpdateRejected&) {
          ++out.counters.gravity_rejected;
        }
      } else {
        ++out.counters.gravity_skipped;
      }
    }
    const UnitQuaternion q_GI = rot.q_GI;

    // Residual-force window: [v_B; omega_B; u] from current estimates.
    {
      const Mat3 R_IB = tr.q_IB.matrix();
      Eigen::Matrix<double, 10, 1> col;
      col << (q_GI.matrix() * R_IB).transpose() * tr.v_GB, R_IB.transpose() * w_f, u.u[0], u.u[1],
          u.u[2], u.u[3];
      if (rw > 1) res_window.leftCols(static_cast<Eigen::Index>(rw - 1)) = res_window.rightCols(static_cast<Eigen::Index>(rw - 1)).eval();
      res_window.col(static_cast<Eigen::Index>(rw - 1)) = col;
      ++res_filled;
      if (res_filled >= rw && (res_filled - rw) % providers.residual.stride == 0)
        fres = residual.estimate(res_window, truth);
    }

    if (filter.accel_update) {
      const auto info = trans_update_accel(tr, m, a_hat, w_f, al_f, u, q_GI, fres, Sigma_a,
                                           filter.gate, filter.gate_quantile);
      ++(info.accepted ? out.counters.accel_updates : out.counters.accel_rejected);
    }

    if (k == 0) {
      trans_set_anchor(tr, imu.t, q_GI, w_hat, filter.anchor);
      vp.begin_sequence(imu.t, tr.anchor.v_GI, truth);
      ++out.counters.anchors;
    }
    if (const auto rel = vp.observe(imu.t, truth)) {
      if (filter.vp_update && providers.vp.mode != ProviderMode::Null) {
        const VpObservation obs = anchor_observation(*rel, tr.anchor.v_GI, tr.anchor.p_GI);
        const auto info = trans_update_vp(tr, obs, q_GI, w_hat, filter.scale_vp, filter.gate,
                                          filter.gate_quantile);
        ++(info.accepted ? out.counters.vp_updates : out.counters.vp_rejected);
      }
      if (vp.sequence_complete()) {
        trans_set_anchor(tr, imu.t, q_GI, w_hat, filter.anchor);
        vp.begin_sequence(imu.t, tr.anchor.v_GI, truth);
        ++out.counters.anchors;
      }
    }
    vp.accumulate(a_hat, &q_GI);

    if (!finite(tr, rot)) throw NonFiniteState(k, "run_two_stage: state not finite");
    StepRecord rec;
    rec.t = imu.t;
    rec.q_GI = q_GI;
    rec.p_GB = tr.p_GB;
    rec.v_GB = tr.v_GB;
    rec.tau = tr.tau;
    rec.d = tr.d;
    rec.q_IB = tr.q_IB;
    rec.t_IB = tr.t_IB;
    rec.P_diag = tr.P.diagonal();
    rec.P_pv = tr.P.topLeftCorner<6, 6>();
    rec.P_rot_diag = rot.P.diagonal();
    rec.f_res = fres.f_res;
    out.steps.push_back(rec);

    if (k + 1 < N) {
      const double dt = log.imu[k + 1].t - imu.t;
      // Trapezoidal rate over the step, from the sample that closes it.
      const Vec3 w_step = 0.5 * (w_hat + log.imu[k + 1].gyro - bias.b_gyro);
      pn.attitude = rot.P * filter.attitude_coupling_s;
      trans_predict(tr, m, u, q_GI, fres, dt, pn, w_step);
      rot_predict(rot, w_step, dt, Mat3::Identity() * (filter.sigma_gyro * filter.sigma_gyro * dt));
      if (!finite(tr, rot)) throw NonFiniteState(k, "run_two_stage: prediction not finite");
    }
  }
  out.rot = rot;
  out.trans = tr;
  return out;
}

}  // namespace dido
