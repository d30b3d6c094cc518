#include "dido/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <thread>

#include "dido/errors.hpp"
#include "dido/rng.hpp"

namespace dido {

FlightLog simulate(const RunConfig& c) {
  return simulate_flight(c.params, c.sim.trajectory, c.sim.residual, c.noise, c.sim.options, c.seed);
}

RunResult estimate(const FlightLog& log, const RunConfig& c, const InitialOverride& init) {
  return run_two_stage(log, c.providers, c.filter, c.seed, init);
}

std::vector<PoseSample> estimate_poses(const RunResult& run) {
  std::vector<PoseSample> out;
  out.reserve(run.steps.size());
  for (const StepRecord& s : run.steps) out.push_back({s.t, s.q_GI, s.p_GB});
  return out;
}

std::vector<PoseSample> truth_poses(const FlightLog& log) {
  std::vector<PoseSample> out;
  out.reserve(log.truth.size());
  for (const TruthSample& s : log.truth) out.push_back({s.t, s.q_GI, s.p_GB});
  return out;
}

TrajectoryPair pose_pair(const FlightLog& log, const RunResult& run) {
  return associate(estimate_poses(run), truth_poses(log));
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  std::vector<std::exception_ptr> errors(n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------

FilterInit perturbed_init(const RunConfig& c, std::size_t run) {
  Rng rng(c.seed, "perturb." + std::to_string(run));
  auto sign = [&] { return rng.uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0; };
  FilterInit init = c.filter.init;
  init.tau = c.params.tau * (1.0 + sign() * c.study.perturb_tau);
  for (int i = 0; i < 3; ++i) init.d[i] = c.params.d[i] * (1.0 + sign() * c.study.perturb_d);
  Vec3 dth, dt;
  for (int i = 0; i < 3; ++i) dth[i] = rng.uniform(-1.0, 1.0) * c.study.perturb_q_IB;
  for (int i = 0; i < 3; ++i) dt[i] = rng.uniform(-1.0, 1.0) * c.study.perturb_t_IB;
  init.q_IB = c.params.q_IB * quat_exp(dth);
  init.t_IB = c.params.t_IB + dt;
  return init;
}

ParamStudyResult param_study(const RunConfig& c, const FlightLog& log) {
  ParamStudyResult out;
  out.truth = c.params;
  out.runs.resize(c.study.runs);
  parallel_for(c.study.runs, c.study.threads, [&](std::size_t i) {
    RunConfig rc = c;
    rc.filter.init = perturbed_init(c, i);
    RunResult r = estimate(log, rc);
    ParamRun& pr = out.runs[i];
    pr.index = i;
    pr.init = rc.filter.init;
    for (std::size_t k = 0; k < r.steps.size(); ++k)
      if (k % c.study.trace_every == 0 || k + 1 == r.steps.size()) pr.trace.push_back(r.steps[k]);
    pr.final = r.trans;
  });
  return out;
}

// ---------------------------------------------------------------------------

double nees_pv(const StepRecord& est, const TruthSample& truth) {
  Eigen::Matrix<double, 6, 1> e;
  e << est.p_GB - truth.p_GB, est.v_GB - truth.v_GB;
  return e.dot(est.P_pv.ldlt().solve(e));
}

namespace {

double normal_quantile(double p) {
  // Bisection on the CDF; 200 halvings are far below double resolution.
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

double chi2_quantile_wh(double dof, double p) {
  if (!(dof > 0.0) || !(p > 0.0 && p < 1.0))
    throw std::invalid_argument("chi2_quantile_wh: need dof > 0 and 0 < p < 1");
  const double z = normal_quantile(p);
  const double a = 2.0 / (9.0 * dof);
  const double c = 1.0 - a + z * std::sqrt(a);
  return dof * c * c * c;
}

InitialOverride sampled_initial_state(const RunConfig& c, const TruthSample& t0) {
  Rng rng(c.seed, "mc.init");
  const FilterInit& fi = c.filter.init;
  auto draw = [&](double var) { return rng.normal3(std::sqrt(var)); };
  FilterInit init = fi;
  init.tau = c.params.tau + std::sqrt(fi.var_tau) * rng.normal();
  init.d = c.params.d + draw(fi.var_d);
  init.q_IB = c.params.q_IB * quat_exp(draw(fi.var_q_IB));
  init.t_IB = c.params.t_IB + draw(fi.var_t_IB);
  InitialOverride o;
  o.trans = make_trans_state(t0.p_GB + draw(fi.var_p), t0.v_GB + draw(fi.var_v), init);
  RotStageState rot;
  rot.q_GI = t0.q_GI * quat_exp(draw(fi.var_q));
  rot.P = Mat3::Identity() * fi.var_q;
  o.rot = rot;
  return o;
}

McResult mc_consistency(const RunConfig& c, double eval_every, double settle) {
  const std::size_t n = c.mc.runs;
  McResult out;
  out.runs = n;
  out.nees.resize(n);
  std::vector<std::vector<double>> times(n);
  parallel_for(n, c.mc.threads, [&](std::size_t i) {
    RunConfig rc = c;
    rc.seed = derive_seed(c.seed, "mc.run." + std::to_string(i));
    const FlightLog log = simulate(rc);
    const RunResult r = estimate(log, rc, sampled_initial_state(rc, log.truth.front()));
    double next = settle;
    for (std::size_t k = 0; k < r.steps.size(); ++k) {
      if (r.steps[k].t + 1e-9 < next) continue;
      out.nees[i].push_back(nees_pv(r.steps[k], log.truth[k]));
      times[i].push_back(r.steps[k].t);
      next += eval_every;
    }
  });
  if (n == 0 || times[0].empty()) throw InsufficientData("mc_consistency: no evaluation times");
  std::size_t m = times[0].size();
  for (const auto& v : out.nees) m = std::min(m, v.size());
  out.t.assign(times[0].begin(), times[0].begin() + static_cast<std::ptrdiff_t>(m));
  out.mean_nees.assign(m, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < n; ++i) out.mean_nees[j] += out.nees[i][j];
    out.mean_nees[j] /= static_cast<double>(n);
  }
  const double dof_total = static_cast<double>(out.dof * n);
  out.band_lo = chi2_quantile_wh(dof_total, 0.025) / static_cast<double>(n);
  out.band_hi = chi2_quantile_wh(dof_total, 0.975) / static_cast<double>(n);
  std::size_t inside = 0;
  for (double x : out.mean_nees) {
    out.time_average += x;
    inside += (x >= out.band_lo && x <= out.band_hi);
  }
  out.time_average /= static_cast<double>(m);
  out.fraction_in_band = static_cast<double>(inside) / static_cast<double>(m);
  return out;
}

}  // namespace dido
