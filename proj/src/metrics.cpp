#include "dido/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dido/errors.hpp"

namespace dido {

void TrajectoryPair::validate() const {
  const std::size_t n = t.size();
  if (q_true.size() != n || q_est.size() != n || p_true.size() != n || p_est.size() != n)
    throw std::invalid_argument("TrajectoryPair: ragged sequences");
  if (n < 2) throw EmptyTrajectory("TrajectoryPair: need at least 2 samples");
  for (std::size_t i = 1; i < n; ++i)
    if (!(t[i] > t[i - 1])) throw std::invalid_argument("TrajectoryPair: timestamps must increase");
}

TrajectoryPair associate(const std::vector<PoseSample>& estimate,
                         const std::vector<PoseSample>& truth) {
  if (truth.size() < 2 || estimate.empty()) throw EmptyTrajectory("associate: empty input");
  TrajectoryPair out;
  std::size_t j = 0;
  for (const PoseSample& e : estimate) {
    if (e.t < truth.front().t - 1e-9 || e.t > truth.back().t + 1e-9) continue;
    while (j + 2 < truth.size() && truth[j + 1].t < e.t) ++j;
    const PoseSample& a = truth[j];
    const PoseSample& b = truth[j + 1];
    const double s = std::clamp((e.t - a.t) / (b.t - a.t), 0.0, 1.0);
    out.t.push_back(e.t);
    out.p_true.push_back((1.0 - s) * a.p + s * b.p);
    out.q_true.push_back(s == 0.0 ? a.q : s == 1.0 ? b.q : slerp(a.q, b.q, s));
    out.p_est.push_back(e.p);
    out.q_est.push_back(e.q);
  }
  out.validate();
  return out;
}

namespace {

double rms(double sum_sq, std::size_t n) { return std::sqrt(sum_sq / static_cast<double>(n)); }

// Index pairs (i, j) with j the first sample at or after t_i + dt.
template <class F>
double relative_rms(const TrajectoryPair& pair, double dt, F&& err_sq) {
  pair.validate();
  if (!(dt > 0.0)) throw std::invalid_argument("relative metric: dt must be positive");
  double sum = 0.0;
  std::size_t n = 0, j = 0;
  for (std::size_t i = 0; i < pair.size(); ++i) {
    j = std::max(j, i + 1);
    while (j < pair.size() && pair.t[j] < pair.t[i] + dt - 1e-12) ++j;
    if (j >= pair.size()) break;
    sum += err_sq(i, j);
    ++n;
  }
  if (n == 0) throw InsufficientData("relative metric: run shorter than dt");
  return rms(sum, n);
}

}  // namespace

double ate(const TrajectoryPair& pair) {
  pair.validate();
  double s = 0.0;
  for (std::size_t i = 0; i < pair.size(); ++i) s += (pair.p_true[i] - pair.p_est[i]).squaredNorm();
  return rms(s, pair.size());
}

double are(const TrajectoryPair& pair) {
  pair.validate();
  double s = 0.0;
  for (std::size_t i = 0; i < pair.size(); ++i)
    s += rotation_distance(pair.q_true[i], pair.q_est[i]).squaredNorm();
  return rms(s, pair.size());
}

double rte(const TrajectoryPair& pair, double dt) {
  return relative_rms(pair, dt, [&](std::size_t i, std::size_t j) {
    const Vec3 dp = pair.p_true[j] - pair.p_true[i];
    const Vec3 dq = pair.p_est[j] - pair.p_est[i];
    return (dp - dq).squaredNorm();
  });
}

double rre(const TrajectoryPair& pair, double dt) {
  return relative_rms(pair, dt, [&](std::size_t i, std::size_t j) {
    const UnitQuaternion rt = pair.q_true[i].conj() * pair.q_true[j];
    const UnitQuaternion re = pair.q_est[i].conj() * pair.q_est[j];
    return rotation_distance(rt, re).squaredNorm();
  });
}

double td(const TrajectoryPair& pair) {
  pair.validate();
  double length = 0.0;
  for (std::size_t i = 1; i < pair.size(); ++i) length += (pair.p_true[i] - pair.p_true[i - 1]).norm();
  if (length < 1e-9) throw ZeroLength("td: truth trajectory has zero length");
  return (pair.p_true.back() - pair.p_est.back()).norm() / length;
}

double rd(const TrajectoryPair& pair) {
  pair.validate();
  const double minutes = (pair.t.back() - pair.t.front()) / 60.0;
  return rotation_distance(pair.q_true.back(), pair.q_est.back()).norm() / minutes;
}

double afe(const std::vector<Vec3>& f_true, const std::vector<Vec3>& f_est) {
  if (f_true.empty()) throw EmptyTrajectory("afe: empty input");
  if (f_true.size() != f_est.size()) throw std::invalid_argument("afe: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < f_true.size(); ++i) s += (f_true[i] - f_est[i]).squaredNorm();
  return rms(s, f_true.size());
}

MetricSet evaluate_metrics(const TrajectoryPair& pair, double dt) {
  MetricSet m;
  m.ate = ate(pair);
  m.are = are(pair);
  m.rte = rte(pair, dt);
  m.rre = rre(pair, dt);
  try {
    m.td = td(pair);
  } catch (const ZeroLength&) {
    m.td = 0.0;
  }
  m.rd = rd(pair);
  return m;
}

std::vector<SampleError> per_sample_errors(const TrajectoryPair& pair) {
  pair.validate();
  std::vector<SampleError> out;
  out.reserve(pair.size());
  for (std::size_t i = 0; i < pair.size(); ++i)
    out.push_back({pair.t[i], (pair.p_true[i] - pair.p_est[i]).norm(),
                   rotation_distance(pair.q_true[i], pair.q_est[i]).norm()});
  return out;
}

}  // namespace dido
