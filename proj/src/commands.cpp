#include "dido/commands.hpp"

#include <chrono>
#include <fstream>
#include <ostream>

#include <json.hpp>

#include "dido/errors.hpp"
#include "dido/experiments.hpp"
#include "dido/gradcheck.hpp"
#include "dido/log_io.hpp"
#include "dido/metrics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dido {

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json vec(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
json quat(const UnitQuaternion& q) { return json::array({q.w(), q.x(), q.y(), q.z()}); }

json params_json(double tau, const Vec3& d, const UnitQuaternion& q_IB, const Vec3& t_IB) {
  return {{"tau", tau}, {"d", vec(d)}, {"q_IB", quat(q_IB)}, {"t_IB", vec(t_IB)}};
}

json metrics_json(const MetricSet& m) {
  json j = {{"ate", m.ate}, {"are", m.are}, {"rte", m.rte},
            {"rre", m.rre}, {"td", m.td},   {"rd", m.rd}};
  if (m.afe) j["afe"] = *m.afe;
  return j;
}

// Trace of each error-state block of the final translation covariance.
json covariance_traces(const Mat16& P, const Mat3& P_rot) {
  auto tr = [&](int i, int n) { return P.block(i, i, n, n).trace(); };
  return {{"q_GI", P_rot.trace()}, {"p", tr(ix::p, 3)},     {"v", tr(ix::v, 3)},
          {"tau", tr(ix::tau, 1)}, {"d", tr(ix::d, 3)},     {"q_IB", tr(ix::th, 3)},
          {"t_IB", tr(ix::t, 3)}};
}

std::vector<double> estimate_row(const StepRecord& s) {
  return {s.t,        s.q_GI.w(), s.q_GI.x(), s.q_GI.y(), s.q_GI.z(), s.p_GB.x(),
          s.p_GB.y(), s.p_GB.z(), s.v_GB.x(), s.v_GB.y(), s.v_GB.z(), s.tau,
          s.d.x(),    s.d.y(),    s.d.z(),    s.q_IB.w(), s.q_IB.x(), s.q_IB.y(),
          s.q_IB.z(), s.t_IB.x(), s.t_IB.y(), s.t_IB.z()};
}

std::vector<PoseSample> read_estimate_poses(const fs::path& path) {
  const CsvTable t = read_csv(path, estimate_header());
  std::vector<PoseSample> out;
  out.reserve(t.rows.size());
  for (const auto& r : t.rows)
    out.push_back({r[0], UnitQuaternion(Vec4(r[1], r[2], r[3], r[4])), Vec3(r[5], r[6], r[7])});
  return out;
}

std::vector<PoseSample> read_truth_poses(const fs::path& path) {
  const CsvTable t = read_csv(path, truth_header());
  std::vector<PoseSample> out;
  out.reserve(t.rows.size());
  for (const auto& r : t.rows)
    out.push_back({r[0], UnitQuaternion(Vec4(r[1], r[2], r[3], r[4])), Vec3(r[5], r[6], r[7])});
  return out;
}

// Truth and estimated residual forces at common timestamps, when both exist.
std::optional<double> force_error(const fs::path& forces_csv, const fs::path& truth_csv) {
  if (!fs::exists(forces_csv)) return std::nullopt;
  const CsvTable est = read_csv(forces_csv, {"t", "fx", "fy", "fz"});
  const CsvTable tru = read_csv(truth_csv, truth_header());
  std::vector<Vec3> f_true, f_est;
  std::size_t j = 0;
  for (const auto& r : est.rows) {
    while (j < tru.rows.size() && tru.rows[j][0] < r[0] - 1e-9) ++j;
    if (j == tru.rows.size()) break;
    if (std::abs(tru.rows[j][0] - r[0]) > 1e-9) continue;
    const auto& tr = tru.rows[j];
    f_true.emplace_back(tr[17], tr[18], tr[19]);
    f_est.emplace_back(r[1], r[2], r[3]);
  }
  if (f_true.empty()) return std::nullopt;
  return afe(f_true, f_est);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

const std::vector<std::string>& estimate_header() {
  static const std::vector<std::string> h{"t",   "qw",  "qx",  "qy",  "qz",  "px",  "py",  "pz",
                                          "vx",  "vy",  "vz",  "tau", "dx",  "dy",  "dz",  "eqw",
                                          "eqx", "eqy", "eqz", "etx", "ety", "etz"};
  return h;
}

RunConfig resolve_config(const CommandOptions& opt) {
  RunConfig c;
  if (!opt.config.empty()) {
    c = load_config(opt.config, opt.weights);
  }
  if (opt.seed) c.seed = *opt.seed;
  if (opt.runs) {
    c.study.runs = *opt.runs;
    c.mc.runs = *opt.runs;
  }
  sync_derived(c);
  c.validate();
  return c;
}

int cmd_simulate(const CommandOptions& opt, std::ostream& log) {
  const RunConfig c = resolve_config(opt);
  const auto t0 = std::chrono::steady_clock::now();
  const FlightLog fl = simulate(c);
  ensure_dir(opt.out);
  write_flight_log(opt.out, fl);
  write_text(opt.out / "config.toml", to_toml(c));
  log << "simulate: " << fl.imu.size() << " IMU samples, " << fl.rotors.size()
      << " rotor samples in " << seconds_since(t0) << " s -> " << opt.out.string() << "\n";
  return kExitOk;
}

int cmd_estimate(const fs::path& log_dir, const CommandOptions& opt, std::ostream& log) {
  const RunConfig c = resolve_config(opt);
  const bool needs_truth = c.providers.debias.mode == ProviderMode::Oracle ||
                           c.providers.residual.mode == ProviderMode::Oracle ||
                           c.providers.vp.mode == ProviderMode::Oracle;
  const FlightLog fl = read_flight_log(log_dir, needs_truth);
  ensure_dir(opt.out);
  write_text(opt.out / "config.toml", to_toml(c));

  json summary = {{"log", log_dir.string()}, {"seed", c.seed}};
  const auto t0 = std::chrono::steady_clock::now();
  RunResult r;
  try {
    r = estimate(fl, c);
  } catch (const NonFiniteState& e) {
    summary["status"] = "non_finite";
    summary["step"] = e.step();
    summary["error"] = e.what();
    write_json(opt.out / "summary.json", summary);
    log << "estimate: " << e.what() << "\n";
    return kExitFilterDiverged;
  }

  std::vector<std::vector<double>> rows, forces;
  rows.reserve(r.steps.size());
  forces.reserve(r.steps.size());
  for (const StepRecord& s : r.steps) {
    rows.push_back(estimate_row(s));
    forces.push_back({s.t, s.f_res.x(), s.f_res.y(), s.f_res.z()});
  }
  write_csv(opt.out / "estimate.csv", estimate_header(), rows);
  write_csv(opt.out / "forces.csv", {"t", "fx", "fy", "fz"}, forces);

  const TransStageState& tr = r.trans;
  summary["status"] = "ok";
  summary["runtime_s"] = seconds_since(t0);
  summary["final"] = params_json(tr.tau, tr.d, tr.q_IB, tr.t_IB);
  summary["covariance_trace"] = covariance_traces(tr.P, r.rot.P);
  summary["counters"] = {{"gravity_updates", r.counters.gravity_updates},
                         {"gravity_skipped", r.counters.gravity_skipped},
                         {"gravity_rejected", r.counters.gravity_rejected},
                         {"accel_updates", r.counters.accel_updates},
                         {"accel_rejected", r.counters.accel_rejected},
                         {"vp_updates", r.counters.vp_updates},
                         {"vp_rejected", r.counters.vp_rejected},
                         {"anchors", r.counters.anchors}};
  if (!fl.truth.empty()) {
    MetricSet m = evaluate_metrics(pose_pair(fl, r));
    std::vector<Vec3> ft, fe;
    for (std::size_t k = 0; k < r.steps.size(); ++k) {
      ft.push_back(fl.truth[k].f_res);
      fe.push_back(r.steps[k].f_res);
    }
    m.afe = afe(ft, fe);
    summary["metrics"] = metrics_json(m);
    log << "estimate: ATE " << m.ate << " m, ARE " << m.are << " rad, tau " << tr.tau << "\n";
  }
  write_json(opt.out / "summary.json", summary);
  return kExitOk;
}

int cmd_evaluate(const fs::path& estimate_csv, const fs::path& truth, const CommandOptions& opt,
                 std::ostream& log) {
  const fs::path truth_csv = fs::is_directory(truth) ? truth / "truth.csv" : truth;
  const TrajectoryPair pair =
      associate(read_estimate_poses(estimate_csv), read_truth_poses(truth_csv));
  MetricSet m = evaluate_metrics(pair);
  m.afe = force_error(estimate_csv.parent_path() / "forces.csv", truth_csv);
  ensure_dir(opt.out);
  write_json(opt.out / "metrics.json", metrics_json(m));
  std::vector<std::vector<double>> rows;
  for (const SampleError& e : per_sample_errors(pair)) rows.push_back({e.t, e.pos, e.rot});
  write_csv(opt.out / "errors.csv", {"t", "pos_err", "rot_err"}, rows);
  log << "evaluate: ATE " << m.ate << " m, ARE " << m.are << " rad, RTE " << m.rte << " m\n";
  return kExitOk;
}

int cmd_param_study(const fs::path& log_dir, const CommandOptions& opt, std::ostream& log) {
  const RunConfig c = resolve_config(opt);
  const auto t0 = std::chrono::steady_clock::now();
  const FlightLog fl = log_dir.empty() ? simulate(c) : read_flight_log(log_dir);
  const ParamStudyResult res = param_study(c, fl);
  ensure_dir(opt.out);
  write_text(opt.out / "config.toml", to_toml(c));

  std::vector<std::vector<double>> rows;
  json runs = json::array();
  for (const ParamRun& pr : res.runs) {
    for (const StepRecord& s : pr.trace) {
      const Vec3 eq = quat_log(c.params.q_IB.conj() * s.q_IB);
      rows.push_back({static_cast<double>(pr.index), s.t, s.tau, s.d.x(), s.d.y(), s.d.z(), eq.x(),
                      eq.y(), eq.z(), s.t_IB.x(), s.t_IB.y(), s.t_IB.z(), s.P_diag[ix::tau],
                      s.P_diag[ix::d], s.P_diag[ix::d + 1], s.P_diag[ix::d + 2],
                      s.P_diag[ix::t], s.P_diag[ix::t + 1], s.P_diag[ix::t + 2]});
    }
    const TransStageState& f = pr.final;
    runs.push_back({{"run", pr.index},
                    {"initial", params_json(pr.init.tau, pr.init.d, pr.init.q_IB, pr.init.t_IB)},
                    {"final", params_json(f.tau, f.d, f.q_IB, f.t_IB)},
                    {"tau_rel_error", std::abs(f.tau - c.params.tau) / c.params.tau},
                    {"d_abs_error", vec((f.d - c.params.d).cwiseAbs())}});
  }
  write_csv(opt.out / "param_traces.csv",
            {"run", "t", "tau", "dx", "dy", "dz", "eqx", "eqy", "eqz", "tx", "ty", "tz", "var_tau",
             "var_dx", "var_dy", "var_dz", "var_tx", "var_ty", "var_tz"},
            rows);
  write_json(opt.out / "param_study.json",
             {{"truth", params_json(c.params.tau, c.params.d, c.params.q_IB, c.params.t_IB)},
              {"runs", runs},
              {"runtime_s", seconds_since(t0)}});
  log << "param-study: " << res.runs.size() << " runs in " << seconds_since(t0) << " s\n";
  return kExitOk;
}

int cmd_mc_consistency(const CommandOptions& opt, std::ostream& log) {
  const RunConfig c = resolve_config(opt);
  const auto t0 = std::chrono::steady_clock::now();
  const McResult r = mc_consistency(c);
  ensure_dir(opt.out);
  write_text(opt.out / "config.toml", to_toml(c));
  std::vector<std::vector<double>> rows;
  for (std::size_t j = 0; j < r.t.size(); ++j) rows.push_back({r.t[j], r.mean_nees[j]});
  write_csv(opt.out / "nees.csv", {"t", "mean_nees"}, rows);
  write_json(opt.out / "mc_consistency.json", {{"runs", r.runs},
                                               {"dof", r.dof},
                                               {"mean_nees", r.time_average},
                                               {"band", {r.band_lo, r.band_hi}},
                                               {"fraction_in_band", r.fraction_in_band},
                                               {"runtime_s", seconds_since(t0)}});
  log << "mc-consistency: mean NEES " << r.time_average << " over " << r.runs << " runs, band ["
      << r.band_lo << ", " << r.band_hi << "]\n";
  return kExitOk;
}

int cmd_gradcheck(const CommandOptions& opt, std::ostream& log) {
  const std::uint64_t seed = opt.seed.value_or(1);
  const auto entries = run_gradcheck_suite(seed);
  json j = json::array();
  double worst = 0.0;
  for (const auto& e : entries) {
    worst = std::max(worst, e.result.max_rel_error);
    j.push_back({{"name", e.name},
                 {"max_rel_error", e.result.max_rel_error},
                 {"checked", e.result.checked},
                 {"worst_index", e.result.worst_index}});
    log << "gradcheck " << e.name << ": " << e.result.max_rel_error << "\n";
  }
  ensure_dir(opt.out);
  write_json(opt.out / "gradcheck.json", {{"seed", seed}, {"max_rel_error", worst}, {"entries", j}});
  return worst < 1e-5 ? kExitOk : kExitUsage;
}

int run_guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const SimDiverged& e) {
    err << "error: " << e.what() << "\n";
    return kExitSimDiverged;
  } catch (const NonFiniteState& e) {
    err << "error: " << e.what() << "\n";
    return kExitFilterDiverged;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace dido
