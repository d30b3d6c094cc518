#include "dido/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dido/errors.hpp"
#include "dido/nn_losses.hpp"
#include "dido/rng.hpp"

namespace dido {

GradCheckResult grad_check(const GradFn& f, const std::vector<double>& x, double eps,
                           const std::vector<std::size_t>& indices) {
  if (!(eps >= 1e-7 && eps <= 1e-4)) throw std::invalid_argument("grad_check: eps outside [1e-7, 1e-4]");
  const auto [f0, ga] = f(x, true);
  if (ga.size() != x.size()) throw std::invalid_argument("grad_check: gradient size mismatch");
  if (!std::isfinite(f0)) throw NonFiniteGradient("grad_check: loss value not finite");
  for (double g : ga)
    if (!std::isfinite(g)) throw NonFiniteGradient("grad_check: analytic gradient not finite");

  std::vector<std::size_t> idx = indices;
  if (idx.empty()) {
    idx.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) idx[i] = i;
  }
  GradCheckResult res;
  std::vector<double> xp = x;
  for (std::size_t i : idx) {
    if (i >= x.size()) throw std::out_of_range("grad_check: index out of range");
    xp[i] = x[i] + eps;
    const long double h = static_cast<long double>(xp[i]) - x[i];
    const long double fp = f(xp, false).first;
    xp[i] = x[i] - eps;
    const long double hm = static_cast<long double>(x[i]) - xp[i];
    const long double fm = f(xp, false).first;
    xp[i] = x[i];
    const double gn = static_cast<double>((fp - fm) / (h + hm));
    if (!std::isfinite(gn)) throw NonFiniteGradient("grad_check: numeric gradient not finite");
    const double rel = std::abs(ga[i] - gn) / std::max({std::abs(ga[i]), std::abs(gn), 1e-8});
    if (res.checked == 0 || rel > res.max_rel_error) {
      res.max_rel_error = rel;
      res.worst_index = i;
      res.analytic = ga[i];
      res.numeric = gn;
    }
    ++res.checked;
  }
  return res;
}

std::vector<double> flatten_params(const ParamMap& p) {
  std::vector<double> out;
  for (const auto& [k, t] : p) out.insert(out.end(), t.data.begin(), t.data.end());
  return out;
}

void unflatten_params(const std::vector<double>& flat, ParamMap& p) {
  std::size_t off = 0;
  for (auto& [k, t] : p) {
    if (off + t.size() > flat.size()) throw ShapeError("unflatten_params: vector too short");
    std::copy(flat.begin() + off, flat.begin() + off + t.size(), t.data.begin());
    off += t.size();
  }
  if (off != flat.size()) throw ShapeError("unflatten_params: vector too long");
}

namespace {

constexpr std::size_t kWindow = 20;
constexpr std::size_t kMaxCoords = 300;
constexpr std::size_t kMaxGruCoords = 80;  // extended-precision GRU forwards are slow
// Values are evaluated in long double, so cancellation is negligible and
// the steps only need to keep truncation error small. The ReLU net is also
// kept kink-free at its step.
constexpr double kDirectEps = 1e-6;
constexpr double kResNetEps = 1e-5;
constexpr double kGruEps = 1e-5;
constexpr double kGruScale = 0.2;

using L = long double;
using MatXL = Eigen::Matrix<L, Eigen::Dynamic, Eigen::Dynamic>;

std::vector<Vec3L> to_vec3l(const std::vector<double>& x, std::size_t offset, std::size_t n) {
  std::vector<Vec3L> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = Vec3L(x[offset + 3 * i], x[offset + 3 * i + 1], x[offset + 3 * i + 2]);
  return out;
}

void accumulate(ParamMap& total, const ParamMap& g) {
  for (const auto& [pn, t] : g) {
    auto& acc = total[pn];
    if (acc.data.empty()) acc = t;
    else
      for (std::size_t i = 0; i < t.size(); ++i) acc[i] += t[i];
  }
}

std::vector<double> from_vec3(const std::vector<Vec3>& v) {
  std::vector<double> out;
  for (const auto& x : v) out.insert(out.end(), {x.x(), x.y(), x.z()});
  return out;
}

std::vector<Vec3> to_vec3(const std::vector<double>& x, std::size_t offset, std::size_t n) {
  std::vector<Vec3> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = Vec3(x[offset + 3 * i], x[offset + 3 * i + 1], x[offset + 3 * i + 2]);
  return out;
}

std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng, std::size_t max = kMaxCoords) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (n <= max) return idx;
  std::shuffle(idx.begin(), idx.end(), rng.engine());
  idx.resize(max);
  std::sort(idx.begin(), idx.end());
  return idx;
}

ImuSegment random_segment(Rng& rng, std::size_t len) {
  ImuSegment seg;
  seg.dt = 0.01;
  UnitQuaternion q = quat_exp(rng.normal3(0.5));
  Vec3 v = rng.normal3(1.0);
  for (std::size_t i = 0; i < len; ++i) {
    seg.gyro.push_back(rng.normal3(1.0));
    seg.accel.push_back(Vec3(0, 0, 9.8) + rng.normal3(1.0));
    seg.q_GI.push_back(q);
    seg.v_GI.push_back(v);
    q = q * quat_exp(seg.gyro.back() * seg.dt + rng.normal3(0.01));
    v += rng.normal3(0.05);
  }
  return seg;
}

MatX window_of(const std::vector<Vec3>& s, std::size_t begin) {
  MatX w(3, kWindow);
  for (std::size_t t = 0; t < kWindow; ++t) w.col(t) = s[begin + t];
  return w;
}

// Random tiny net whose ReLU pre-activations all sit at least 100 eps from
// zero on the given inputs, so central differences stay on one linear piece.
WeightBundle kink_free_resnet(int channels, bool xi_head, const std::vector<MatX>& inputs,
                              Rng& rng, double eps) {
  WeightBundle w = make_resnet1d(channels, 8, kWindow, xi_head);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    randomize(w, rng.engine()(), 0.3);
    double margin = 1e300;
    for (const auto& x : inputs) margin = std::min(margin, resnet1d_relu_margin(w, x));
    if (margin > 100.0 * eps) return w;
  }
  throw std::runtime_error("gradcheck: no kink-free random network found");
}

// De-bias net applied per window; the last window's estimate also covers
// the trailing sample.
GradCheckEntry debias_through_resnet(const std::string& name, bool gyro, Rng& rng, double eps) {
  const ImuSegment seg = random_segment(rng, 2 * kWindow + 1);
  const auto& raw = gyro ? seg.gyro : seg.accel;
  const std::size_t nw = 2;
  std::vector<MatX> inputs;
  for (std::size_t k = 0; k < nw; ++k) inputs.push_back(window_of(raw, k * kWindow));
  const WeightBundle w = kink_free_resnet(3, false, inputs, rng, eps);
  auto f = [&](const std::vector<double>& x, bool want_grad) {
    WeightBundle wb = w;
    unflatten_params(x, wb.params);
    if (!want_grad) {
      std::vector<Vec3L> b(seg.size());
      for (std::size_t k = 0; k < nw; ++k) {
        const Vec3L est = resnet1d_forward_ext(wb, inputs[k]).mean * 0.1L;
        for (std::size_t j = k * kWindow; j < (k + 1) * kWindow; ++j) b[j] = est;
      }
      b.back() = b[seg.size() - 2];
      const L v = gyro ? loss_debias_gyro_ext(seg, b, kWindow) : loss_debias_accel_ext(seg, b, kWindow);
      return std::make_pair(v, std::vector<double>{});
    }
    std::vector<Vec3> b(seg.size());
    for (std::size_t k = 0; k < nw; ++k) {
      const Vec3 est = resnet1d_forward(wb, inputs[k]).mean * 0.1;
      for (std::size_t j = k * kWindow; j < (k + 1) * kWindow; ++j) b[j] = est;
    }
    b.back() = b[seg.size() - 2];
    const LossGrad lg = gyro ? loss_debias_gyro(seg, b, kWindow) : loss_debias_accel(seg, b, kWindow);
    ParamMap total;
    for (std::size_t k = 0; k < nw; ++k) {
      Vec3 d = Vec3::Zero();
      for (std::size_t j = k * kWindow; j < (k + 1) * kWindow; ++j) d += lg.d_pred[j];
      if (k + 1 == nw) d += lg.d_pred.back();
      accumulate(total, resnet1d_backward(wb, inputs[k], 0.1 * d, Vec3::Zero()));
    }
    return std::make_pair(static_cast<L>(lg.value), flatten_params(total));
  };
  const auto x = flatten_params(w.params);
  return {name, grad_check(f, x, eps, sample_indices(x.size(), rng))};
}

GradCheckEntry resdyn_through_resnet(const std::string& name, LossPhase phase, Rng& rng,
                                     double eps) {
  const std::size_t N = 6;
  std::vector<ResDynSample> samples(N);
  std::vector<MatX> windows(N);
  for (std::size_t i = 0; i < N; ++i) {
    samples[i].a_target_B = rng.normal3(1.0);
    samples[i].a_model_B = rng.normal3(1.0);
    samples[i].mass = 1.3;
    windows[i].resize(10, kWindow);
    for (Eigen::Index r = 0; r < windows[i].size(); ++r) windows[i](r) = rng.normal();
  }
  const WeightBundle w = kink_free_resnet(10, true, windows, rng, eps);
  auto f = [&](const std::vector<double>& x, bool want_grad) {
    WeightBundle wb = w;
    unflatten_params(x, wb.params);
    if (!want_grad) {
      std::vector<Vec3L> fh(N), xi(N);
      for (std::size_t i = 0; i < N; ++i) {
        const auto o = resnet1d_forward_ext(wb, windows[i]);
        fh[i] = o.mean;
        xi[i] = *o.xi;
      }
      return std::make_pair(loss_resdyn_ext(samples, fh, xi, phase), std::vector<double>{});
    }
    std::vector<Vec3> fh(N), xi(N);
    for (std::size_t i = 0; i < N; ++i) {
      const ResNetOutput o = resnet1d_forward(wb, windows[i]);
      fh[i] = o.mean;
      xi[i] = *o.xi;
    }
    const LossGrad lg = loss_resdyn(samples, fh, xi, phase);
    ParamMap total;
    for (std::size_t i = 0; i < N; ++i) {
      const Vec3 dxi = phase == LossPhase::Nll ? lg.d_xi[i] : Vec3::Zero();
      accumulate(total, resnet1d_backward(wb, windows[i], lg.d_pred[i], dxi));
    }
    return std::make_pair(static_cast<L>(lg.value), flatten_params(total));
  };
  const auto x = flatten_params(w.params);
  return {name, grad_check(f, x, eps, sample_indices(x.size(), rng))};
}

GradCheckEntry vp_through_gru(const std::string& name, LossPhase phase, Rng& rng, double eps) {
  const Eigen::Index M = 5;
  WeightBundle w = make_gru_vp(2, {64, 128, 256}, 2);
  randomize(w, rng.engine()(), kGruScale);
  std::vector<MatX> inputs(2);
  std::vector<VpSequence> base(2);
  for (std::size_t s = 0; s < 2; ++s) {
    inputs[s].resize(M, 2);
    for (Eigen::Index i = 0; i < M; ++i) inputs[s].row(i) << rng.normal(), 0.05;
    auto rv = [&](Eigen::Index n) {
      VecX v(n);
      for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal();
      return v;
    };
    base[s].v_true = rv(M);
    base[s].p_true = rv(M);
    base[s].p_hat = rv(M);
    base[s].xi_p = 0.3 * rv(M);
  }
  auto f = [&](const std::vector<double>& x, bool want_grad) {
    WeightBundle wb = w;
    unflatten_params(x, wb.params);
    if (!want_grad) {
      std::vector<VpPredictionExt> pred(2);
      for (std::size_t s = 0; s < 2; ++s) {
        const MatXL o = gru_forward_ext(wb, inputs[s]);
        pred[s].v_hat = o.col(0);
        pred[s].xi_v = o.col(1);
        pred[s].p_hat = base[s].p_hat.cast<L>();
        pred[s].xi_p = base[s].xi_p.cast<L>();
      }
      return std::make_pair(loss_vp_ext(base, pred, phase), std::vector<double>{});
    }
    std::vector<VpSequence> batch = base;
    for (std::size_t s = 0; s < 2; ++s) {
      const MatX o = gru_forward(wb, inputs[s]);
      batch[s].v_hat = o.col(0);
      batch[s].xi_v = o.col(1);
    }
    const VpLossGrad lg = loss_vp(batch, phase);
    ParamMap total;
    for (std::size_t s = 0; s < 2; ++s) {
      MatX d(M, 2);
      d.col(0) = lg.d_v[s];
      d.col(1) = phase == LossPhase::Nll ? lg.d_xi_v[s] : VecX::Zero(M);
      accumulate(total, gru_backward(wb, inputs[s], d));
    }
    return std::make_pair(static_cast<L>(lg.value), flatten_params(total));
  };
  const auto x = flatten_params(w.params);
  return {name, grad_check(f, x, eps, sample_indices(x.size(), rng, kMaxGruCoords))};
}

GradCheckEntry gru_scalar_output(Rng& rng, double eps) {
  const Eigen::Index M = 4;
  WeightBundle w = make_gru_vp(2, {64, 128, 256}, 2);
  randomize(w, rng.engine()(), kGruScale);
  MatX seq(M, 2);
  for (Eigen::Index i = 0; i < seq.size(); ++i) seq(i) = rng.normal();
  MatX c(M, 2);
  for (Eigen::Index i = 0; i < c.size(); ++i) c(i) = rng.normal();
  auto f = [&](const std::vector<double>& x, bool want_grad) {
    WeightBundle wb = w;
    unflatten_params(x, wb.params);
    if (!want_grad) {
      const L value = (gru_forward_ext(wb, seq).array() * c.cast<L>().array()).sum();
      return std::make_pair(value, std::vector<double>{});
    }
    const double value = (gru_forward(wb, seq).array() * c.array()).sum();
    return std::make_pair(static_cast<L>(value), flatten_params(gru_backward(wb, seq, c)));
  };
  const auto x = flatten_params(w.params);
  return {"gru_forward weighted output", grad_check(f, x, eps, sample_indices(x.size(), rng, kMaxGruCoords))};
}

}  // namespace

std::vector<GradCheckEntry> run_gradcheck_suite(std::uint64_t seed) {
  const double eps = kDirectEps;
  Rng rng(seed, "gradcheck");
  std::vector<GradCheckEntry> out;

  {
    std::vector<double> x(10);
    for (double& v : x) v = rng.normal();
    auto f = [](const std::vector<double>& p, bool) {
      L s = 0.0;
      std::vector<double> g(p.size());
      for (std::size_t i = 0; i < p.size(); ++i) {
        s += static_cast<L>(p[i]) * p[i];
        g[i] = 2.0 * p[i];
      }
      return std::make_pair(s, g);
    };
    out.push_back({"quadratic", grad_check(f, x, eps)});
  }

  // Each loss w.r.t. its direct predictions.
  {
    const ImuSegment seg = random_segment(rng, 2 * kWindow + 1);
    std::vector<Vec3> b(seg.size());
    for (auto& v : b) v = rng.normal3(0.1);
    for (bool gyro : {false, true}) {
      auto f = [&](const std::vector<double>& x, bool want_grad) {
        if (!want_grad) {
          const auto bl = to_vec3l(x, 0, seg.size());
          return std::make_pair(gyro ? loss_debias_gyro_ext(seg, bl, kWindow)
                                     : loss_debias_accel_ext(seg, bl, kWindow),
                                std::vector<double>{});
        }
        const auto bh = to_vec3(x, 0, seg.size());
        const LossGrad lg = gyro ? loss_debias_gyro(seg, bh, kWindow) : loss_debias_accel(seg, bh, kWindow);
        return std::make_pair(static_cast<L>(lg.value), from_vec3(lg.d_pred));
      };
      out.push_back({gyro ? "loss_debias_gyro wrt bias" : "loss_debias_accel wrt bias",
                     grad_check(f, from_vec3(b), eps)});
    }
  }
  {
    const std::size_t N = 5;
    std::vector<ResDynSample> samples(N);
    for (auto& s : samples) {
      s.a_target_B = rng.normal3(1.0);
      s.a_model_B = rng.normal3(1.0);
      s.mass = 0.8;
    }
    std::vector<double> x;
    for (std::size_t i = 0; i < 2 * N; ++i) {
      const Vec3 v = rng.normal3(0.5);
      x.insert(x.end(), {v.x(), v.y(), v.z()});
    }
    for (LossPhase ph : {LossPhase::Mse, LossPhase::Nll}) {
      auto f = [&](const std::vector<double>& p, bool want_grad) {
        if (!want_grad) {
          return std::make_pair(loss_resdyn_ext(samples, to_vec3l(p, 0, N), to_vec3l(p, 3 * N, N), ph),
                                std::vector<double>{});
        }
        const auto fh = to_vec3(p, 0, N);
        const auto xi = to_vec3(p, 3 * N, N);
        const LossGrad lg = loss_resdyn(samples, fh, xi, ph);
        auto g = from_vec3(lg.d_pred);
        const auto gx = ph == LossPhase::Nll ? from_vec3(lg.d_xi) : std::vector<double>(3 * N, 0.0);
        g.insert(g.end(), gx.begin(), gx.end());
        return std::make_pair(static_cast<L>(lg.value), g);
      };
      out.push_back({ph == LossPhase::Mse ? "loss_resdyn mse wrt prediction"
                                          : "loss_resdyn nll wrt prediction and xi",
                     grad_check(f, x, eps)});
    }
  }
  {
    const Eigen::Index M = 7;
    VpSequence s;
    auto rv = [&]() {
      VecX v(M);
      for (Eigen::Index i = 0; i < M; ++i) v[i] = rng.normal();
      return v;
    };
    s.v_true = rv();
    s.p_true = rv();
    std::vector<double> x;
    for (int k = 0; k < 4; ++k) {
      const VecX v = 0.5 * rv();
      x.insert(x.end(), v.data(), v.data() + M);
    }
    for (LossPhase ph : {LossPhase::Mse, LossPhase::Nll}) {
      auto f = [&](const std::vector<double>& p, bool want_grad) {
        if (!want_grad) {
          VpPredictionExt e;
          e.v_hat = Eigen::Map<const VecX>(p.data(), M).cast<L>();
          e.p_hat = Eigen::Map<const VecX>(p.data() + M, M).cast<L>();
          e.xi_v = Eigen::Map<const VecX>(p.data() + 2 * M, M).cast<L>();
          e.xi_p = Eigen::Map<const VecX>(p.data() + 3 * M, M).cast<L>();
          return std::make_pair(loss_vp_ext({s}, {e}, ph), std::vector<double>{});
        }
        VpSequence q = s;
        q.v_hat = Eigen::Map<const VecX>(p.data(), M);
        q.p_hat = Eigen::Map<const VecX>(p.data() + M, M);
        q.xi_v = Eigen::Map<const VecX>(p.data() + 2 * M, M);
        q.xi_p = Eigen::Map<const VecX>(p.data() + 3 * M, M);
        const VpLossGrad lg = loss_vp({q}, ph);
        std::vector<double> g(4 * M, 0.0);
        std::copy(lg.d_v[0].data(), lg.d_v[0].data() + M, g.begin());
        std::copy(lg.d_p[0].data(), lg.d_p[0].data() + M, g.begin() + M);
        if (ph == LossPhase::Nll) {
          std::copy(lg.d_xi_v[0].data(), lg.d_xi_v[0].data() + M, g.begin() + 2 * M);
          std::copy(lg.d_xi_p[0].data(), lg.d_xi_p[0].data() + M, g.begin() + 3 * M);
        }
        return std::make_pair(static_cast<L>(lg.value), g);
      };
      out.push_back({ph == LossPhase::Mse ? "loss_vp mse wrt prediction"
                                          : "loss_vp nll wrt prediction and xi",
                     grad_check(f, x, eps)});
    }
  }

  // Through the networks.
  out.push_back(debias_through_resnet("loss_debias_accel via resnet1d", false, rng, kResNetEps));
  out.push_back(debias_through_resnet("loss_debias_gyro via resnet1d", true, rng, kResNetEps));
  out.push_back(resdyn_through_resnet("loss_resdyn mse via resnet1d", LossPhase::Mse, rng, kResNetEps));
  out.push_back(resdyn_through_resnet("loss_resdyn nll via resnet1d", LossPhase::Nll, rng, kResNetEps));
  out.push_back(vp_through_gru("loss_vp mse via gru", LossPhase::Mse, rng, kGruEps));
  out.push_back(vp_through_gru("loss_vp nll via gru", LossPhase::Nll, rng, kGruEps));
  out.push_back(gru_scalar_output(rng, kGruEps));
  return out;
}

}  // namespace dido
