#include <cmath>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "dido/errors.hpp"
#include "dido/nn.hpp"

using namespace dido;

namespace {

MatX random_window(int C, int T, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  MatX w(C, T);
  for (int i = 0; i < C; ++i)
    for (int j = 0; j < T; ++j) w(i, j) = n(g);
  return w;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Scalar GRU with one unit per layer, gate order r, z, n.
struct ScalarGru {
  double wir, wiz, win, whr, whz, whn, bir, biz, bin, bhr, bhz, bhn;
  double step(double x, double h) const {
    const double r = sigmoid(wir * x + bir + whr * h + bhr);
    const double z = sigmoid(wiz * x + biz + whz * h + bhz);
    const double n = std::tanh(win * x + bin + r * (whn * h + bhn));
    return (1 - z) * n + z * h;
  }
};

WeightBundle scalar_bundle(const ScalarGru& s, double fc_w, double fc_b) {
  WeightBundle w = make_gru_vp(1, {1}, 1);
  w.params.at("gru.weight_ih_l0").data = {s.wir, s.wiz, s.win};
  w.params.at("gru.weight_hh_l0").data = {s.whr, s.whz, s.whn};
  w.params.at("gru.bias_ih_l0").data = {s.bir, s.biz, s.bin};
  w.params.at("gru.bias_hh_l0").data = {s.bhr, s.bhz, s.bhn};
  w.params.at("fc.weight").data = {fc_w};
  w.params.at("fc.bias").data = {fc_b};
  return w;
}

}  // namespace

TEST(ResNet1d, ZeroWeightsGiveZero) {
  const WeightBundle w = make_resnet1d(6, 32, 20, true);
  const ResNetOutput out = resnet1d_forward(w, random_window(6, 20, 1));
  EXPECT_EQ(out.mean, Vec3::Zero());
  ASSERT_TRUE(out.xi.has_value());
  EXPECT_EQ(*out.xi, Vec3::Zero());
}

TEST(ResNet1d, WindowMeanWeights) {
  const WeightBundle w = make_window_mean_resnet(6, 20);
  const MatX x = random_window(6, 20, 2);
  const ResNetOutput out = resnet1d_forward(w, x);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(out.mean(k), x.row(k).mean(), 1e-12);
}

TEST(ResNet1d, Deterministic) {
  WeightBundle w = make_resnet1d(7, 16, 20, true);
  randomize(w, 3, 0.3);
  const MatX x = random_window(7, 20, 4);
  const ResNetOutput a = resnet1d_forward(w, x), b = resnet1d_forward(w, x);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(*a.xi, *b.xi);
}

TEST(ResNet1d, ExtendedPrecisionAgrees) {
  WeightBundle w = make_resnet1d(6, 16, 20, true);
  randomize(w, 8, 0.3);
  const MatX x = random_window(6, 20, 5);
  const ResNetOutput a = resnet1d_forward(w, x);
  const auto b = resnet1d_forward_ext(w, x);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(a.mean(k), static_cast<double>(b.mean(k)), 1e-12);
}

TEST(ResNet1d, ShapeMismatchThrows) {
  const WeightBundle w = make_resnet1d(6, 8, 20, false);
  EXPECT_THROW(resnet1d_forward(w, random_window(5, 20, 1)), ShapeError);
  EXPECT_THROW(resnet1d_forward(w, random_window(6, 19, 1)), ShapeError);
}

TEST(Gru, ZeroWeightsGiveZero) {
  const WeightBundle w = make_gru_vp(2, {8, 4}, 2);
  const MatX y = gru_forward(w, random_window(30, 2, 3));
  EXPECT_EQ(y.rows(), 30);
  EXPECT_EQ(y.norm(), 0.0);
}

TEST(Gru, SaturatedGatesScalarOracle) {
  // r open, z closed: h = tanh(candidate).
  const ScalarGru s{0.4, 0.0, 0.7, 0.0, 0.0, -0.9, 50.0, -50.0, 0.1, 0.0, 0.0, 0.2};
  const WeightBundle w = scalar_bundle(s, 2.0, -0.5);
  MatX x(2, 1);
  x << 0.8, -0.3;
  const MatX y = gru_forward(w, x);
  const double h1 = std::tanh(0.7 * 0.8 + 0.1 + 0.2);
  const double h2 = std::tanh(0.7 * -0.3 + 0.1 + (-0.9 * h1 + 0.2));
  EXPECT_NEAR(y(0, 0), 2.0 * h1 - 0.5, 1e-12);
  EXPECT_NEAR(y(1, 0), 2.0 * h2 - 0.5, 1e-12);
}

TEST(Gru, GeneralScalarOracle) {
  const ScalarGru s{0.4, -0.6, 0.7, 0.3, 0.5, -0.9, 0.1, 0.2, 0.1, -0.3, 0.05, 0.2};
  const WeightBundle w = scalar_bundle(s, 1.5, 0.25);
  MatX x(5, 1);
  x << 0.8, -0.3, 1.2, 0.0, -2.0;
  const MatX y = gru_forward(w, x);
  double h = 0.0;
  for (int i = 0; i < 5; ++i) {
    h = s.step(x(i, 0), h);
    EXPECT_NEAR(y(i, 0), 1.5 * h + 0.25, 1e-13);
  }
}

TEST(Gru, StepMatchesForward) {
  WeightBundle w = make_gru_vp(2, {6, 5, 4}, 2);
  randomize(w, 4, 0.4);
  const MatX x = random_window(12, 2, 6);
  const MatX y = gru_forward(w, x);
  GruState st = gru_initial_state(w);
  for (int i = 0; i < 12; ++i) {
    const VecX o = gru_step(w, st, x.row(i).transpose());
    EXPECT_LT((o - y.row(i).transpose()).norm(), 1e-14);
  }
}

TEST(Weights, JsonRoundTripIsExact) {
  WeightBundle w = make_gru_vp(2, {5, 3}, 2);
  randomize(w, 1, 0.5);
  const WeightBundle back = parse_weights(dump_weights(w));
  EXPECT_EQ(back.hidden, w.hidden);
  ASSERT_EQ(back.params.size(), w.params.size());
  for (const auto& [k, t] : w.params) {
    EXPECT_EQ(back.at(k).shape, t.shape);
    EXPECT_EQ(back.at(k).data, t.data);
  }
  const MatX x = random_window(10, 2, 2);
  EXPECT_EQ(gru_forward(back, x), gru_forward(w, x));
}

TEST(Weights, FileRoundTrip) {
  WeightBundle w = make_resnet1d(6, 8, 20, true);
  randomize(w, 2, 0.5);
  const auto p = std::filesystem::temp_directory_path() / "dido_nn_weights.json";
  save_weights(p, w);
  const WeightBundle back = load_weights(p);
  const MatX x = random_window(6, 20, 7);
  EXPECT_EQ(resnet1d_forward(back, x).mean, resnet1d_forward(w, x).mean);
  EXPECT_EQ(back.parameter_count(), w.parameter_count());
}

TEST(Weights, ValidationRejectsBadBundles) {
  const std::string good = dump_weights(make_gru_vp(1, {2}, 1));
  EXPECT_NO_THROW(parse_weights(good));
  EXPECT_THROW(parse_weights("{}"), ShapeError);
  EXPECT_THROW(parse_weights(R"({"arch":"mlp","dims":{},"params":{}})"), ShapeError);

  WeightBundle w = make_gru_vp(1, {2}, 1);
  w.params.at("fc.bias").data.push_back(0.0);
  w.params.at("fc.bias").shape = {2};
  EXPECT_THROW(w.validate(), ShapeError);

  w = make_gru_vp(1, {2}, 1);
  w.params.erase("fc.weight");
  EXPECT_THROW(w.validate(), ShapeError);

  w = make_gru_vp(1, {2}, 1);
  w.params.at("fc.bias").data[0] = NAN;
  EXPECT_THROW(w.validate(), ShapeError);

  w = make_gru_vp(1, {2}, 1);
  w.params["extra"] = Tensor({1});
  EXPECT_THROW(w.validate(), ShapeError);
}

TEST(DiagCov, ExpOfTwiceXi) {
  EXPECT_EQ(diag_cov(Vec3::Zero()), Vec3::Ones());
  const Vec3 c = diag_cov(Vec3(-1, 0.5, 2));
  EXPECT_NEAR(c.x(), std::exp(-2.0), 1e-15);
  EXPECT_NEAR(c.z(), std::exp(4.0), 1e-12);
  EXPECT_GT(diag_cov(Vec3::Constant(-300)).minCoeff(), -1.0);
}
