#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "hnetpp/objective.hpp"

namespace hnetpp {
namespace {

using T = Tensor<double>;

T mixture_rows(Rng& rng, std::size_t rows) {
  auto raw = T::matrix(rows, kMixtureWidth);
  for (std::size_t t = 0; t < rows; ++t) {
    for (std::size_t k = 0; k < kMixtureComponents; ++k) {
      raw(t, k) = 255.0 * rng.uniform();
      raw(t, kMixtureComponents + k) = -1.0 + 5.0 * rng.uniform();
      raw(t, 2 * kMixtureComponents + k) = -2.0 + 4.0 * rng.uniform();
    }
  }
  return raw;
}

TEST(LmLoss, NoSmoothingIsPlainNll) {
  Rng rng(2);
  const T raw = mixture_rows(rng, 4);
  const std::vector<std::uint8_t> targets{10, 200, 0, 255};
  Graph<double> g;
  const double loss = lm_loss(g.constant(raw), targets, 0.0).item();
  double want = 0.0;
  for (std::size_t t = 0; t < 4; ++t) want -= mixture_log_prob(mixture_row(raw, t), targets[t]);
  EXPECT_NEAR(loss, want / 4.0, 1e-12);
}

TEST(LmLoss, UniformPmfGivesLn256) {
  const std::vector<std::uint8_t> targets{1, 2, 3};
  for (double eps : {0.0, 0.1, 0.7}) {
    Graph<double> g;
    auto uniform = g.constant(T::matrix(3, 256, -std::log(256.0)));
    EXPECT_NEAR(lm_loss_from_log_pmf(uniform, targets, eps).item(), std::log(256.0), 1e-12) << eps;
  }
}

TEST(LmLoss, SmoothedCrossEntropyBruteForce) {
  Rng rng(3);
  const T raw = mixture_rows(rng, 3);
  const std::vector<std::uint8_t> targets{65, 217, 32};
  const double eps = 0.1;
  double want = 0.0;
  for (std::size_t t = 0; t < 3; ++t) {
    const auto row = mixture_row(raw, t);
    for (std::size_t b = 0; b < 256; ++b) {
      const double weight = b == targets[t] ? 1.0 - eps : eps / 255.0;
      want -= weight * mixture_log_prob(row, b);
    }
  }
  Graph<double> g;
  EXPECT_NEAR(lm_loss(g.constant(raw), targets, eps).item(), want / 3.0, 1e-10);
}

TEST(LmLoss, NonNegativeAndShapeChecked) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    Graph<double> g;
    std::vector<std::uint8_t> targets{static_cast<std::uint8_t>(rng.below(256)), static_cast<std::uint8_t>(rng.below(256))};
    EXPECT_GE(lm_loss(g.constant(mixture_rows(rng, 2)), targets, 0.1).item(), 0.0);
  }
  Graph<double> g;
  const std::vector<std::uint8_t> one{7};
  EXPECT_THROW(lm_loss(g.constant(mixture_rows(rng, 2)), one, 0.1), ShapeError);
}

TEST(MorphLoss, ExactIndicatorIsNearZero) {
  Graph<double> g;
  auto probs = g.constant(T::matrix(4, 1, {1.0, 0.0, 1.0, 0.0}));
  EXPECT_NEAR(morph_loss(probs, {2}).item(), -std::log(1.0 - 1e-7), 1e-12);
}

TEST(MorphLoss, HalfEverywhereIsLn2) {
  Graph<double> g;
  auto probs = g.constant(T::matrix(5, 1, 0.5));
  EXPECT_NEAR(morph_loss(probs, {3}).item(), std::log(2.0), 1e-12);
}

TEST(MorphLoss, TwoByteExample) {
  Graph<double> g;
  auto probs = g.constant(T::matrix(2, 1, {0.9, 0.2}));
  const double want = -(std::log(0.9) + std::log(0.8)) / 2.0;
  EXPECT_NEAR(morph_loss(probs, {0}).item(), want, 1e-12);
  EXPECT_NEAR(morph_loss_value({0.9, 0.2}, {0}), want, 1e-12);
}

TEST(MorphLoss, OffsetOutOfRangeRejected) {
  Graph<double> g;
  auto probs = g.constant(T::matrix(3, 1, 0.5));
  EXPECT_THROW(morph_loss(probs, {3}), DataError);
}

TEST(MorphLoss, GradientMatchesBce) {
  Graph<double> g;
  auto probs = g.leaf(T::matrix(3, 1, {0.3, 0.6, 0.8}));
  g.backward(morph_loss(probs, {2}));
  // y = [1, 0, 1]
  EXPECT_NEAR(g.grad(probs.id())[0], -1.0 / 0.3 / 3.0, 1e-12);
  EXPECT_NEAR(g.grad(probs.id())[1], 1.0 / 0.4 / 3.0, 1e-12);
  EXPECT_NEAR(g.grad(probs.id())[2], -1.0 / 0.8 / 3.0, 1e-12);
}

TEST(TotalLoss, WeightsCombineLinearly) {
  Graph<double> g;
  auto lm = g.constant(T::scalar(2.0));
  auto kl = g.constant(T::scalar(3.0));
  auto morph = g.constant(T::scalar(0.5));
  auto aux = g.constant(T::scalar(0.25));
  EXPECT_EQ(total_loss(lm, kl, morph, aux, 0.0, 0.0, 0.0).item(), 2.0);
  const double a = total_loss(lm, kl, morph, aux, 0.1, 0.1, 0.05).item();
  EXPECT_NEAR(a, 2.0 + 0.3 + 0.05 + 0.0125, 1e-12);
  const double b = total_loss(lm, kl, morph, aux, 0.2, 0.1, 0.05).item();
  EXPECT_NEAR(b - a, 0.3, 1e-12);
  EXPECT_EQ(total_loss(lm, Var<double>{}, Var<double>{}, Var<double>{}, 1.0, 1.0, 1.0).item(), 2.0);
}

TEST(TotalLoss, DefaultWeights) {
  LossWeights w;
  EXPECT_EQ(w.morph, 0.1);
  EXPECT_EQ(w.aux, 0.05);
  EXPECT_EQ(w.label_smoothing, 0.1);
  EXPECT_NO_THROW(w.validate());
  w.label_smoothing = 1.0;
  EXPECT_THROW(w.validate(), ConfigError);
  w.label_smoothing = 0.1;
  w.kl = -1.0;
  EXPECT_THROW(w.validate(), ConfigError);
}

TEST(TotalLoss, NonFiniteComponentNamed) {
  Graph<double> g;
  auto ok = g.constant(T::scalar(1.0));
  auto bad = g.constant(T::scalar(std::numeric_limits<double>::quiet_NaN()));
  try {
    total_loss(ok, ok, bad, ok, 0.1, 0.1, 0.1);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("morph"), std::string::npos);
  }
  auto inf = g.constant(T::scalar(std::numeric_limits<double>::infinity()));
  EXPECT_THROW(total_loss(inf, ok, ok, ok, 0.1, 0.1, 0.1), NumericError);
}

}  // namespace
}  // namespace hnetpp
