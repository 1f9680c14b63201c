#include <cmath>
#include <map>
#include <numbers>

#include <gtest/gtest.h>

#include "hnetpp/curriculum.hpp"
#include "hnetpp/optim.hpp"

namespace hnetpp {
namespace {

OptimizerConfig schedule(double lr, double min_lr, std::size_t warmup, std::size_t total) {
  OptimizerConfig c;
  c.lr = lr;
  c.min_lr = min_lr;
  c.warmup_steps = warmup;
  c.total_steps = total;
  return c;
}

TEST(LrSchedule, WarmupThenCosine) {
  auto c = schedule(2e-4, 1e-6, 100, 1100);
  EXPECT_DOUBLE_EQ(lr_schedule(0, c), 0.0);
  EXPECT_DOUBLE_EQ(lr_schedule(50, c), 1e-4);
  EXPECT_DOUBLE_EQ(lr_schedule(100, c), 2e-4);
  EXPECT_NEAR(lr_schedule(600, c), 1e-6 + (2e-4 - 1e-6) * 0.5, 1e-15);
  EXPECT_NEAR(lr_schedule(350, c), 1e-6 + (2e-4 - 1e-6) * 0.5 * (1.0 + std::cos(std::numbers::pi / 4)), 1e-15);
  EXPECT_DOUBLE_EQ(lr_schedule(1100, c), 1e-6);
  EXPECT_DOUBLE_EQ(lr_schedule(5000, c), 1e-6);
}

TEST(LrSchedule, MonotoneAfterWarmup) {
  auto c = schedule(1e-3, 1e-5, 10, 200);
  for (std::size_t s = 10; s < 250; ++s) EXPECT_LE(lr_schedule(s + 1, c), lr_schedule(s, c));
}

struct OneParam {
  ParameterStore<double> store;
  Parameter<double>* p;
  OneParam(std::vector<double> v, std::vector<double> g) {
    p = &store.add("w", Tensor<double>({1, v.size()}, v));
    p->grad = Tensor<double>({1, g.size()}, g);
  }
};

TEST(Clip, ScalesToMaxNorm) {
  OneParam s({0, 0}, {3, 4});
  EXPECT_DOUBLE_EQ(clip_gradients(s.store, 1.0), 5.0);
  EXPECT_NEAR(s.p->grad[0], 0.6, 1e-15);
  EXPECT_NEAR(s.p->grad[1], 0.8, 1e-15);
  EXPECT_NEAR(gradient_norm(s.store), 1.0, 1e-15);
}

TEST(Clip, LeavesSmallGradients) {
  OneParam s({0}, {0.5});
  EXPECT_DOUBLE_EQ(clip_gradients(s.store, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(s.p->grad[0], 0.5);
}

// Reference update written out per step.
TEST(AdamW, MatchesHandComputedSteps) {
  OptimizerConfig c;
  c.beta1 = 0.9;
  c.beta2 = 0.98;
  c.eps = 1e-8;
  c.weight_decay = 0.01;
  OneParam s({1.0, -2.0}, {0.5, -0.1});
  AdamState<double> st;
  double w[2] = {1.0, -2.0}, m[2] = {0, 0}, v[2] = {0, 0};
  const double grads[3][2] = {{0.5, -0.1}, {-0.2, 0.3}, {0.05, 0.0}};
  for (int step = 1; step <= 3; ++step) {
    const double lr = 1e-2;
    s.p->grad = Tensor<double>({1, 2}, {grads[step - 1][0], grads[step - 1][1]});
    adamw_step(s.store, st, lr, c);
    for (int i = 0; i < 2; ++i) {
      const double g = grads[step - 1][i];
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.98 * v[i] + 0.02 * g * g;
      const double mh = m[i] / (1 - std::pow(0.9, step));
      const double vh = v[i] / (1 - std::pow(0.98, step));
      w[i] = w[i] - lr * 0.01 * w[i] - lr * mh / (std::sqrt(vh) + 1e-8);
      EXPECT_NEAR(s.p->value[i], w[i], 1e-14);
    }
  }
  EXPECT_EQ(st.steps, 3u);
}

TEST(AdamW, FirstStepMovesByLr) {
  OptimizerConfig c;
  c.weight_decay = 0.0;
  OneParam s({0.0}, {1e3});
  AdamState<double> st;
  adamw_step(s.store, st, 1e-3, c);
  EXPECT_NEAR(s.p->value[0], -1e-3, 1e-12);
}

TEST(AdamW, RejectsNonFiniteGradient) {
  OptimizerConfig c;
  OneParam s({1.0}, {std::nan("")});
  AdamState<double> st;
  try {
    adamw_step(s.store, st, 1e-3, c);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("w"), std::string::npos);
  }
  EXPECT_DOUBLE_EQ(s.p->value[0], 1.0);
}

TEST(OptimizerConfig, Validation) {
  OptimizerConfig c;
  c.beta2 = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.min_lr = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Curriculum, StagesAndLengths) {
  CurriculumConfig c;
  EXPECT_EQ(curriculum_stage(0, c), CurriculumStage::Warmup);
  EXPECT_EQ(curriculum_stage(49'999, c), CurriculumStage::Warmup);
  EXPECT_EQ(curriculum_stage(50'000, c), CurriculumStage::Growth);
  EXPECT_EQ(curriculum_stage(199'999, c), CurriculumStage::Growth);
  EXPECT_EQ(curriculum_stage(200'000, c), CurriculumStage::Full);
  for (std::size_t s = 0; s < 50'000; s += 997) EXPECT_EQ(curriculum_sample_length(s, 1, c), 256u);
}

TEST(Curriculum, GrowthFrequencies) {
  CurriculumConfig c;
  std::map<std::size_t, int> counts;
  const int n = 40'000;
  for (int i = 0; i < n; ++i) ++counts[curriculum_sample_length(50'000 + i, 11, c)];
  ASSERT_EQ(counts.size(), 4u);
  // 4 sigma binomial band
  const std::pair<std::size_t, double> expect[] = {{256, 0.4}, {512, 0.3}, {1024, 0.2}, {2048, 0.1}};
  for (auto [len, p] : expect) {
    const double sd = std::sqrt(n * p * (1 - p));
    EXPECT_NEAR(counts[len], n * p, 4 * sd) << len;
  }
}

TEST(Curriculum, FullStageRange) {
  CurriculumConfig c;
  std::size_t lo = 1u << 30, hi = 0;
  for (std::size_t s = 0; s < 20'000; ++s) {
    auto len = curriculum_sample_length(200'000 + s, 3, c);
    lo = std::min(lo, len);
    hi = std::max(hi, len);
  }
  EXPECT_GE(lo, 1u);
  EXPECT_LE(hi, 4096u);
  EXPECT_GT(hi, 4000u);
  EXPECT_LT(lo, 100u);
}

TEST(Curriculum, DeterministicAndScaled) {
  CurriculumConfig c;
  EXPECT_EQ(curriculum_sample_length(123'456, 5, c), curriculum_sample_length(123'456, 5, c));
  c.scale = 100;
  EXPECT_EQ(curriculum_stage(499, c), CurriculumStage::Warmup);
  EXPECT_EQ(curriculum_stage(500, c), CurriculumStage::Growth);
  EXPECT_EQ(curriculum_stage(2000, c), CurriculumStage::Full);
  EXPECT_EQ(curriculum_sample_length(0, 5, c), 2u);
}

TEST(Curriculum, Validation) {
  CurriculumConfig c;
  c.growth_probs = {0.5, 0.5, 0.5, 0.5};
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.growth_end = 10;
  EXPECT_THROW(c.validate(), ConfigError);
}

}  // namespace
}  // namespace hnetpp
