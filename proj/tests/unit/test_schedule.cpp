#include <gtest/gtest.h>

#include <cmath>

#include "stripereid/schedule.hpp"

using namespace stripereid;
using namespace stripereid::train;

namespace {

ScheduleConfig long_run() {
  ScheduleConfig c;
  c.total_epochs = 400;
  return c;
}

}  // namespace

TEST(Schedule, LongRunMilestones) {
  const auto c = long_run();
  EXPECT_EQ(c.warmup_epochs(), 50);
  EXPECT_EQ(c.milestone_epochs(), (std::vector<std::int64_t>{200, 300}));
  EXPECT_DOUBLE_EQ(lr_at(0, c), 1e-4);
  EXPECT_EQ(lr_at(50, c), 1e-3);
  EXPECT_EQ(lr_at(199, c), 1e-3);
  EXPECT_EQ(lr_at(200, c), 1e-4);
  EXPECT_EQ(lr_at(299, c), 1e-4);
  EXPECT_EQ(lr_at(300, c), 1e-5);
  EXPECT_EQ(lr_at(399, c), 1e-5);
  EXPECT_THROW(lr_at(400, c), std::out_of_range);
  EXPECT_THROW(lr_at(-1, c), std::out_of_range);
}

TEST(Schedule, WarmupIsLinear) {
  const auto c = long_run();
  for (std::int64_t e = 0; e < 50; ++e) {
    EXPECT_NEAR(lr_at(e, c), 1e-4 + (1e-3 - 1e-4) * static_cast<double>(e) / 50.0, 1e-18);
    EXPECT_LT(lr_at(e, c), lr_at(e + 1, c));
  }
}

TEST(Schedule, ShortRunKeepsTheShape) {
  const ScheduleConfig c;  // 40 epochs
  EXPECT_EQ(c.warmup_epochs(), 5);
  EXPECT_EQ(c.milestone_epochs(), (std::vector<std::int64_t>{20, 30}));
  const auto l = long_run();
  for (std::int64_t e = 0; e < 40; ++e) {
    if (e >= 5) EXPECT_EQ(lr_at(e, c), lr_at(e * 10, l)) << e;
  }
  EXPECT_EQ(lr_at(20, c), 1e-4);
  EXPECT_EQ(lr_at(30, c), 1e-5);
}

TEST(Schedule, ValidationRejectsInconsistentBoundaries) {
  ScheduleConfig c;
  c.milestones = {0.75, 0.5};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = ScheduleConfig{};
  c.warmup_fraction = 0.6;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = ScheduleConfig{};
  c.decay_factor = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = ScheduleConfig{};
  c.base_lr = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Adam, FirstStepMovesByLearningRateAgainstTheGradient) {
  std::vector<Tensor> params{Tensor({3}, {1.0, 2.0, 3.0}, true)};
  auto g = params[0].mutable_grad();
  g[0] = 0.5;
  g[1] = -4.0;
  g[2] = 1e3;
  AdamState state;
  adam_step(params, state, 0.01);
  EXPECT_NEAR(params[0][0], 1.0 - 0.01, 1e-9);
  EXPECT_NEAR(params[0][1], 2.0 + 0.01, 1e-9);
  EXPECT_NEAR(params[0][2], 3.0 - 0.01, 1e-9);
  EXPECT_EQ(state.t, 1u);
}

TEST(Adam, MissingGradientLeavesParameterAlone) {
  std::vector<Tensor> params{Tensor({2}, {1.0, -1.0}, true)};
  AdamState state;
  adam_step(params, state, 0.1);
  EXPECT_EQ(params[0][0], 1.0);
  EXPECT_EQ(params[0][1], -1.0);
}

TEST(Adam, UpdatesAreInvariantToGradientScale) {
  std::vector<Tensor> a{Tensor({1}, {0.0}, true)};
  std::vector<Tensor> b{Tensor({1}, {0.0}, true)};
  AdamState sa, sb;
  for (int step = 0; step < 20; ++step) {
    const double g = std::sin(step + 1.0);
    a[0].zero_grad();
    b[0].zero_grad();
    a[0].mutable_grad()[0] = g;
    b[0].mutable_grad()[0] = 1e3 * g;
    adam_step(a, sa, 1e-2);
    adam_step(b, sb, 1e-2);
  }
  EXPECT_NEAR(a[0][0], b[0][0], 1e-8);
}

TEST(Adam, MinimizesAQuadraticBowl) {
  std::vector<Tensor> params{Tensor({2}, {3.0, -2.0}, true)};
  AdamState state;
  for (int step = 0; step < 2000; ++step) {
    params[0].zero_grad();
    auto g = params[0].mutable_grad();
    g[0] = 2.0 * (params[0][0] - 1.0);
    g[1] = 20.0 * (params[0][1] + 0.5);
    adam_step(params, state, 0.01);
  }
  EXPECT_NEAR(params[0][0], 1.0, 1e-3);
  EXPECT_NEAR(params[0][1], -0.5, 1e-3);
}

TEST(Adam, NonFiniteGradientIsAnError) {
  std::vector<Tensor> params{Tensor({1}, {0.0}, true)};
  params[0].mutable_grad()[0] = std::nan("");
  AdamState state;
  EXPECT_THROW(adam_step(params, state, 0.1), NumericError);
}
