#include <gtest/gtest.h>

#include <cmath>

#include "sonardiff/error.hpp"
#include "sonardiff/schedule.hpp"

using namespace sonardiff;

TEST(Schedule, LinearEndpoints) {
  const auto s = NoiseSchedule::linear(1000, 0.0001, 0.02);
  EXPECT_EQ(s.steps(), 1000);
  EXPECT_DOUBLE_EQ(s.beta(1), 0.0001);
  EXPECT_DOUBLE_EQ(s.beta(1000), 0.02);
  EXPECT_NEAR(s.beta(500), 0.0001 + 499.0 * (0.02 - 0.0001) / 999.0, 1e-15);
}

TEST(Schedule, SingleStep) {
  const auto s = NoiseSchedule::linear(1, 0.01, 0.01);
  EXPECT_DOUBLE_EQ(s.alpha_bar(1), 0.99);
  EXPECT_EQ(s.alpha_bar(0), 1.0);
}

// Independent product in quad precision.
TEST(Schedule, AlphaBarAtThousandSteps) {
  const auto s = NoiseSchedule::linear(1000, 0.0001, 0.02);
  __float128 prod = 1;
  for (int t = 1; t <= 1000; ++t) {
    const __float128 beta = static_cast<__float128>(0.0001) +
                            static_cast<__float128>(t - 1) * (static_cast<__float128>(0.02) - 0.0001) / 999;
    prod *= 1 - beta;
  }
  EXPECT_NEAR(s.alpha_bar(1000), static_cast<double>(prod), 1e-15);
  EXPECT_NEAR(s.alpha_bar(1000), 4.0e-5, 1e-5);
}

TEST(Schedule, InvariantsHold) {
  const auto s = NoiseSchedule::linear(200, 0.0005, 0.1);
  for (int t = 1; t <= s.steps(); ++t) {
    EXPECT_EQ(s.alpha(t), 1.0 - s.beta(t));
    EXPECT_NEAR(s.alpha_bar(t) / s.alpha_bar(t - 1), s.alpha(t), 1e-14);
    EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
    if (t > 1) EXPECT_GE(s.beta(t), s.beta(t - 1));
  }
  EXPECT_GT(s.alpha_bar(s.steps()), 0.0);
}

TEST(Schedule, BadArgumentsRejected) {
  EXPECT_THROW(NoiseSchedule::linear(0, 0.1, 0.2), InvalidArgument);
  EXPECT_THROW(NoiseSchedule::linear(10, 0.0, 0.2), InvalidArgument);
  EXPECT_THROW(NoiseSchedule::linear(10, 0.3, 0.2), InvalidArgument);
  EXPECT_THROW(NoiseSchedule::linear(10, 0.1, 1.0), InvalidArgument);
  const auto s = NoiseSchedule::linear(10, 0.1, 0.2);
  EXPECT_THROW(s.beta(0), InvalidArgument);
  EXPECT_THROW(s.beta(11), InvalidArgument);
}

TEST(Schedule, JsonRoundTrip) {
  const auto s = NoiseSchedule::linear(200, 0.0005, 0.1);
  const auto back = NoiseSchedule::from_json(s.to_json());
  for (int t = 1; t <= s.steps(); ++t) EXPECT_EQ(back.alpha_bar(t), s.alpha_bar(t));
  EXPECT_THROW(NoiseSchedule::from_json(R"({"T":10,"beta_start":0.5,"beta_end":0.1,"kind":"linear"})"),
               InvalidArgument);
}

TEST(Subsequence, IdentityWhenFull) {
  const auto s = NoiseSchedule::linear(1000, 0.0001, 0.02);
  const auto seq = subsequence(s, 1000);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(seq[static_cast<std::size_t>(i)], i + 1);
}

TEST(Subsequence, FiftyOfThousand) {
  const auto seq = subsequence(NoiseSchedule::linear(1000, 0.0001, 0.02), 50);
  ASSERT_EQ(seq.size(), 50u);
  EXPECT_EQ(seq.back(), 1000);
  for (std::size_t i = 0; i < seq.size(); ++i) EXPECT_EQ(seq[i], 20 * static_cast<int>(i + 1));
}

TEST(Subsequence, EnumeratedSpacing) {
  const auto s = NoiseSchedule::linear(200, 0.0005, 0.1);
  EXPECT_EQ(subsequence(s, 4), (std::vector<int>{50, 100, 150, 200}));
  for (int S = 1; S <= 200; ++S) {
    const auto seq = subsequence(s, S);
    ASSERT_EQ(static_cast<int>(seq.size()), S);
    EXPECT_EQ(seq.back(), 200);
    for (std::size_t i = 1; i < seq.size(); ++i) ASSERT_LT(seq[i - 1], seq[i]);
    EXPECT_GE(seq.front(), 1);
  }
  EXPECT_THROW(subsequence(s, 201), InvalidArgument);
  EXPECT_THROW(subsequence(s, 0), InvalidArgument);
}
