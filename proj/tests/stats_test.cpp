#include "tokgran/stats.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "tokgran/common.hpp"

namespace tokgran {
namespace {

TEST(FitLine, ThreePointSlope) {
  const auto f = fit_line({8, 10, 12}, {1, 2, 3});
  EXPECT_NEAR(f.slope, 0.5, 1e-15);
  EXPECT_NEAR(f.intercept, -3.0, 1e-14);
  for (double r : f.residuals) EXPECT_LT(std::abs(r), 1e-9);
  EXPECT_EQ(f.p, 0.0);
}

TEST(FitLine, ConstantEffects) {
  const auto f = fit_line({6, 8, 10, 12}, {2.5, 2.5, 2.5, 2.5});
  EXPECT_EQ(f.slope, 0.0);
  EXPECT_EQ(f.p, 1.0);
}

TEST(FitLine, TTestAgainstHandComputation) {
  // x = 1..4, y = 1, 3, 2, 5: slope 1.1, intercept -0.25 (hand OLS).
  const auto f = fit_line({1, 2, 3, 4}, {1, 3, 2, 5});
  EXPECT_NEAR(f.slope, 1.1, 1e-12);
  EXPECT_NEAR(f.intercept, 0.0, 1e-12);
  // RSS = 2.7 on 2 dof, Sxx = 5 -> se = sqrt(0.27).
  EXPECT_NEAR(f.slope_se, std::sqrt(0.27), 1e-12);
  // t = 2.1170..., two-sided p with 2 dof: 1 - t / sqrt(2 + t^2).
  const double t = 1.1 / std::sqrt(0.27);
  EXPECT_NEAR(f.p, 1.0 - t / std::sqrt(2.0 + t * t), 1e-12);
  EXPECT_THROW(fit_line({1, 2}, {1, 2}), ValidationError);
  EXPECT_THROW(fit_line({1, 1, 1}, {1, 2, 3}), ValidationError);
}

TEST(TInterval, MatchesClosedFormForTwoValues) {
  // With 1 dof the 97.5% t quantile is tan(0.475 pi).
  const auto r = t_interval({1.0, 3.0});
  EXPECT_DOUBLE_EQ(r.mean, 2.0);
  const double half = std::tan(0.475 * M_PI) * 1.0;
  EXPECT_NEAR(r.ci_hi - r.mean, half, 1e-9);
  EXPECT_NEAR(r.mean - r.ci_lo, half, 1e-9);
  // Cauchy two-sided p for t = 2: 1 - 2 atan(2) / pi.
  EXPECT_NEAR(r.p, 1.0 - 2.0 * std::atan(2.0) / M_PI, 1e-12);
  const auto z = t_interval({0.0, 0.0, 0.0});
  EXPECT_EQ(z.ci_lo, 0.0);
  EXPECT_EQ(z.ci_hi, 0.0);
  EXPECT_EQ(z.p, 1.0);
  EXPECT_THROW(t_interval({1.0}), ValidationError);
}

}  // namespace
}  // namespace tokgran
