#pragma once
// Small-sample helpers: Student-t interval of a mean and a simple OLS line.

#include <vector>

namespace tokgran {

struct MeanInterval {
  double mean = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double p = 1.0;  // two-sided t-test of mean = 0
  std::size_t n = 0;
};

/// 95% t-interval; needs at least two values. Zero spread gives a zero-width
/// interval and p = 1 when the mean is 0, else p = 0.
MeanInterval t_interval(const std::vector<double>& values);

struct LineFit {
  double intercept = 0.0;
  double slope = 0.0;
  double slope_se = 0.0;
  double p = 1.0;  // two-sided t-test of slope = 0, n - 2 degrees of freedom
  std::vector<double> residuals;
};

/// Ordinary least squares of y on x; needs at least three points and two
/// distinct x values.
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace tokgran
