#include "tokgran/stats.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <numeric>

#include "tokgran/common.hpp"

namespace tokgran {

namespace {

double two_sided_p(double t, double dof) {
  if (std::isnan(t)) return 1.0;
  if (std::isinf(t)) return 0.0;
  boost::math::students_t dist(dof);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

}  // namespace

MeanInterval t_interval(const std::vector<double>& values) {
  if (values.size() < 2) throw ValidationError("t interval needs at least two values");
  MeanInterval r;
  r.n = values.size();
  const double n = static_cast<double>(values.size());
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - r.mean) * (v - r.mean);
  const double se = std::sqrt(ss / (n - 1.0) / n);
  boost::math::students_t dist(n - 1.0);
  const double q = boost::math::quantile(boost::math::complement(dist, 0.025));
  r.ci_lo = r.mean - q * se;
  r.ci_hi = r.mean + q * se;
  if (se == 0.0) r.p = r.mean == 0.0 ? 1.0 : 0.0;
  else r.p = two_sided_p(r.mean / se, n - 1.0);
  return r;
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ValidationError("fit_line: x and y differ in length");
  if (x.size() < 3) throw ValidationError("fit_line needs at least three points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw ValidationError("fit_line needs two distinct x values");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    f.residuals.push_back(y[i] - f.intercept - f.slope * x[i]);
    rss += f.residuals.back() * f.residuals.back();
  }
  f.slope_se = std::sqrt(rss / (n - 2.0) / sxx);
  if (f.slope_se == 0.0) f.p = f.slope == 0.0 ? 1.0 : 0.0;
  else f.p = two_sided_p(f.slope / f.slope_se, n - 2.0);
  return f;
}

}  // namespace tokgran
