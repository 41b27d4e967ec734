#pragma once
// Linear mixed-effects regression fitted by maximum likelihood on the
// profiled deviance. Random-effect covariance is diagonal: each random term
// (grouping factor x intercept or slope) has its own variance.

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace tokgran {

/// Column store of doubles. Grouping factors are integer-valued columns.
class DataTable {
 public:
  void add(const std::string& name, std::vector<double> values);
  bool has(const std::string& name) const { return index_.contains(name); }
  const std::vector<double>& col(const std::string& name) const;
  std::vector<double>& col(const std::string& name);
  std::size_t rows() const { return rows_; }
  const std::vector<std::string>& names() const { return names_; }

  /// Rows where keep[i] is true.
  DataTable subset(const std::vector<bool>& keep) const;

 private:
  std::vector<std::string> names_;
  std::vector<std::vector<double>> cols_;
  std::map<std::string, std::size_t> index_;
  std::size_t rows_ = 0;
};

struct RandomTerm {
  std::string group;
  std::string term = "1";  // "1" for an intercept, otherwise a predictor column

  bool intercept() const { return term == "1"; }
  std::string label() const { return group + ":" + term; }
  bool operator==(const RandomTerm&) const = default;
};

struct ModelSpec {
  std::string response;
  std::vector<std::string> fixed;  // an intercept is always included
  std::vector<RandomTerm> random;

  void validate(const DataTable& data) const;
  std::string to_string() const;
};

struct LMEOptions {
  double variance_floor = 0.0;  // lower bound on the residual variance
  double tolerance = 1e-8;      // deviance spread across the simplex, relative to 1 + |deviance|
  int max_evaluations = 0;      // 0 picks 400 + 400 * (number of random terms)
  double singular_threshold = 1e-4;
};

struct GroupEffects {
  RandomTerm term;
  double variance = 0.0;                  // sigma^2 * theta^2
  double theta = 0.0;                     // relative standard deviation
  std::map<long long, double> modes;      // conditional mode per level
};

struct LMEFit {
  ModelSpec spec;  // the spec actually fitted
  std::vector<std::string> coef_names;  // "(Intercept)" then spec.fixed
  Eigen::VectorXd beta;                 // raw predictor scale
  Eigen::MatrixXd cov;                  // covariance of beta, raw scale
  std::vector<bool> aliased;            // constant predictors, coefficient fixed at 0
  std::vector<GroupEffects> random;
  double sigma2 = 0.0;
  double loglik = 0.0;
  double deviance = 0.0;
  std::size_t n_obs = 0;
  bool converged = false;
  bool optimizer_converged = false;
  int evaluations = 0;
  std::vector<double> deviance_trace;   // best deviance after each optimizer iteration
  std::vector<RandomTerm> removed;      // simplification order

  // Standardization of predictors, from the fit data.
  std::map<std::string, double> center;
  std::map<std::string, double> scale;

  double se(std::size_t k) const { return std::sqrt(cov(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k))); }
  std::size_t index_of(const std::string& coef) const;
};

struct WaldSummary {
  double estimate = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double p = 1.0;
};

/// 95% Wald interval and two-sided normal p-value.
WaldSummary wald(const LMEFit& fit, const std::string& coef);

LMEFit fit_lme(const ModelSpec& spec, const DataTable& data, const LMEOptions& options = {});

/// Profiled deviance at fixed relative standard deviations theta (one per
/// random term), for tests and diagnostics.
double profiled_deviance(const ModelSpec& spec, const DataTable& data, const std::vector<double>& theta,
                         const LMEOptions& options = {});

/// Fit with theta held fixed instead of optimized; theta = 0 gives ordinary
/// least squares.
LMEFit fit_lme_at(const ModelSpec& spec, const DataTable& data, const std::vector<double>& theta,
                  const LMEOptions& options = {});

/// Refits after dropping, on non-convergence, the random slope with the
/// smallest variance ratio (intercepts only once no slopes remain). With no
/// random terms left the fit is ordinary least squares.
LMEFit simplify_until_converged(const ModelSpec& spec, const DataTable& data, const LMEOptions& options = {});

/// Plug-in Gaussian log-likelihood of `data` with the fitted coefficients,
/// residual variance and conditional modes (zero for unseen levels).
double loglik_on(const LMEFit& fit, const DataTable& data);

/// Fixed-effects-only prediction.
std::vector<double> predict_fixed(const LMEFit& fit, const DataTable& data);

/// Text report: spec, coefficients, variances, removals, log-likelihood.
std::string fit_report(const LMEFit& fit);

}  // namespace tokgran
