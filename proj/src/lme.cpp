#include "tokgran/lme.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "tokgran/common.hpp"

namespace tokgran {

void DataTable::add(const std::string& name, std::vector<double> values) {
  if (!names_.empty() && values.size() != rows_) {
    throw ValidationError("column " + name + " has " + std::to_string(values.size()) + " rows, table has " +
                          std::to_string(rows_));
  }
  rows_ = values.size();
  if (auto it = index_.find(name); it != index_.end()) {
    cols_[it->second] = std::move(values);
    return;
  }
  index_[name] = names_.size();
  names_.push_back(name);
  cols_.push_back(std::move(values));
}

const std::vector<double>& DataTable::col(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("missing column " + name);
  return cols_[it->second];
}

std::vector<double>& DataTable::col(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("missing column " + name);
  return cols_[it->second];
}

DataTable DataTable::subset(const std::vector<bool>& keep) const {
  if (keep.size() != rows_) throw ValidationError("subset mask length does not match table");
  DataTable out;
  for (std::size_t c = 0; c < names_.size(); ++c) {
    std::vector<double> v;
    for (std::size_t i = 0; i < rows_; ++i) {
      if (keep[i]) v.push_back(cols_[c][i]);
    }
    out.add(names_[c], std::move(v));
  }
  return out;
}

void ModelSpec::validate(const DataTable& data) const {
  if (!data.has(response)) throw ValidationError("missing response column " + response);
  std::set<std::string> seen;
  for (const auto& f : fixed) {
    if (!data.has(f)) throw ValidationError("missing fixed-effect column " + f);
    if (!seen.insert(f).second) throw ValidationError("duplicate fixed-effect term " + f);
  }
  std::set<std::string> rseen;
  for (const auto& r : random) {
    if (!data.has(r.group)) throw ValidationError("missing grouping column " + r.group);
    if (!r.intercept() && !data.has(r.term)) throw ValidationError("missing random-slope column " + r.term);
    if (!rseen.insert(r.label()).second) throw ValidationError("duplicate random term " + r.label());
  }
}

std::string ModelSpec::to_string() const {
  std::string s = response + " ~ 1";
  for (const auto& f : fixed) s += " + " + f;
  for (const auto& r : random) s += " + (" + (r.intercept() ? std::string("1") : "0 + " + r.term) + " | " + r.group + ")";
  return s;
}

std::size_t LMEFit::index_of(const std::string& coef) const {
  for (std::size_t i = 0; i < coef_names.size(); ++i) {
    if (coef_names[i] == coef) return i;
  }
  throw ValidationError("no coefficient named " + coef);
}

WaldSummary wald(const LMEFit& fit, const std::string& coef) {
  constexpr double kZ975 = 1.959963984540054;
  const std::size_t k = fit.index_of(coef);
  WaldSummary w;
  w.estimate = fit.beta(static_cast<Eigen::Index>(k));
  w.se = fit.se(k);
  w.ci_lo = w.estimate - kZ975 * w.se;
  w.ci_hi = w.estimate + kZ975 * w.se;
  w.p = w.se > 0.0 ? std::erfc(std::abs(w.estimate / w.se) / std::numbers::sqrt2) : (w.estimate == 0.0 ? 1.0 : 0.0);
  return w;
}

namespace {

using SpMat = Eigen::SparseMatrix<double>;

double standardized(double x, const std::string& name, const LMEFit& fit) {
  return (x - fit.center.at(name)) / fit.scale.at(name);
}

// Mixed-model normal equations for one data set, reused across theta.
class Problem {
 public:
  Problem(const ModelSpec& spec, const DataTable& data, const LMEOptions& options) : spec_(spec), options_(options) {
    spec.validate(data);
    n_ = data.rows();
    if (n_ < 2) throw ValidationError("need at least two observations");
    y_ = Eigen::Map<const Eigen::VectorXd>(data.col(spec.response).data(), static_cast<Eigen::Index>(n_));
    if (!y_.allFinite()) throw ValidationError("non-finite response values");

    // Standardize every predictor that enters X or Z.
    std::vector<std::string> predictors = spec.fixed;
    for (const auto& r : spec.random) {
      if (!r.intercept() && std::find(predictors.begin(), predictors.end(), r.term) == predictors.end()) {
        predictors.push_back(r.term);
      }
    }
    for (const auto& name : predictors) {
      const auto& x = data.col(name);
      double mean = 0.0;
      for (double v : x) {
        if (!std::isfinite(v)) throw ValidationError("non-finite values in column " + name);
        mean += v;
      }
      mean /= static_cast<double>(n_);
      double ss = 0.0;
      for (double v : x) ss += (v - mean) * (v - mean);
      const double sd = std::sqrt(ss / static_cast<double>(n_));
      center_[name] = mean;
      scale_[name] = sd > 1e-12 * std::max(1.0, std::abs(mean)) ? sd : 0.0;
    }

    // Fixed effects; constant predictors are aliased with the intercept.
    active_.push_back(0);
    for (std::size_t j = 0; j < spec.fixed.size(); ++j) {
      if (scale_[spec.fixed[j]] > 0.0) active_.push_back(j + 1);
    }
    X_.resize(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(active_.size()));
    X_.col(0).setOnes();
    for (std::size_t a = 1; a < active_.size(); ++a) {
      const auto& name = spec.fixed[active_[a] - 1];
      const auto& x = data.col(name);
      for (std::size_t i = 0; i < n_; ++i) X_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) = (x[i] - center_[name]) / scale_[name];
    }
    XtX_ = X_.transpose() * X_;
    Xty_ = X_.transpose() * y_;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(XtX_);
    if (eig.eigenvalues().minCoeff() <= 1e-10 * eig.eigenvalues().maxCoeff()) {
      throw ValidationError("rank-deficient fixed-effects design in " + spec.to_string());
    }

    // Random effects.
    std::vector<Eigen::Triplet<double>> trip;
    std::size_t offset = 0;
    for (const auto& r : spec.random) {
      const auto& g = data.col(r.group);
      std::map<long long, int> lv;
      for (double v : g) lv.emplace(static_cast<long long>(std::llround(v)), 0);
      if (lv.size() < 2) throw ValidationError("grouping factor " + r.group + " needs at least two levels");
      int k = 0;
      std::vector<long long> ordered;
      for (auto& [key, idx] : lv) {
        idx = k++;
        ordered.push_back(key);
      }
      const std::vector<double>* slope = r.intercept() ? nullptr : &data.col(r.term);
      const double c = r.intercept() ? 0.0 : center_[r.term];
      const double s = r.intercept() ? 1.0 : (scale_[r.term] > 0.0 ? scale_[r.term] : 1.0);
      for (std::size_t i = 0; i < n_; ++i) {
        const double z = slope ? ((*slope)[i] - c) / s : 1.0;
        trip.emplace_back(static_cast<int>(i), static_cast<int>(offset) + lv[static_cast<long long>(std::llround(g[i]))], z);
      }
      levels_.push_back(std::move(ordered));
      offsets_.push_back(offset);
      offset += lv.size();
    }
    q_ = offset;
    if (q_ > 0) {
      Z_.resize(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(q_));
      Z_.setFromTriplets(trip.begin(), trip.end());
      SpMat ztz = SpMat(Z_.transpose()) * Z_;
      SpMat eye(static_cast<Eigen::Index>(q_), static_cast<Eigen::Index>(q_));
      eye.setIdentity();
      // Pattern of ZtZ + I; keep ZtZ's values aligned with it.
      A_ = ztz + eye;
      A_.makeCompressed();
      ztz_values_.assign(A_.valuePtr(), A_.valuePtr() + A_.nonZeros());
      for (Eigen::Index j = 0; j < A_.outerSize(); ++j) {
        for (SpMat::InnerIterator it(A_, j); it; ++it) {
          if (it.row() == it.col()) ztz_values_[static_cast<std::size_t>(&it.valueRef() - A_.valuePtr())] -= 1.0;
        }
      }
      ZtX_ = Z_.transpose() * X_;
      Zty_ = Z_.transpose() * y_;
      term_of_.resize(q_);
      for (std::size_t t = 0; t < spec.random.size(); ++t) {
        for (std::size_t j = 0; j < levels_[t].size(); ++j) term_of_[offsets_[t] + j] = t;
      }
      solver_.analyzePattern(A_);
    }
  }

  struct Eval {
    double deviance = 0.0;
    double sigma2 = 0.0;
    Eigen::VectorXd beta;  // active columns, standardized scale
    Eigen::VectorXd u;
    Eigen::MatrixXd Minv;
  };

  Eval evaluate(const std::vector<double>& theta) {
    Eval e;
    const double n = static_cast<double>(n_);
    double logdet = 0.0;
    Eigen::MatrixXd M = XtX_;
    Eigen::VectorXd rhs = Xty_;
    Eigen::MatrixXd AinvLZtX;
    Eigen::VectorXd AinvLZty;
    Eigen::VectorXd lam;
    if (q_ > 0) {
      lam.resize(static_cast<Eigen::Index>(q_));
      for (std::size_t j = 0; j < q_; ++j) lam(static_cast<Eigen::Index>(j)) = theta[term_of_[j]];
      for (Eigen::Index j = 0; j < A_.outerSize(); ++j) {
        for (SpMat::InnerIterator it(A_, j); it; ++it) {
          const auto k = static_cast<std::size_t>(&it.valueRef() - A_.valuePtr());
          it.valueRef() = lam(it.row()) * lam(it.col()) * ztz_values_[k] + (it.row() == it.col() ? 1.0 : 0.0);
        }
      }
      solver_.factorize(A_);
      if (solver_.info() != Eigen::Success) throw std::runtime_error("sparse factorization failed");
      logdet = solver_.vectorD().array().log().sum();
      const Eigen::MatrixXd LZtX = lam.asDiagonal() * ZtX_;
      const Eigen::VectorXd LZty = lam.asDiagonal() * Zty_;
      AinvLZtX = solver_.solve(LZtX);
      AinvLZty = solver_.solve(LZty);
      M -= LZtX.transpose() * AinvLZtX;
      rhs -= LZtX.transpose() * AinvLZty;
    }
    Eigen::LDLT<Eigen::MatrixXd> mfac(M);
    e.beta = mfac.solve(rhs);
    e.Minv = mfac.solve(Eigen::MatrixXd::Identity(M.rows(), M.cols()));
    Eigen::VectorXd resid = y_ - X_ * e.beta;
    double r2 = 0.0;
    if (q_ > 0) {
      e.u = AinvLZty - AinvLZtX * e.beta;
      resid -= Z_ * (lam.asDiagonal() * e.u);
      r2 = resid.squaredNorm() + e.u.squaredNorm();
    } else {
      r2 = resid.squaredNorm();
    }
    e.sigma2 = std::max(r2 / n, options_.variance_floor);
    if (!(e.sigma2 > 0.0)) e.sigma2 = std::numeric_limits<double>::min();
    e.deviance = logdet + n * std::log(2.0 * std::numbers::pi * e.sigma2) + r2 / e.sigma2;
    return e;
  }

  LMEFit assemble(const std::vector<double>& theta, const Eval& e) const {
    LMEFit fit;
    fit.spec = spec_;
    fit.n_obs = n_;
    fit.center = center_;
    fit.scale = scale_;
    for (auto& [name, s] : fit.scale) {
      if (s == 0.0) s = 1.0;
    }
    const std::size_t p = spec_.fixed.size() + 1;
    fit.coef_names.push_back("(Intercept)");
    for (const auto& f : spec_.fixed) fit.coef_names.push_back(f);
    fit.aliased.assign(p, true);
    // Map active standardized coefficients back to the raw predictor scale.
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(active_.size()));
    for (std::size_t a = 0; a < active_.size(); ++a) {
      const std::size_t j = active_[a];
      fit.aliased[j] = false;
      if (j == 0) {
        T(0, 0) = 1.0;
        continue;
      }
      const auto& name = spec_.fixed[j - 1];
      T(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(a)) = 1.0 / scale_.at(name);
      T(0, static_cast<Eigen::Index>(a)) = -center_.at(name) / scale_.at(name);
    }
    fit.beta = T * e.beta;
    fit.cov = T * (e.sigma2 * e.Minv) * T.transpose();
    fit.sigma2 = e.sigma2;
    fit.deviance = e.deviance;
    fit.loglik = -0.5 * e.deviance;
    for (std::size_t t = 0; t < spec_.random.size(); ++t) {
      GroupEffects g;
      g.term = spec_.random[t];
      g.theta = std::abs(theta[t]);
      g.variance = e.sigma2 * theta[t] * theta[t];
      for (std::size_t j = 0; j < levels_[t].size(); ++j) {
        g.modes[levels_[t][j]] = theta[t] * e.u(static_cast<Eigen::Index>(offsets_[t] + j));
      }
      fit.random.push_back(std::move(g));
    }
    return fit;
  }

  std::size_t terms() const { return spec_.random.size(); }

 private:
  ModelSpec spec_;
  LMEOptions options_;
  std::size_t n_ = 0;
  std::size_t q_ = 0;
  Eigen::VectorXd y_;
  Eigen::MatrixXd X_;
  std::vector<std::size_t> active_;
  std::map<std::string, double> center_;
  std::map<std::string, double> scale_;
  Eigen::MatrixXd XtX_;
  Eigen::VectorXd Xty_;
  SpMat Z_;
  SpMat A_;
  std::vector<double> ztz_values_;
  Eigen::MatrixXd ZtX_;
  Eigen::VectorXd Zty_;
  std::vector<std::vector<long long>> levels_;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> term_of_;
  Eigen::SimplicialLDLT<SpMat> solver_;
};

struct NelderMeadResult {
  std::vector<double> x;
  double f = 0.0;
  bool converged = false;
  int evaluations = 0;
  std::vector<double> trace;
};

// Simplex must also shrink in theta; a flat deviance alone stops too early near zero variances.
constexpr double kThetaTolerance = 1e-6;

template <class F>
NelderMeadResult nelder_mead(F&& f, std::vector<double> x0, double step, double tol, int max_evals) {
  const std::size_t m = x0.size();
  std::vector<std::vector<double>> pts(m + 1, x0);
  for (std::size_t i = 0; i < m; ++i) pts[i + 1][i] += step;
  NelderMeadResult res;
  std::vector<double> fv(m + 1);
  for (std::size_t i = 0; i <= m; ++i) fv[i] = f(pts[i]);
  res.evaluations = static_cast<int>(m + 1);
  std::vector<std::size_t> order(m + 1);
  auto sort = [&] {
    for (std::size_t i = 0; i <= m; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
  };
  auto point = [&](const std::vector<double>& c, const std::vector<double>& w, double t) {
    std::vector<double> r(m);
    for (std::size_t i = 0; i < m; ++i) r[i] = c[i] + t * (w[i] - c[i]);
    return r;
  };
  sort();
  while (true) {
    const double best = fv[order.front()], worst = fv[order.back()];
    res.trace.push_back(best);
    double xspread = 0.0;
    for (std::size_t k = 1; k <= m; ++k)
      for (std::size_t i = 0; i < m; ++i)
        xspread = std::max(xspread, std::abs(pts[order[k]][i] - pts[order.front()][i]));
    if (worst - best <= tol * (1.0 + std::abs(best)) && xspread <= kThetaTolerance) {
      res.converged = true;
      break;
    }
    if (res.evaluations >= max_evals) break;
    std::vector<double> c(m, 0.0);
    for (std::size_t k = 0; k < m; ++k) {
      for (std::size_t i = 0; i < m; ++i) c[i] += pts[order[k]][i] / static_cast<double>(m);
    }
    const std::size_t w = order.back();
    const auto xr = point(c, pts[w], -1.0);
    const double fr = f(xr);
    ++res.evaluations;
    if (fr < fv[order.front()]) {
      const auto xe = point(c, pts[w], -2.0);
      const double fe = f(xe);
      ++res.evaluations;
      if (fe < fr) pts[w] = xe, fv[w] = fe;
      else pts[w] = xr, fv[w] = fr;
    } else if (fr < fv[order[m - 1]]) {
      pts[w] = xr, fv[w] = fr;
    } else {
      const bool outside = fr < fv[w];
      const auto xc = outside ? point(c, xr, 0.5) : point(c, pts[w], 0.5);
      const double fc = f(xc);
      ++res.evaluations;
      if (fc < std::min(fr, fv[w])) {
        pts[w] = xc, fv[w] = fc;
      } else {
        const auto& b = pts[order.front()];
        for (std::size_t k = 1; k <= m; ++k) {
          pts[order[k]] = point(b, pts[order[k]], 0.5);
          fv[order[k]] = f(pts[order[k]]);
          ++res.evaluations;
        }
      }
    }
    sort();
  }
  res.x = pts[order.front()];
  res.f = fv[order.front()];
  return res;
}

}  // namespace

double profiled_deviance(const ModelSpec& spec, const DataTable& data, const std::vector<double>& theta,
                         const LMEOptions& options) {
  Problem prob(spec, data, options);
  if (theta.size() != prob.terms()) throw ValidationError("theta needs one value per random term");
  return prob.evaluate(theta).deviance;
}

LMEFit fit_lme_at(const ModelSpec& spec, const DataTable& data, const std::vector<double>& theta,
                  const LMEOptions& options) {
  Problem prob(spec, data, options);
  if (theta.size() != prob.terms()) throw ValidationError("theta needs one value per random term");
  LMEFit fit = prob.assemble(theta, prob.evaluate(theta));
  fit.converged = fit.optimizer_converged = true;
  return fit;
}

LMEFit fit_lme(const ModelSpec& spec, const DataTable& data, const LMEOptions& options) {
  Problem prob(spec, data, options);
  const std::size_t m = prob.terms();
  if (m == 0) {
    LMEFit fit = prob.assemble({}, prob.evaluate({}));
    fit.converged = fit.optimizer_converged = true;
    fit.deviance_trace = {fit.deviance};
    return fit;
  }
  const int max_evals = options.max_evaluations > 0 ? options.max_evaluations : 400 + 400 * static_cast<int>(m);
  auto nm = nelder_mead([&](const std::vector<double>& th) { return prob.evaluate(th).deviance; },
                        std::vector<double>(m, 1.0), 0.5, options.tolerance, max_evals);
  std::vector<double> theta = nm.x;
  for (double& t : theta) t = std::abs(t);
  LMEFit fit = prob.assemble(theta, prob.evaluate(theta));
  fit.optimizer_converged = nm.converged;
  fit.evaluations = nm.evaluations;
  fit.deviance_trace = std::move(nm.trace);
  bool singular = false;
  for (double t : theta) singular |= t < options.singular_threshold;
  fit.converged = nm.converged && !singular;
  return fit;
}

LMEFit simplify_until_converged(const ModelSpec& spec, const DataTable& data, const LMEOptions& options) {
  ModelSpec current = spec;
  std::vector<RandomTerm> removed;
  while (true) {
    LMEFit fit = fit_lme(current, data, options);
    if (fit.converged || current.random.empty()) {
      fit.removed = removed;
      return fit;
    }
    // Smallest variance ratio among slopes; intercepts only when no slope is left.
    std::size_t drop = current.random.size();
    for (int pass = 0; pass < 2 && drop == current.random.size(); ++pass) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < current.random.size(); ++t) {
        if (current.random[t].intercept() != (pass == 1)) continue;
        const double ratio = fit.random[t].theta * fit.random[t].theta;
        if (ratio < best) {
          best = ratio;
          drop = t;
        }
      }
    }
    removed.push_back(current.random[drop]);
    current.random.erase(current.random.begin() + static_cast<std::ptrdiff_t>(drop));
  }
}

std::vector<double> predict_fixed(const LMEFit& fit, const DataTable& data) {
  std::vector<double> out(data.rows(), fit.beta(0));
  for (std::size_t j = 0; j < fit.spec.fixed.size(); ++j) {
    const double b = fit.beta(static_cast<Eigen::Index>(j + 1));
    if (b == 0.0) continue;
    const auto& x = data.col(fit.spec.fixed[j]);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b * x[i];
  }
  return out;
}

double loglik_on(const LMEFit& fit, const DataTable& data) {
  auto mu = predict_fixed(fit, data);
  for (const auto& g : fit.random) {
    const auto& group = data.col(g.term.group);
    const std::vector<double>* slope = g.term.intercept() ? nullptr : &data.col(g.term.term);
    for (std::size_t i = 0; i < mu.size(); ++i) {
      auto it = g.modes.find(static_cast<long long>(std::llround(group[i])));
      if (it == g.modes.end()) continue;
      mu[i] += it->second * (slope ? standardized((*slope)[i], g.term.term, fit) : 1.0);
    }
  }
  const auto& y = data.col(fit.spec.response);
  double ll = 0.0;
  const double norm = -0.5 * std::log(2.0 * std::numbers::pi * fit.sigma2);
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const double r = y[i] - mu[i];
    ll += norm - 0.5 * r * r / fit.sigma2;
  }
  return ll;
}

std::string fit_report(const LMEFit& fit) {
  std::ostringstream os;
  os.precision(10);
  os << "model\t" << fit.spec.to_string() << "\n";
  os << "random_covariance\tdiagonal\n";
  os << "n\t" << fit.n_obs << "\nloglik\t" << fit.loglik << "\nconverged\t" << (fit.converged ? 1 : 0)
     << "\nsigma2\t" << fit.sigma2 << "\n";
  os << "removed";
  for (const auto& r : fit.removed) os << "\t" << r.label();
  os << "\n";
  os << "term\testimate\tse\tz\tp\n";
  for (std::size_t k = 0; k < fit.coef_names.size(); ++k) {
    const auto w = wald(fit, fit.coef_names[k]);
    os << fit.coef_names[k] << "\t" << w.estimate << "\t" << w.se << "\t" << (w.se > 0 ? w.estimate / w.se : 0.0)
       << "\t" << w.p << (fit.aliased[k] ? "\taliased" : "") << "\n";
  }
  os << "group\tterm\tvariance\n";
  for (const auto& g : fit.random) os << g.term.group << "\t" << g.term.term << "\t" << g.variance << "\n";
  return os.str();
}

}  // namespace tokgran
