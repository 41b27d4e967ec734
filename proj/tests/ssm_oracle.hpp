#pragma once
// Reference implementations for the SSM: a scalar one-timestep-at-a-time
// forward pass with plain loops, and a central finite-difference gradient.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "tokgran/ssm.hpp"

namespace tokgran::testing {

inline std::vector<std::vector<double>> naive_forward(const LMParameters& p, const std::vector<TokenId>& tokens) {
  const auto& c = p.config;
  const int d = c.d_model, H = c.n_heads, P = c.head_dim, N = c.d_state, HP = H * P;
  const std::size_t T = tokens.size();
  std::vector<std::vector<double>> h(T, std::vector<double>(static_cast<std::size_t>(d)));
  for (std::size_t t = 0; t < T; ++t)
    for (int i = 0; i < d; ++i) h[t][static_cast<std::size_t>(i)] = p.embedding(tokens[t], i);

  auto rmsnorm = [&](const std::vector<double>& v, const Eigen::VectorXd& g) {
    double ss = 0.0;
    for (double x : v) ss += x * x;
    const double r = std::sqrt(ss / static_cast<double>(v.size()) + 1e-6);
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / r * g(static_cast<Eigen::Index>(i));
    return out;
  };

  for (const auto& L : p.layers) {
    std::vector<double> S(static_cast<std::size_t>(H * P * N), 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      const auto n = rmsnorm(h[t], L.norm);
      std::vector<double> u(static_cast<std::size_t>(L.w_in.rows()), 0.0);
      for (Eigen::Index r = 0; r < L.w_in.rows(); ++r)
        for (int i = 0; i < d; ++i) u[static_cast<std::size_t>(r)] += L.w_in(r, i) * n[static_cast<std::size_t>(i)];
      auto at = [&](int k) { return u[static_cast<std::size_t>(k)]; };
      std::vector<double> y(static_cast<std::size_t>(HP));
      for (int hd = 0; hd < H; ++hd) {
        const double v = at(2 * HP + 2 * N + hd) + L.dt_bias(hd);
        const double delta = std::log(1.0 + std::exp(v));
        const double alpha = std::exp(-delta * std::exp(L.a_log(hd)));
        for (int i = 0; i < P; ++i) {
          double acc = 0.0;
          for (int j = 0; j < N; ++j) {
            double& s = S[static_cast<std::size_t>((hd * P + i) * N + j)];
            s = alpha * s + at(hd * P + i) * at(2 * HP + j);
            acc += s * at(2 * HP + N + j);
          }
          y[static_cast<std::size_t>(hd * P + i)] = acc + L.d_skip(hd) * at(hd * P + i);
        }
      }
      for (int k = 0; k < HP; ++k) {
        const double z = at(HP + k);
        y[static_cast<std::size_t>(k)] *= z / (1.0 + std::exp(-z));
      }
      for (int i = 0; i < d; ++i) {
        double o = 0.0;
        for (int k = 0; k < HP; ++k) o += L.w_out(i, k) * y[static_cast<std::size_t>(k)];
        h[t][static_cast<std::size_t>(i)] += o;
      }
    }
  }
  std::vector<std::vector<double>> out(T);
  for (std::size_t t = 0; t < T; ++t) {
    const auto n = rmsnorm(h[t], p.final_norm);
    std::vector<double> logits(static_cast<std::size_t>(c.vocab_size));
    for (int v = 0; v < c.vocab_size; ++v) {
      double s = 0.0;
      for (int i = 0; i < d; ++i) s += p.embedding(v, i) * n[static_cast<std::size_t>(i)];
      logits[static_cast<std::size_t>(v)] = s;
    }
    double z = 0.0;
    for (double l : logits) z += std::exp(l);
    for (double& l : logits) l -= std::log(z);
    out[t] = logits;
  }
  return out;
}

/// Tiny config (under 5k parameters) with every parameter perturbed away from
/// its structured initial value so that no gradient is trivially zero.
inline LMParameters random_small_params(std::uint64_t seed, int layers = 2, int vocab = 8) {
  LMConfig c;
  c.n_layers = layers;
  c.n_heads = 2;
  c.d_model = 4;
  c.d_state = 8;
  c.head_dim = 3;
  c.vocab_size = vocab;
  LMParameters p = LMParameters::zeros(c);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.5);
  for (auto& t : p.tensors())
    for (Eigen::Index i = 0; i < t.size; ++i) t.data[i] = normal(rng);
  for (auto& L : p.layers) {
    L.norm.array() += 1.0;
    L.d_skip.array() += 1.0;
    L.a_log.array() -= 1.0;
  }
  p.final_norm.array() += 1.0;
  return p;
}

/// Largest relative error per tensor name between analytic and central
/// finite-difference gradients of mean_loss.
inline std::map<std::string, double> gradient_check(const LMParameters& params,
                                                    const std::vector<std::vector<TokenId>>& batch,
                                                    double step = 1e-5, double floor = 1e-7) {
  const LossAndGrad lg = loss_and_grad(params, batch);
  const auto analytic = lg.grad.tensors();
  LMParameters probe = params;
  auto views = probe.tensors();
  std::map<std::string, double> worst;
  for (std::size_t k = 0; k < views.size(); ++k) {
    double& w = worst[views[k].name];
    for (Eigen::Index i = 0; i < views[k].size; ++i) {
      const double saved = views[k].data[i];
      views[k].data[i] = saved + step;
      const double up = mean_loss(probe, batch);
      views[k].data[i] = saved - step;
      const double down = mean_loss(probe, batch);
      views[k].data[i] = saved;
      const double fd = (up - down) / (2.0 * step);
      const double a = analytic[k].data[i];
      w = std::max(w, std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), floor}));
    }
  }
  return worst;
}

}  // namespace tokgran::testing
