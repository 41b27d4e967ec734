#include "tokgran/ssm.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "tokgran/common.hpp"

namespace tokgran {
namespace {

constexpr double kNormEps = 1e-6;

double softplus(double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); }
double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

struct Dims {
  int d, H, P, N, HP, R, z0, b0, c0, dt0;
  explicit Dims(const LMConfig& c)
      : d(c.d_model), H(c.n_heads), P(c.head_dim), N(c.d_state), HP(c.inner()), R(c.in_rows()),
        z0(HP), b0(2 * HP), c0(2 * HP + N), dt0(2 * HP + 2 * N) {}
};

// hat = h / rms(h) row-wise; returns 1 / rms per row.
Eigen::VectorXd rms_normalize(const RowMatrix& h, RowMatrix& hat) {
  const Eigen::Index T = h.rows();
  Eigen::VectorXd rinv(T);
  hat.resize(T, h.cols());
  for (Eigen::Index t = 0; t < T; ++t) {
    rinv(t) = 1.0 / std::sqrt(h.row(t).squaredNorm() / static_cast<double>(h.cols()) + kNormEps);
    hat.row(t) = h.row(t) * rinv(t);
  }
  return rinv;
}

// Backward of n = hat * diag(g). Adds to dg and returns dL/dh.
RowMatrix rms_backward(const RowMatrix& dn, const RowMatrix& hat, const Eigen::VectorXd& rinv,
                       const Eigen::VectorXd& g, Eigen::VectorXd& dg) {
  dg += (dn.array() * hat.array()).colwise().sum().transpose().matrix();
  RowMatrix dhat = dn.array().rowwise() * g.transpose().array();
  const double inv_d = 1.0 / static_cast<double>(hat.cols());
  RowMatrix dh(hat.rows(), hat.cols());
  for (Eigen::Index t = 0; t < hat.rows(); ++t) {
    const double m = dhat.row(t).dot(hat.row(t)) * inv_d;
    dh.row(t) = (dhat.row(t) - m * hat.row(t)) * rinv(t);
  }
  return dh;
}

struct LayerCache {
  RowMatrix hat;
  Eigen::VectorXd rinv;
  RowMatrix n;      // T x d
  RowMatrix u;      // T x R
  RowMatrix delta;  // T x H
  RowMatrix alpha;  // T x H
  std::vector<double> states;  // T x H x P x N
  RowMatrix y;      // T x HP, before gating
  RowMatrix gated;  // T x HP
};

struct Cache {
  std::vector<LayerCache> layers;
  RowMatrix hat_f;
  Eigen::VectorXd rinv_f;
  RowMatrix n_f;
};

void check_tokens(const LMConfig& c, const std::vector<TokenId>& tokens) {
  for (TokenId id : tokens) {
    if (id < 0 || id >= c.vocab_size) {
      throw ValidationError("token id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(c.vocab_size));
    }
  }
}

// Returns log-probabilities, T x V.
RowMatrix run_forward(const LMParameters& p, const std::vector<TokenId>& tokens, Cache* cache) {
  const Dims D(p.config);
  const auto T = static_cast<Eigen::Index>(tokens.size());
  RowMatrix h(T, D.d);
  for (Eigen::Index t = 0; t < T; ++t) h.row(t) = p.embedding.row(tokens[static_cast<std::size_t>(t)]);

  if (cache) cache->layers.resize(p.layers.size());
  LayerCache scratch;
  const std::size_t state_size = static_cast<std::size_t>(D.P) * static_cast<std::size_t>(D.N);
  std::vector<double> running(static_cast<std::size_t>(D.H) * state_size);

  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const LayerParams& L = p.layers[l];
    LayerCache& c = cache ? cache->layers[l] : scratch;
    c.rinv = rms_normalize(h, c.hat);
    c.n = c.hat.array().rowwise() * L.norm.transpose().array();
    c.u.noalias() = c.n * L.w_in.transpose();
    c.delta.resize(T, D.H);
    c.alpha.resize(T, D.H);
    c.y.resize(T, D.HP);
    if (cache) c.states.assign(static_cast<std::size_t>(T) * running.size(), 0.0);
    std::fill(running.begin(), running.end(), 0.0);

    for (Eigen::Index t = 0; t < T; ++t) {
      const auto B = c.u.row(t).segment(D.b0, D.N).transpose();
      const auto C = c.u.row(t).segment(D.c0, D.N).transpose();
      for (int hd = 0; hd < D.H; ++hd) {
        const double delta = softplus(c.u(t, D.dt0 + hd) + L.dt_bias(hd));
        const double alpha = std::exp(-delta * std::exp(L.a_log(hd)));
        c.delta(t, hd) = delta;
        c.alpha(t, hd) = alpha;
        Eigen::Map<RowMatrix> S(running.data() + static_cast<std::size_t>(hd) * state_size, D.P, D.N);
        const auto x = c.u.row(t).segment(hd * D.P, D.P).transpose();
        S *= alpha;
        S.noalias() += x * B.transpose();
        c.y.row(t).segment(hd * D.P, D.P).noalias() = (S * C).transpose();
        c.y.row(t).segment(hd * D.P, D.P) += L.d_skip(hd) * x.transpose();
      }
      if (cache) {
        std::copy(running.begin(), running.end(),
                  c.states.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(t) * running.size()));
      }
    }
    const auto z = c.u.middleCols(D.z0, D.HP).array();
    c.gated = c.y.array() * (z * (1.0 / (1.0 + (-z).exp())));
    h.noalias() += c.gated * L.w_out.transpose();
  }

  RowMatrix hat_f;
  Eigen::VectorXd rinv_f = rms_normalize(h, hat_f);
  RowMatrix n_f = hat_f.array().rowwise() * p.final_norm.transpose().array();
  RowMatrix logp = n_f * p.embedding.transpose();
  for (Eigen::Index t = 0; t < T; ++t) {
    const double m = logp.row(t).maxCoeff();
    if (!std::isfinite(m)) {
      throw std::runtime_error("non-finite activation at position " + std::to_string(t) + " (diverged model?)");
    }
    const double lse = m + std::log((logp.row(t).array() - m).exp().sum());
    logp.row(t).array() -= lse;
  }
  if (cache) {
    cache->hat_f = std::move(hat_f);
    cache->rinv_f = std::move(rinv_f);
    cache->n_f = std::move(n_f);
  }
  return logp;
}

// Accumulates the gradient of sum_t -logp[t, target[t]] into g; returns the sum.
double sequence_loss_grad(const LMParameters& p, const std::vector<TokenId>& seq, LMParameters& g) {
  const Dims D(p.config);
  std::vector<TokenId> in(seq.begin(), seq.end() - 1);
  const auto T = static_cast<Eigen::Index>(in.size());
  Cache cache;
  RowMatrix logp = run_forward(p, in, &cache);

  double loss = 0.0;
  RowMatrix dlogits = logp.array().exp();
  for (Eigen::Index t = 0; t < T; ++t) {
    const TokenId target = seq[static_cast<std::size_t>(t) + 1];
    loss -= logp(t, target);
    dlogits(t, target) -= 1.0;
  }

  g.embedding.noalias() += dlogits.transpose() * cache.n_f;
  RowMatrix dn = dlogits * p.embedding;
  RowMatrix dh = rms_backward(dn, cache.hat_f, cache.rinv_f, p.final_norm, g.final_norm);

  const std::size_t state_size = static_cast<std::size_t>(D.P) * static_cast<std::size_t>(D.N);
  RowMatrix grad_state(D.P, D.N);
  for (std::size_t li = p.layers.size(); li-- > 0;) {
    const LayerParams& L = p.layers[li];
    LayerParams& G = g.layers[li];
    const LayerCache& c = cache.layers[li];

    G.w_out.noalias() += dh.transpose() * c.gated;
    RowMatrix dgated = dh * L.w_out;
    const auto z = c.u.middleCols(D.z0, D.HP).array();
    const Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> sig = 1.0 / (1.0 + (-z).exp());
    RowMatrix dy = dgated.array() * z * sig;
    RowMatrix du = RowMatrix::Zero(T, D.R);
    du.middleCols(D.z0, D.HP) = dgated.array() * c.y.array() * sig * (1.0 + z * (1.0 - sig));

    for (int hd = 0; hd < D.H; ++hd) {
      const double a = std::exp(L.a_log(hd));
      grad_state.setZero();
      for (Eigen::Index t = T; t-- > 0;) {
        if (t + 1 < T) grad_state *= c.alpha(t + 1, hd);
        const auto dyh = dy.row(t).segment(hd * D.P, D.P).transpose();
        const auto B = c.u.row(t).segment(D.b0, D.N).transpose();
        const auto C = c.u.row(t).segment(D.c0, D.N).transpose();
        const auto x = c.u.row(t).segment(hd * D.P, D.P).transpose();
        const std::size_t base = static_cast<std::size_t>(t) * static_cast<std::size_t>(D.H) * state_size;
        Eigen::Map<const RowMatrix> S(c.states.data() + base + static_cast<std::size_t>(hd) * state_size, D.P, D.N);

        grad_state.noalias() += dyh * C.transpose();
        du.row(t).segment(D.c0, D.N).noalias() += (S.transpose() * dyh).transpose();
        G.d_skip(hd) += dyh.dot(x);
        du.row(t).segment(hd * D.P, D.P).noalias() += (L.d_skip(hd) * dyh + grad_state * B).transpose();
        du.row(t).segment(D.b0, D.N).noalias() += (grad_state.transpose() * x).transpose();

        double dalpha = 0.0;
        if (t > 0) {
          Eigen::Map<const RowMatrix> prev(c.states.data() + base - static_cast<std::size_t>(D.H) * state_size +
                                               static_cast<std::size_t>(hd) * state_size,
                                           D.P, D.N);
          dalpha = (grad_state.array() * prev.array()).sum();
        }
        const double alpha = c.alpha(t, hd);
        const double delta = c.delta(t, hd);
        const double ddelta = -dalpha * alpha * a;
        G.a_log(hd) += -dalpha * alpha * delta * a;
        const double dv = ddelta * sigmoid(c.u(t, D.dt0 + hd) + L.dt_bias(hd));
        G.dt_bias(hd) += dv;
        du(t, D.dt0 + hd) += dv;
      }
    }

    G.w_in.noalias() += du.transpose() * c.n;
    RowMatrix dnl = du * L.w_in;
    dh += rms_backward(dnl, c.hat, c.rinv, L.norm, G.norm);
  }
  for (Eigen::Index t = 0; t < T; ++t) g.embedding.row(in[static_cast<std::size_t>(t)]) += dh.row(t);
  return loss;
}

void add_into(LMParameters& acc, const LMParameters& g) {
  auto a = acc.tensors();
  auto b = g.tensors();
  for (std::size_t i = 0; i < a.size(); ++i) {
    Eigen::Map<Eigen::VectorXd>(a[i].data, a[i].size) += Eigen::Map<const Eigen::VectorXd>(b[i].data, b[i].size);
  }
}

void scale(LMParameters& p, double s) {
  for (auto& v : p.tensors()) Eigen::Map<Eigen::VectorXd>(v.data, v.size) *= s;
}

}  // namespace

void LMConfig::validate() const {
  if (n_layers < 1 || n_heads < 1 || d_model < 1 || head_dim < 1) {
    throw ValidationError("LM config needs positive n_layers, n_heads, d_model and head_dim");
  }
  if (d_state != 2 * d_model) throw ValidationError("d_state must equal 2 * d_model");
  if (vocab_size < 2) throw ValidationError("vocab_size must be at least 2");
  if (!(decay_min > 0.0 && decay_min <= decay_max && decay_max < 1.0)) {
    throw ValidationError("decay range must satisfy 0 < min <= max < 1");
  }
}

LMConfig LMConfig::small(int vocab_size) { return {6, 8, 256, 512, 64, vocab_size}; }
LMConfig LMConfig::medium(int vocab_size) { return {12, 16, 512, 1024, 64, vocab_size}; }
LMConfig LMConfig::large(int vocab_size) { return {24, 24, 768, 1536, 64, vocab_size}; }
LMConfig LMConfig::desk(int vocab_size) { return {2, 2, 64, 128, 64, vocab_size}; }
LMConfig LMConfig::tiny(int vocab_size) { return {1, 1, 32, 64, 32, vocab_size}; }

LMConfig LMConfig::named(std::string_view size, int vocab_size) {
  if (size == "tiny") return tiny(vocab_size);
  if (size == "desk") return desk(vocab_size);
  if (size == "small") return small(vocab_size);
  if (size == "medium") return medium(vocab_size);
  if (size == "large") return large(vocab_size);
  throw ValidationError("unknown model size '" + std::string(size) + "'");
}

std::string LMConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "n_layers=" << n_layers << "\nn_heads=" << n_heads << "\nd_model=" << d_model << "\nd_state=" << d_state
     << "\nhead_dim=" << head_dim << "\nvocab_size=" << vocab_size << "\nrng_seed=" << rng_seed
     << "\nprecision=" << (precision == Precision::f32 ? "f32" : "f64") << "\ndecay_min=" << decay_min
     << "\ndecay_max=" << decay_max << "\n";
  return os.str();
}

LMConfig LMConfig::from_text(const std::string& text) {
  LMConfig c;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError("bad config line: " + line);
    const std::string k = line.substr(0, eq);
    const std::string v = line.substr(eq + 1);
    try {
      if (k == "n_layers") c.n_layers = std::stoi(v);
      else if (k == "n_heads") c.n_heads = std::stoi(v);
      else if (k == "d_model") c.d_model = std::stoi(v);
      else if (k == "d_state") c.d_state = std::stoi(v);
      else if (k == "head_dim") c.head_dim = std::stoi(v);
      else if (k == "vocab_size") c.vocab_size = std::stoi(v);
      else if (k == "rng_seed") c.rng_seed = std::stoull(v);
      else if (k == "precision") {
        if (v != "f32" && v != "f64") throw ValidationError("precision must be f32 or f64");
        c.precision = v == "f32" ? Precision::f32 : Precision::f64;
      } else if (k == "decay_min") c.decay_min = std::stod(v);
      else if (k == "decay_max") c.decay_max = std::stod(v);
      else throw ValidationError("unknown config key: " + k);
    } catch (const std::logic_error& e) {
      if (dynamic_cast<const ValidationError*>(&e)) throw;
      throw ValidationError("bad value for " + k + ": " + v);
    }
  }
  c.validate();
  return c;
}

LMParameters LMParameters::zeros(const LMConfig& config) {
  config.validate();
  const Dims D(config);
  LMParameters p;
  p.config = config;
  p.embedding = Eigen::MatrixXd::Zero(config.vocab_size, D.d);
  p.layers.resize(static_cast<std::size_t>(config.n_layers));
  for (auto& L : p.layers) {
    L.norm = Eigen::VectorXd::Zero(D.d);
    L.w_in = Eigen::MatrixXd::Zero(D.R, D.d);
    L.dt_bias = Eigen::VectorXd::Zero(D.H);
    L.a_log = Eigen::VectorXd::Zero(D.H);
    L.d_skip = Eigen::VectorXd::Zero(D.H);
    L.w_out = Eigen::MatrixXd::Zero(D.d, D.HP);
  }
  p.final_norm = Eigen::VectorXd::Zero(D.d);
  return p;
}

std::vector<TensorView> LMParameters::tensors() {
  std::vector<TensorView> out;
  auto mat = [&](std::string name, Eigen::MatrixXd& m, bool decay) {
    out.push_back({std::move(name), m.data(), m.size(), m.rows(), m.cols(), decay});
  };
  auto vec = [&](std::string name, Eigen::VectorXd& v) {
    out.push_back({std::move(name), v.data(), v.size(), v.size(), 1, false});
  };
  mat("embedding", embedding, true);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string pre = "layers." + std::to_string(l) + ".";
    vec(pre + "norm", layers[l].norm);
    mat(pre + "w_in", layers[l].w_in, true);
    vec(pre + "dt_bias", layers[l].dt_bias);
    vec(pre + "a_log", layers[l].a_log);
    vec(pre + "d_skip", layers[l].d_skip);
    mat(pre + "w_out", layers[l].w_out, true);
  }
  vec("final_norm", final_norm);
  return out;
}

std::size_t LMParameters::total_size() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += static_cast<std::size_t>(t.size);
  return n;
}

bool LMParameters::all_finite() const {
  for (const auto& t : tensors()) {
    if (!Eigen::Map<const Eigen::VectorXd>(t.data, t.size).allFinite()) return false;
  }
  return true;
}

LMParameters init_params(const LMConfig& config, std::uint64_t seed) {
  LMParameters p = LMParameters::zeros(config);
  std::mt19937_64 rng(derive_seed(seed, "ssm-init"));
  std::normal_distribution<double> normal(0.0, 0.02);
  std::uniform_real_distribution<double> decay(config.decay_min, config.decay_max);
  auto fill = [&](Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = normal(rng);
  };
  fill(p.embedding);
  for (auto& L : p.layers) {
    L.norm.setOnes();
    fill(L.w_in);
    fill(L.w_out);
    L.d_skip.setOnes();
    // With zero input to the step-size projection, delta = softplus(0) = ln 2,
    // so decay = exp(-ln2 * exp(a_log)).
    for (Eigen::Index h = 0; h < L.a_log.size(); ++h) {
      L.a_log(h) = std::log(-std::log(decay(rng)) / std::log(2.0));
    }
  }
  p.final_norm.setOnes();
  return p;
}

std::size_t count_params(const LMConfig& config) {
  LMParameters p = LMParameters::zeros(config);
  return p.total_size() - static_cast<std::size_t>(p.embedding.size());
}

RowMatrix forward(const LMParameters& params, const std::vector<TokenId>& tokens) {
  check_tokens(params.config, tokens);
  return run_forward(params, tokens, nullptr);
}

LossAndGrad loss_and_grad(const LMParameters& params, const std::vector<std::vector<TokenId>>& batch,
                          std::size_t threads) {
  if (batch.empty()) throw ValidationError("empty batch");
  for (const auto& seq : batch) {
    if (seq.size() < 2) throw ValidationError("each sequence needs a start token and at least one target");
    if (seq.front() != SubwordVocab::kBos) throw ValidationError("sequences must begin with the start token");
    check_tokens(params.config, seq);
  }
  struct Part {
    double loss = 0.0;
    LMParameters grad;
  };
  auto parts = parallel_map(batch.size(), threads, [&](std::size_t i) {
    Part part{0.0, LMParameters::zeros(params.config)};
    part.loss = sequence_loss_grad(params, batch[i], part.grad);
    return part;
  });
  LossAndGrad out{0.0, 0, LMParameters::zeros(params.config)};
  for (std::size_t i = 0; i < parts.size(); ++i) {
    out.loss += parts[i].loss;
    out.n_predicted += batch[i].size() - 1;
    add_into(out.grad, parts[i].grad);
  }
  out.loss /= static_cast<double>(out.n_predicted);
  scale(out.grad, 1.0 / static_cast<double>(out.n_predicted));
  return out;
}

double mean_loss(const LMParameters& params, const std::vector<std::vector<TokenId>>& batch, std::size_t threads) {
  if (batch.empty()) throw ValidationError("empty batch");
  auto parts = parallel_map(batch.size(), threads, [&](std::size_t i) {
    const auto& seq = batch[i];
    if (seq.size() < 2) throw ValidationError("each sequence needs a start token and at least one target");
    std::vector<TokenId> in(seq.begin(), seq.end() - 1);
    check_tokens(params.config, seq);
    const RowMatrix logp = run_forward(params, in, nullptr);
    double s = 0.0;
    for (std::size_t t = 0; t < in.size(); ++t) s -= logp(static_cast<Eigen::Index>(t), seq[t + 1]);
    return s;
  });
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    total += parts[i];
    n += batch[i].size() - 1;
  }
  return total / static_cast<double>(n);
}

}  // namespace tokgran
