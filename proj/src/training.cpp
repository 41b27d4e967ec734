#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "tokgran/common.hpp"
#include "tokgran/ssm.hpp"

namespace tokgran {

void TrainingSchedule::validate() const {
  if (total_steps == 0) throw ValidationError("total_steps must be positive");
  if (warmup_steps >= total_steps) throw ValidationError("warmup_steps must be below total_steps");
  if (!(min_lr >= 0.0 && min_lr <= max_lr)) throw ValidationError("need 0 <= min_lr <= max_lr");
  if (clip_norm <= 0.0) throw ValidationError("clip_norm must be positive");
  if (batch_size == 0) throw ValidationError("batch_size must be positive");
  if (seq_len < 2) throw ValidationError("seq_len must be at least 2");
}

double lr_at(const TrainingSchedule& s, std::size_t step) {
  if (step > s.total_steps) {
    throw ValidationError("step " + std::to_string(step) + " beyond total_steps " + std::to_string(s.total_steps));
  }
  if (step <= s.warmup_steps) {
    if (s.warmup_steps == 0) return s.max_lr;
    return s.max_lr * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
  }
  const double progress =
      static_cast<double>(step - s.warmup_steps) / static_cast<double>(s.total_steps - s.warmup_steps);
  return s.min_lr + 0.5 * (s.max_lr - s.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

double clip_global_norm(LMParameters& grad, double max_norm) {
  double sq = 0.0;
  for (const auto& t : grad.tensors()) sq += Eigen::Map<const Eigen::VectorXd>(t.data, t.size).squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& t : grad.tensors()) Eigen::Map<Eigen::VectorXd>(t.data, t.size) *= s;
  }
  return norm;
}

std::vector<std::vector<TokenId>> make_examples(const std::vector<std::vector<TokenId>>& streams,
                                                std::size_t seq_len) {
  if (seq_len < 2) throw ValidationError("seq_len must be at least 2");
  std::vector<std::vector<TokenId>> out;
  for (const auto& s : streams) {
    std::size_t i = (!s.empty() && s.front() == SubwordVocab::kBos) ? 1 : 0;
    while (i < s.size()) {
      const std::size_t n = std::min(seq_len - 1, s.size() - i);
      std::vector<TokenId> ex;
      ex.reserve(n + 1);
      ex.push_back(SubwordVocab::kBos);
      ex.insert(ex.end(), s.begin() + static_cast<std::ptrdiff_t>(i), s.begin() + static_cast<std::ptrdiff_t>(i + n));
      out.push_back(std::move(ex));
      i += n;
    }
  }
  return out;
}

TrainResult train(LMParameters params, const std::vector<std::vector<TokenId>>& streams,
                  const TrainingSchedule& schedule, const TrainOptions& options) {
  schedule.validate();
  auto examples = make_examples(streams, schedule.seq_len);
  if (examples.empty()) throw ValidationError("no training tokens");
  std::mt19937_64 rng(derive_seed(options.seed, "ssm-data-order"));
  std::shuffle(examples.begin(), examples.end(), rng);

  LMParameters m = LMParameters::zeros(params.config);
  LMParameters v = LMParameters::zeros(params.config);
  auto pv = params.tensors();
  auto mv = m.tensors();
  auto vv = v.tensors();

  TrainResult result;
  std::size_t cursor = 0;
  for (std::size_t step = 1; step <= schedule.total_steps; ++step) {
    std::vector<std::vector<TokenId>> batch;
    for (std::size_t b = 0; b < schedule.batch_size; ++b) {
      batch.push_back(examples[cursor]);
      cursor = (cursor + 1) % examples.size();
    }
    LossAndGrad lg = loss_and_grad(params, batch, options.threads);
    if (!std::isfinite(lg.loss)) {
      throw std::runtime_error("non-finite loss at step " + std::to_string(step) + "; lower the learning rate");
    }
    clip_global_norm(lg.grad, schedule.clip_norm);
    const double lr = lr_at(schedule, step);
    const double bc1 = 1.0 - std::pow(schedule.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(schedule.beta2, static_cast<double>(step));
    auto gv = lg.grad.tensors();
    for (std::size_t i = 0; i < pv.size(); ++i) {
      Eigen::Map<Eigen::ArrayXd> p(pv[i].data, pv[i].size);
      Eigen::Map<Eigen::ArrayXd> mm(mv[i].data, mv[i].size);
      Eigen::Map<Eigen::ArrayXd> vs(vv[i].data, vv[i].size);
      Eigen::Map<const Eigen::ArrayXd> g(gv[i].data, gv[i].size);
      mm = schedule.beta1 * mm + (1.0 - schedule.beta1) * g;
      vs = schedule.beta2 * vs + (1.0 - schedule.beta2) * g.square();
      if (pv[i].weight_decay) p *= 1.0 - lr * schedule.weight_decay;
      p -= lr * (mm / bc1) / ((vs / bc2).sqrt() + schedule.eps);
    }
    LossRecord rec{step, lr, lg.loss};
    result.trace.push_back(rec);
    if (options.on_step) options.on_step(rec);
    if (options.checkpoint_every && step % options.checkpoint_every == 0) {
      std::filesystem::create_directories(options.checkpoint_dir);
      save_checkpoint(options.checkpoint_dir / ("step_" + std::to_string(step) + ".ckpt"), params);
    }
  }
  result.params = std::move(params);
  return result;
}

void write_loss_trace(const std::filesystem::path& path, const std::vector<LossRecord>& trace) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.precision(17);
  os << "step,lr,loss\n";
  for (const auto& r : trace) os << r.step << ',' << r.lr << ',' << r.loss << '\n';
}

// Checkpoint layout (little-endian):
//   "TGSSMCK1" | u32 version | u32 len + config text | u32 tensor count |
//   per tensor: u32 len + name | u32 rows | u32 cols | u8 bytes-per-value | row-major values
namespace {

constexpr char kMagic[8] = {'T', 'G', 'S', 'S', 'M', 'C', 'K', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::ostream& os, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le(std::istream& is, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    const int c = is.get();
    if (c == EOF) throw ValidationError("truncated checkpoint");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

std::string get_string(std::istream& is) {
  const auto n = static_cast<std::size_t>(get_le(is, 4));
  if (n > (1u << 20)) throw ValidationError("corrupt checkpoint string length");
  std::string s(n, '\0');
  if (!is.read(s.data(), static_cast<std::streamsize>(n))) throw ValidationError("truncated checkpoint");
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const LMParameters& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  const bool f32 = params.config.precision == Precision::f32;
  os.write(kMagic, sizeof kMagic);
  put_u32(os, kCheckpointVersion);
  const std::string cfg = params.config.to_text();
  put_u32(os, static_cast<std::uint32_t>(cfg.size()));
  os << cfg;
  const auto tensors = params.tensors();
  put_u32(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put_u32(os, static_cast<std::uint32_t>(t.name.size()));
    os << t.name;
    put_u32(os, static_cast<std::uint32_t>(t.rows));
    put_u32(os, static_cast<std::uint32_t>(t.cols));
    os.put(static_cast<char>(f32 ? 4 : 8));
    // Storage is column-major; emit row-major.
    for (Eigen::Index r = 0; r < t.rows; ++r) {
      for (Eigen::Index c = 0; c < t.cols; ++c) {
        const double x = t.data[c * t.rows + r];
        if (f32) put_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
        else put_u64(os, std::bit_cast<std::uint64_t>(x));
      }
    }
  }
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

LMParameters load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw ValidationError(path.string() + " is not a model checkpoint");
  }
  const auto version = get_le(is, 4);
  if (version != kCheckpointVersion) throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  LMParameters p = LMParameters::zeros(LMConfig::from_text(get_string(is)));
  auto tensors = p.tensors();
  if (get_le(is, 4) != tensors.size()) throw ValidationError("checkpoint tensor count mismatch");
  for (auto& t : tensors) {
    const std::string name = get_string(is);
    const auto rows = static_cast<Eigen::Index>(get_le(is, 4));
    const auto cols = static_cast<Eigen::Index>(get_le(is, 4));
    const int width = static_cast<int>(get_le(is, 1));
    if (name != t.name || rows != t.rows || cols != t.cols || (width != 4 && width != 8)) {
      throw ValidationError("checkpoint tensor " + name + " does not match the config");
    }
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        const std::uint64_t bits = get_le(is, width);
        t.data[c * rows + r] = width == 4 ? static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(bits)))
                                          : std::bit_cast<double>(bits);
      }
    }
  }
  if (!p.all_finite()) throw ValidationError("checkpoint contains non-finite values");
  return p;
}

}  // namespace tokgran
