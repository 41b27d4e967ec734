#pragma once
// Small selective state-space language model with multi-input SSD heads:
// per-head value streams, B/C projections shared across heads, scalar
// input-dependent decay per head, gated residual blocks with RMS pre-norm and
// an output projection tied to the token embedding.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "tokgran/tokenizer.hpp"

namespace tokgran {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Precision { f32, f64 };

struct LMConfig {
  int n_layers = 2;
  int n_heads = 2;
  int d_model = 64;
  int d_state = 128;  // must equal 2 * d_model
  int head_dim = 64;
  int vocab_size = 0;
  std::uint64_t rng_seed = 0;
  // Storage precision for checkpoints; compute is always double.
  Precision precision = Precision::f32;
  double decay_min = 0.9;
  double decay_max = 0.999;

  int inner() const { return n_heads * head_dim; }
  /// Rows of the input projection: [x | z | B | C | dt].
  int in_rows() const { return 2 * inner() + 2 * d_state + n_heads; }
  void validate() const;

  /// Table-1 shaped configs with d_state = 2 * d_model and head_dim 64.
  static LMConfig small(int vocab_size);
  static LMConfig medium(int vocab_size);
  static LMConfig large(int vocab_size);
  static LMConfig desk(int vocab_size);
  /// One layer, one 32-wide head; for fast grid runs.
  static LMConfig tiny(int vocab_size);
  /// tiny, desk, small, medium or large.
  static LMConfig named(std::string_view size, int vocab_size);

  std::string to_text() const;
  static LMConfig from_text(const std::string& text);
};

struct LayerParams {
  Eigen::VectorXd norm;   // d_model
  Eigen::MatrixXd w_in;   // in_rows x d_model
  Eigen::VectorXd dt_bias;
  Eigen::VectorXd a_log;
  Eigen::VectorXd d_skip;
  Eigen::MatrixXd w_out;  // d_model x inner
};

struct TensorView {
  std::string name;
  double* data = nullptr;
  Eigen::Index size = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  bool weight_decay = false;
};

struct LMParameters {
  LMConfig config;
  Eigen::MatrixXd embedding;  // vocab x d_model, also the output projection
  std::vector<LayerParams> layers;
  Eigen::VectorXd final_norm;

  /// Zero-filled tensors of the right shapes.
  static LMParameters zeros(const LMConfig& config);

  /// Every tensor in a fixed order (the checkpoint order).
  std::vector<TensorView> tensors();
  std::vector<TensorView> tensors() const { return const_cast<LMParameters*>(this)->tensors(); }

  std::size_t total_size() const;
  bool all_finite() const;
};

LMParameters init_params(const LMConfig& config, std::uint64_t seed);

/// Parameters outside the embedding matrix.
std::size_t count_params(const LMConfig& config);

/// Row t holds log P(. | tokens[0..t]) in natural log.
RowMatrix forward(const LMParameters& params, const std::vector<TokenId>& tokens);

struct LossAndGrad {
  double loss = 0.0;          // mean negative log-likelihood per predicted token
  std::size_t n_predicted = 0;
  LMParameters grad;
};

/// Mean next-token cross-entropy over every non-initial position of the batch
/// and its exact gradient.
LossAndGrad loss_and_grad(const LMParameters& params, const std::vector<std::vector<TokenId>>& batch,
                          std::size_t threads = 1);

double mean_loss(const LMParameters& params, const std::vector<std::vector<TokenId>>& batch, std::size_t threads = 1);

struct TrainingSchedule {
  double max_lr = 1e-3;
  double min_lr = 1e-5;
  std::size_t warmup_steps = 503;
  std::size_t total_steps = 10063;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  std::size_t batch_size = 8;
  std::size_t seq_len = 128;  // tokens per example, including the start token

  void validate() const;
};

double lr_at(const TrainingSchedule& schedule, std::size_t step);

/// Rescales to global L2 norm `max_norm` when above it. Returns the norm
/// before clipping.
double clip_global_norm(LMParameters& grad, double max_norm);

struct LossRecord {
  std::size_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct TrainOptions {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::size_t checkpoint_every = 0;  // 0 disables
  std::filesystem::path checkpoint_dir;
  std::function<void(const LossRecord&)> on_step;
};

struct TrainResult {
  LMParameters params;
  std::vector<LossRecord> trace;
};

/// Cuts token streams into examples of at most seq_len tokens, each led by
/// the start token.
std::vector<std::vector<TokenId>> make_examples(const std::vector<std::vector<TokenId>>& streams, std::size_t seq_len);

/// AdamW with decoupled weight decay and global-norm clipping; examples are
/// shuffled once with the seed and visited in that order, wrapping around.
TrainResult train(LMParameters params, const std::vector<std::vector<TokenId>>& streams,
                  const TrainingSchedule& schedule, const TrainOptions& options = {});

void write_loss_trace(const std::filesystem::path& path, const std::vector<LossRecord>& trace);

void save_checkpoint(const std::filesystem::path& path, const LMParameters& params);
LMParameters load_checkpoint(const std::filesystem::path& path);

}  // namespace tokgran
