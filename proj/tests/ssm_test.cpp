#include "tokgran/ssm.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>

#include "ssm_oracle.hpp"
#include "tokgran/common.hpp"

namespace tokgran {
namespace {

std::vector<TokenId> random_tokens(std::mt19937_64& rng, int vocab, std::size_t n, bool bos = true) {
  std::vector<TokenId> out;
  if (bos) out.push_back(SubwordVocab::kBos);
  std::uniform_int_distribution<TokenId> pick(0, vocab - 1);
  while (out.size() < n) out.push_back(pick(rng));
  return out;
}

LMConfig tiny_config(int vocab) {
  LMConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_model = 8;
  c.d_state = 16;
  c.head_dim = 4;
  c.vocab_size = vocab;
  return c;
}

TEST(LMConfig, TableShapesConstruct) {
  EXPECT_NO_THROW(init_params(LMConfig::small(256), 1));
  const auto s = LMConfig::small(1000);
  EXPECT_EQ(s.inner(), 512);
  EXPECT_EQ(s.d_state, 512);
  // Our block (no short convolution): 6 * (256 + 2056*256 + 3*8 + 256*512) + 256.
  EXPECT_EQ(count_params(s), 3946384u);
  EXPECT_EQ(count_params(LMConfig::small(1000)), count_params(LMConfig::small(48000)));
}

TEST(LMConfig, RejectsBadShapes) {
  auto c = tiny_config(10);
  c.d_state = 10;
  EXPECT_THROW(c.validate(), ValidationError);
  c = tiny_config(1);
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(LMConfig, TextRoundTrip) {
  auto c = tiny_config(37);
  c.precision = Precision::f64;
  c.decay_min = 0.5;
  const auto back = LMConfig::from_text(c.to_text());
  EXPECT_EQ(back.to_text(), c.to_text());
  EXPECT_THROW(LMConfig::from_text("bogus=1\n"), ValidationError);
}

TEST(InitParams, DeterministicAndStructured) {
  const auto c = tiny_config(20);
  const auto a = init_params(c, 42);
  const auto b = init_params(c, 42);
  const auto other = init_params(c, 43);
  auto va = a.tensors(), vb = b.tensors(), vo = other.tensors();
  bool differs = false;
  for (std::size_t i = 0; i < va.size(); ++i) {
    EXPECT_EQ(std::memcmp(va[i].data, vb[i].data, sizeof(double) * static_cast<std::size_t>(va[i].size)), 0);
    differs |= std::memcmp(va[i].data, vo[i].data, sizeof(double) * static_cast<std::size_t>(va[i].size)) != 0;
  }
  EXPECT_TRUE(differs);
  for (const auto& L : a.layers) {
    EXPECT_TRUE(L.norm.isOnes());
    EXPECT_TRUE(L.d_skip.isOnes());
    for (Eigen::Index h = 0; h < L.a_log.size(); ++h) {
      const double decay = std::exp(-std::log(2.0) * std::exp(L.a_log(h)));
      EXPECT_GE(decay, 0.9 - 1e-12);
      EXPECT_LE(decay, 0.999 + 1e-12);
    }
  }
}

TEST(Forward, MatchesScalarRecurrence) {
  std::mt19937_64 rng(1);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto p = testing::random_small_params(seed, 2, 11);
    const auto tokens = random_tokens(rng, 11, 17);
    const auto fast = forward(p, tokens);
    const auto slow = testing::naive_forward(p, tokens);
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      for (int v = 0; v < 11; ++v) {
        const double a = fast(static_cast<Eigen::Index>(t), v);
        const double b = slow[t][static_cast<std::size_t>(v)];
        EXPECT_LE(std::abs(a - b), 1e-6 * std::max(1.0, std::abs(b)));
      }
    }
  }
}

TEST(Forward, RowsAreDistributions) {
  const auto p = init_params(tiny_config(30), 3);
  std::mt19937_64 rng(2);
  const auto lp = forward(p, random_tokens(rng, 30, 12));
  for (Eigen::Index t = 0; t < lp.rows(); ++t) EXPECT_NEAR(lp.row(t).array().exp().sum(), 1.0, 1e-12);
}

TEST(Forward, Causal) {
  const auto p = testing::random_small_params(5, 2, 9);
  std::mt19937_64 rng(4);
  const auto tokens = random_tokens(rng, 9, 15);
  const auto base = forward(p, tokens);
  for (std::size_t j = 1; j < tokens.size(); ++j) {
    auto changed = tokens;
    changed[j] = (changed[j] + 1) % 9;
    const auto lp = forward(p, changed);
    EXPECT_EQ(lp.topRows(static_cast<Eigen::Index>(j)), base.topRows(static_cast<Eigen::Index>(j)));
  }
}

TEST(Forward, ZeroDecayForgetsHistory) {
  auto p = testing::random_small_params(6, 2, 9);
  for (auto& L : p.layers) {
    L.a_log.setConstant(60.0);
    L.dt_bias.setConstant(30.0);
  }
  std::mt19937_64 rng(8);
  const auto tokens = random_tokens(rng, 9, 10);
  const auto base = forward(p, tokens);
  auto changed = tokens;
  for (std::size_t j = 0; j + 1 < tokens.size(); ++j) changed[j] = (changed[j] + 3) % 9;
  const auto lp = forward(p, changed);
  EXPECT_EQ(lp.bottomRows(1), base.bottomRows(1));
}

TEST(Forward, TiedEmbeddingIsOutputProjection) {
  auto p = testing::random_small_params(7, 1, 6);
  const std::vector<TokenId> tokens{1, 2, 3};
  const auto before = forward(p, tokens);
  // Token 5 never appears in the input, so a change to its row can only act
  // through the output projection.
  p.embedding.row(5) *= 2.0;
  const auto after = forward(p, tokens);
  EXPECT_GT((after - before).cwiseAbs().maxCoeff(), 1e-6);
  // No separate output matrix is stored.
  for (const auto& t : p.tensors()) EXPECT_EQ(t.name.find("output"), std::string::npos);
}

TEST(Forward, RejectsOutOfRangeIds) {
  const auto p = init_params(tiny_config(5), 1);
  EXPECT_THROW(forward(p, {1, 5}), ValidationError);
  EXPECT_THROW(forward(p, {1, -1}), ValidationError);
}

TEST(Loss, UniformLogitsGiveLogVocab) {
  auto p = init_params(tiny_config(17), 1);
  p.embedding.setZero();
  std::mt19937_64 rng(9);
  const auto r = loss_and_grad(p, {random_tokens(rng, 17, 9), random_tokens(rng, 17, 5)});
  EXPECT_NEAR(r.loss, std::log(17.0), 1e-12);
}

TEST(Loss, FreshModelNearUniform) {
  const auto p = init_params(tiny_config(200), 12);
  std::mt19937_64 rng(10);
  const double loss = mean_loss(p, {random_tokens(rng, 200, 64), random_tokens(rng, 200, 64)});
  EXPECT_LT(std::abs(loss - std::log(200.0)), 0.15 * std::log(200.0));
}

TEST(Loss, DuplicatedBatchSameMean) {
  const auto p = testing::random_small_params(2);
  std::mt19937_64 rng(11);
  const auto s1 = random_tokens(rng, 8, 9);
  const auto s2 = random_tokens(rng, 8, 13);
  const auto one = loss_and_grad(p, {s1, s2});
  const auto two = loss_and_grad(p, {s1, s2, s1, s2});
  EXPECT_NEAR(one.loss, two.loss, 1e-12);
  EXPECT_NEAR(loss_and_grad(p, {s1}).loss, loss_and_grad(p, {s1, s1}).loss, 1e-12);
}

TEST(Loss, BatchOrderAndThreadsInvariant) {
  const auto p = testing::random_small_params(3);
  std::mt19937_64 rng(12);
  std::vector<std::vector<TokenId>> batch;
  for (int i = 0; i < 5; ++i) batch.push_back(random_tokens(rng, 8, 6 + static_cast<std::size_t>(i)));
  const auto a = loss_and_grad(p, batch, 1);
  const auto b = loss_and_grad(p, batch, 3);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.grad.embedding, b.grad.embedding);
  std::reverse(batch.begin(), batch.end());
  EXPECT_NEAR(loss_and_grad(p, batch).loss, a.loss, 1e-12);
}

TEST(Loss, RejectsBadBatches) {
  const auto p = testing::random_small_params(3);
  EXPECT_THROW(loss_and_grad(p, {}), ValidationError);
  EXPECT_THROW(loss_and_grad(p, {{2, 3, 4}}), ValidationError);
  EXPECT_THROW(loss_and_grad(p, {{1}}), ValidationError);
}

TEST(Gradient, MatchesFiniteDifferences) {
  for (std::uint64_t seed : {21u, 22u}) {
    const auto p = testing::random_small_params(seed);
    ASSERT_LT(p.total_size(), 5000u);
    std::mt19937_64 rng(seed);
    const auto worst = testing::gradient_check(p, {random_tokens(rng, 8, 7), random_tokens(rng, 8, 5)});
    EXPECT_EQ(worst.size(), p.tensors().size());
    for (const auto& [name, err] : worst) EXPECT_LT(err, 1e-4) << name;
  }
}

TEST(Schedule, PaperEndpoints) {
  TrainingSchedule s;
  EXPECT_EQ(lr_at(s, 0), 0.0);
  EXPECT_EQ(lr_at(s, 503), 1e-3);
  EXPECT_EQ(lr_at(s, s.total_steps), 1e-5);
  EXPECT_THROW(lr_at(s, s.total_steps + 1), ValidationError);
  for (std::size_t k = 504; k < s.total_steps; k += 97) {
    EXPECT_LE(lr_at(s, k), lr_at(s, k - 1));
    EXPECT_GE(lr_at(s, k), 1e-5);
  }
  EXPECT_NEAR(lr_at(s, 250), 1e-3 * 250 / 503, 1e-18);
}

TEST(Schedule, Validation) {
  TrainingSchedule s;
  s.warmup_steps = s.total_steps;
  EXPECT_THROW(s.validate(), ValidationError);
  s = {};
  s.min_lr = 1.0;
  EXPECT_THROW(s.validate(), ValidationError);
}

TEST(Clip, RescalesOnlyAboveThreshold) {
  auto g = LMParameters::zeros(tiny_config(4));
  g.embedding(0, 0) = 2.0;
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 1.0), 2.0);
  EXPECT_DOUBLE_EQ(g.embedding(0, 0), 1.0);
  g.embedding(0, 0) = 0.3;
  g.final_norm(1) = 0.4;
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(g.embedding(0, 0), 0.3);
  EXPECT_DOUBLE_EQ(g.final_norm(1), 0.4);
}

TEST(Examples, ChunksLeadWithStartToken) {
  const auto ex = make_examples({{1, 5, 6, 7, 8, 9}, {4, 4}}, 3);
  ASSERT_EQ(ex.size(), 4u);
  EXPECT_EQ(ex[0], (std::vector<TokenId>{1, 5, 6}));
  EXPECT_EQ(ex[1], (std::vector<TokenId>{1, 7, 8}));
  EXPECT_EQ(ex[2], (std::vector<TokenId>{1, 9}));
  EXPECT_EQ(ex[3], (std::vector<TokenId>{1, 4, 4}));
}

TEST(Train, LossDropsAndIsDeterministic) {
  const auto c = tiny_config(12);
  std::vector<std::vector<TokenId>> streams{{1, 2, 3, 4, 5, 2, 3, 4, 5, 2, 3, 4, 5}};
  TrainingSchedule s;
  s.total_steps = 150;
  s.warmup_steps = 10;
  s.max_lr = 1e-2;
  s.min_lr = 1e-3;
  s.batch_size = 1;
  s.seq_len = 64;
  const auto a = train(init_params(c, 1), streams, s, {.seed = 4});
  const auto b = train(init_params(c, 1), streams, s, {.seed = 4});
  EXPECT_EQ(a.trace.back().loss, b.trace.back().loss);
  EXPECT_LT(a.trace.back().loss, 0.5 * a.trace.front().loss);
  EXPECT_EQ(a.trace.size(), 150u);
  EXPECT_EQ(a.trace[9].lr, lr_at(s, 10));
}

TEST(Checkpoint, RoundTripBothPrecisions) {
  for (Precision prec : {Precision::f64, Precision::f32}) {
    auto c = tiny_config(13);
    c.precision = prec;
    const auto p = init_params(c, 77);
    const auto path = std::filesystem::temp_directory_path() / "tokgran_ckpt_test.bin";
    save_checkpoint(path, p);
    const auto q = load_checkpoint(path);
    EXPECT_EQ(q.config.to_text(), c.to_text());
    auto vp = p.tensors(), vq = q.tensors();
    for (std::size_t i = 0; i < vp.size(); ++i) {
      for (Eigen::Index k = 0; k < vp[i].size; ++k) {
        if (prec == Precision::f64) EXPECT_EQ(vp[i].data[k], vq[i].data[k]);
        else EXPECT_EQ(static_cast<float>(vp[i].data[k]), vq[i].data[k]);
      }
    }
    std::filesystem::remove(path);
  }
  EXPECT_THROW(load_checkpoint("/nonexistent/ckpt"), ValidationError);
}

}  // namespace
}  // namespace tokgran
