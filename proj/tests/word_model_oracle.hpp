#pragma once
// A token-level model derived from a closed bigram word distribution: every
// word has one fixed tokenization, and next-token probabilities are the
// marginals of the word distribution given the partial word. Word
// probabilities under this model are known exactly, which makes it an oracle
// for the boundary correction.

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "tokgran/surprisal.hpp"
#include "tokgran/text.hpp"

namespace tokgran::testing {

class WordDerivedModel : public NextTokenModel {
 public:
  // q[prev + 1][w] = P(w | previous word prev), prev = -1 at text start.
  WordDerivedModel(const SubwordVocab& vocab, std::vector<std::string> words, std::vector<std::vector<double>> q,
                   double p_end)
      : vocab_(vocab), words_(std::move(words)), q_(std::move(q)), p_end_(p_end), mask_(boundary_mask(vocab)) {
    for (const auto& w : words_) {
      auto ids = encode(vocab_, w);
      for (std::size_t i = 0; i < ids.size(); ++i) {
        if (mask_[static_cast<std::size_t>(ids[i])] != (i == 0)) throw std::logic_error("bad toy tokenization");
      }
      tokenization_.push_back(std::move(ids));
    }
  }

  int vocab_size() const override { return static_cast<int>(vocab_.size()); }
  const std::vector<std::vector<TokenId>>& tokenizations() const { return tokenization_; }
  const std::vector<std::string>& words() const { return words_; }
  double q(int prev, std::size_t w) const { return q_[static_cast<std::size_t>(prev + 1)][w]; }

  RowMatrix next_token_logprobs(const std::vector<TokenId>& tokens) const override {
    const auto V = static_cast<Eigen::Index>(vocab_.size());
    RowMatrix out(static_cast<Eigen::Index>(tokens.size()), V);
    int prev = -1;
    std::vector<TokenId> partial;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const TokenId tok = tokens[i];
      if (i == 0 || tok == SubwordVocab::kBos) {
        prev = -1;
        partial.clear();
      } else if (mask_[static_cast<std::size_t>(tok)]) {
        if (!partial.empty()) prev = static_cast<int>(word_of(partial));
        partial = {tok};
      } else {
        partial.push_back(tok);
      }
      Eigen::VectorXd p = Eigen::VectorXd::Zero(V);
      if (partial.empty()) {
        add_start(p, prev, 1.0);
      } else {
        double z = 0.0;
        for (std::size_t w = 0; w < words_.size(); ++w) {
          if (has_prefix(w, partial)) z += q(prev, w);
        }
        for (std::size_t w = 0; w < words_.size(); ++w) {
          if (!has_prefix(w, partial)) continue;
          const double share = q(prev, w) / z;
          const auto& t = tokenization_[w];
          if (t.size() == partial.size()) add_start(p, static_cast<int>(w), share);
          else p(t[partial.size()]) += share;
        }
      }
      out.row(static_cast<Eigen::Index>(i)) = p.array().log().transpose();
    }
    return out;
  }

 private:
  void add_start(Eigen::VectorXd& p, int prev, double mass) const {
    p(SubwordVocab::kBos) += mass * p_end_;
    for (std::size_t w = 0; w < words_.size(); ++w) p(tokenization_[w][0]) += mass * (1.0 - p_end_) * q(prev, w);
  }
  bool has_prefix(std::size_t w, const std::vector<TokenId>& partial) const {
    const auto& t = tokenization_[w];
    return t.size() >= partial.size() && std::equal(partial.begin(), partial.end(), t.begin());
  }
  std::size_t word_of(const std::vector<TokenId>& partial) const {
    for (std::size_t w = 0; w < words_.size(); ++w) {
      if (tokenization_[w] == partial) return w;
    }
    throw std::logic_error("token sequence is not a word");
  }

  const SubwordVocab& vocab_;
  std::vector<std::string> words_;
  std::vector<std::vector<double>> q_;
  double p_end_;
  std::vector<bool> mask_;
  std::vector<std::vector<TokenId>> tokenization_;
};

/// Random row-stochastic bigram table over n words (n + 1 rows).
inline std::vector<std::vector<double>> random_bigram(std::mt19937_64& rng, std::size_t n) {
  std::gamma_distribution<double> g(1.0, 1.0);
  std::vector<std::vector<double>> q(n + 1, std::vector<double>(n));
  for (auto& row : q) {
    double s = 0.0;
    for (double& x : row) s += (x = g(rng) + 1e-3);
    for (double& x : row) x /= s;
  }
  return q;
}

/// P(word followed by a boundary | context) / P(boundary | context), summing
/// over every token sequence (not only the canonical one) that spells the
/// word, up to `max_tokens` tokens.
inline double brute_force_word_prob(const NextTokenModel& model, const SubwordVocab& vocab,
                                    const std::vector<TokenId>& context, std::string_view word,
                                    std::size_t max_tokens) {
  const auto mask = boundary_mask(vocab);
  const std::u32string target = std::u32string(1, text::kWhitespaceMarker) + text::utf8_to_u32(word);
  const RowMatrix ctx = model.next_token_logprobs(context);
  const double boundary = std::exp(log_boundary_mass(ctx, ctx.rows() - 1, mask));
  double total = 0.0;
  std::vector<TokenId> seq = context;
  std::function<void(std::size_t, double, std::size_t)> rec = [&](std::size_t matched, double prob, std::size_t depth) {
    const RowMatrix lp = model.next_token_logprobs(seq);
    const auto last = lp.rows() - 1;
    if (matched == target.size()) {
      double m = 0.0;
      for (Eigen::Index k = 0; k < lp.cols(); ++k) {
        if (mask[static_cast<std::size_t>(k)]) m += std::exp(lp(last, k));
      }
      total += prob * m;
      return;
    }
    if (depth == max_tokens) return;
    for (TokenId k = 2; k < static_cast<TokenId>(vocab.size()); ++k) {
      const auto piece = vocab.text(k);
      if (target.compare(matched, piece.size(), piece) != 0) continue;
      const double pk = std::exp(lp(last, k));
      if (pk == 0.0) continue;
      seq.push_back(k);
      rec(matched + piece.size(), prob * pk, depth + 1);
      seq.pop_back();
    }
  };
  rec(0, 1.0, 0);
  return total / boundary;
}

}  // namespace tokgran::testing
