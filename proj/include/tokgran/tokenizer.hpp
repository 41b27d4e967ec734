#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tokgran {

using TokenId = std::int32_t;

struct TokenizerConfig {
  std::size_t target_vocab_size = 8000;  // includes <unk> and <s>
  double char_coverage = 0.9995;
  std::size_t seed_vocab_multiplier = 10;
  double prune_fraction = 0.25;
  int em_iterations_per_round = 2;
  std::uint64_t rng_seed = 0;
  std::size_t max_piece_length = 16;
  bool dummy_prefix = true;
  // Documents sampled (with rng_seed) before counting; 0 keeps them all.
  std::size_t max_documents = 0;
  std::size_t threads = 1;

  void validate() const;
};

/// One piece of a unigram vocabulary, probability in natural log.
struct Piece {
  std::u32string text;
  double log_prob = 0.0;
};

/// Unigram-LM vocabulary. Ids 0 and 1 are <unk> and <s>; the remaining
/// pieces are ordered by descending probability, ties by code points.
class SubwordVocab {
 public:
  static constexpr TokenId kUnk = 0;
  static constexpr TokenId kBos = 1;
  static constexpr std::string_view kUnkText = "<unk>";
  static constexpr std::string_view kBosText = "<s>";
  static constexpr int kFormatVersion = 1;

  SubwordVocab() = default;

  /// Builds from non-special pieces. Single-character pieces become the basic
  /// characters. With `renormalize` the probabilities are rescaled to sum to 1.
  static SubwordVocab from_pieces(std::vector<Piece> pieces, bool renormalize = true);

  std::size_t size() const { return pieces_.size() + 2; }
  std::size_t piece_count() const { return pieces_.size(); }

  std::u32string_view text(TokenId id) const;
  std::string text_utf8(TokenId id) const;
  double log_prob(TokenId id) const;
  bool is_special(TokenId id) const { return id == kUnk || id == kBos; }
  /// Piece begins with the whitespace marker, i.e. opens a new word.
  bool starts_word(TokenId id) const;

  std::optional<TokenId> find(std::u32string_view piece) const;
  const std::set<char32_t>& basic_chars() const { return basic_chars_; }
  bool covers(char32_t c) const { return basic_chars_.contains(c); }
  std::size_t max_piece_length() const { return max_len_; }

  /// Non-special pieces, in id order (id = index + 2).
  const std::vector<Piece>& pieces() const { return pieces_; }

  double coverage() const { return coverage_; }
  void set_coverage(double c) { coverage_ = c; }
  bool dummy_prefix() const { return dummy_prefix_; }
  void set_dummy_prefix(bool v) { dummy_prefix_ = v; }

  /// Calls fn(end, id) for every piece matching text starting at `begin`.
  template <class Fn>
  void for_each_match(std::u32string_view text, std::size_t begin, Fn&& fn) const {
    int node = 0;
    for (std::size_t i = begin; i < text.size(); ++i) {
      const auto& kids = trie_[static_cast<std::size_t>(node)].children;
      auto it = kids.find(text[i]);
      if (it == kids.end()) return;
      node = it->second;
      const TokenId id = trie_[static_cast<std::size_t>(node)].piece;
      if (id >= 0) fn(i + 1, id);
    }
  }

  /// Extra header lines (`#key<TAB>value`) carried through save/load.
  std::map<std::string, std::string>& stamps() { return stamps_; }
  const std::map<std::string, std::string>& stamps() const { return stamps_; }

  void save(const std::filesystem::path& path) const;
  static SubwordVocab load(const std::filesystem::path& path);
  std::string serialize() const;
  static SubwordVocab deserialize(std::string_view contents);

 private:
  struct TrieNode {
    std::unordered_map<char32_t, int> children;
    TokenId piece = -1;
  };

  void rebuild_index();

  std::vector<Piece> pieces_;
  std::set<char32_t> basic_chars_;
  std::vector<TrieNode> trie_;
  std::unordered_map<std::u32string, TokenId> ids_;
  double unk_log_prob_ = 0.0;
  double coverage_ = 1.0;
  bool dummy_prefix_ = true;
  std::size_t max_len_ = 0;
  std::map<std::string, std::string> stamps_;
};

/// Distinct training strings with their (weighted) frequencies.
struct WeightedString {
  std::u32string text;
  double count = 1.0;
};
using TrainingCorpus = std::vector<WeightedString>;

/// Normalizes documents and returns marker-prefixed words with counts,
/// sorted by code points.
TrainingCorpus count_words(const std::vector<std::string>& documents, const TokenizerConfig& config);

struct LatticeEdge {
  std::size_t begin = 0;
  std::size_t end = 0;
  TokenId id = 0;
  double log_prob = 0.0;
};

/// All segmentations of one string. Characters outside the basic set get a
/// single <unk> edge each.
class SegmentationLattice {
 public:
  SegmentationLattice(const SubwordVocab& vocab, std::u32string_view text, TokenId excluded = -1);

  std::size_t length() const { return length_; }
  const std::vector<LatticeEdge>& edges() const { return edges_; }
  /// Indices into edges() of edges ending at node `end`.
  const std::vector<std::size_t>& edges_ending_at(std::size_t end) const { return ending_[end]; }
  const std::vector<std::size_t>& edges_starting_at(std::size_t begin) const { return starting_[begin]; }

  /// alpha[i] = log sum over segmentations of text[0, i).
  const std::vector<double>& forward() const;
  /// beta[i] = log sum over segmentations of text[i, n).
  const std::vector<double>& backward() const;
  double log_marginal() const { return forward().back(); }

  /// Best path; ties prefer fewer tokens, then the longest leftmost token.
  std::vector<TokenId> viterbi(double* score = nullptr) const;

 private:
  std::size_t length_ = 0;
  std::vector<LatticeEdge> edges_;
  std::vector<std::vector<std::size_t>> starting_;
  std::vector<std::vector<std::size_t>> ending_;
  mutable std::vector<double> alpha_;
  mutable std::vector<double> beta_;
};

SubwordVocab build_seed_vocab(const TrainingCorpus& corpus, const TokenizerConfig& config);

/// Posterior token counts (index = token id) and corpus marginal log-likelihood.
struct ExpectedCounts {
  std::vector<double> counts;
  double log_likelihood = 0.0;
};
ExpectedCounts expected_counts(const SubwordVocab& vocab, const TrainingCorpus& corpus, std::size_t threads = 1);

double corpus_log_likelihood(const SubwordVocab& vocab, const TrainingCorpus& corpus, std::size_t threads = 1);

SubwordVocab em_round(const SubwordVocab& vocab, const TrainingCorpus& corpus, std::size_t threads = 1);

/// Estimated log-likelihood loss from removing each piece (0 for specials and
/// basic characters, which are never candidates).
std::vector<double> prune_scores(const SubwordVocab& vocab, const TrainingCorpus& corpus);

SubwordVocab prune_round(const SubwordVocab& vocab, const TrainingCorpus& corpus, const TokenizerConfig& config);

/// Vocabulary size after one pruning round.
std::size_t pruned_size(std::size_t current, const TokenizerConfig& config);

SubwordVocab train_tokenizer(const TrainingCorpus& corpus, const TokenizerConfig& config);
SubwordVocab train_tokenizer(const std::vector<std::string>& documents, const TokenizerConfig& config);

/// Most likely segmentation of text already in piece form.
std::vector<TokenId> encode_viterbi(const SubwordVocab& vocab, std::u32string_view pieces);
/// Normalizes `text`, converts it to piece form and segments it.
std::vector<TokenId> encode(const SubwordVocab& vocab, std::string_view text, bool add_bos = false);
std::string decode(const SubwordVocab& vocab, const std::vector<TokenId>& ids);

double marginal_loglik(const SubwordVocab& vocab, std::u32string_view pieces);

}  // namespace tokgran
