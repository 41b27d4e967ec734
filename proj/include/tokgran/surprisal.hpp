#pragma once
// Word probabilities from a subword language model. A word's probability is
// the probability of its tokens followed by a word boundary (a token that
// opens a new word, or end of text), divided by the probability of a
// boundary after the context.

#include <filesystem>
#include <string>
#include <vector>

#include "tokgran/ssm.hpp"
#include "tokgran/tokenizer.hpp"

namespace tokgran {

class NextTokenModel {
 public:
  virtual ~NextTokenModel() = default;
  virtual int vocab_size() const = 0;
  /// Row i holds log P(. | tokens[0..i]) in natural log.
  virtual RowMatrix next_token_logprobs(const std::vector<TokenId>& tokens) const = 0;
};

class SsmLanguageModel : public NextTokenModel {
 public:
  explicit SsmLanguageModel(LMParameters params) : params_(std::move(params)) {}
  int vocab_size() const override { return params_.config.vocab_size; }
  RowMatrix next_token_logprobs(const std::vector<TokenId>& tokens) const override {
    return forward(params_, tokens);
  }
  const LMParameters& params() const { return params_; }

 private:
  LMParameters params_;
};

/// mask[id] is true for <s> (end of text) and every piece that opens a word.
std::vector<bool> boundary_mask(const SubwordVocab& vocab);

/// log of the total probability on boundary tokens in one row.
double log_boundary_mass(const RowMatrix& logp, Eigen::Index row, const std::vector<bool>& mask);

struct WordSpan {
  std::string word;
  std::size_t begin = 0;  // token offsets, half-open
  std::size_t end = 0;
};

struct Alignment {
  std::vector<TokenId> tokens;
  std::vector<WordSpan> words;
};

/// Viterbi-tokenizes normalized `text` and maps each whitespace word to its
/// contiguous token span.
Alignment align_words(std::string_view text, const SubwordVocab& vocab);

struct WordLogProb {
  double raw = 0.0;        // sum of token conditionals
  double corrected = 0.0;  // boundary-corrected
};

/// `context` must start with <s>.
WordLogProb corrected_word_logprob(const NextTokenModel& model, const std::vector<bool>& mask,
                                   const std::vector<TokenId>& context, const std::vector<TokenId>& span);

struct SentenceText {
  std::string doc_id;
  std::string sentence_id;
  std::string text;
};

struct WordRecord {
  std::string doc_id;
  std::string sentence_id;
  int word_pos = 0;  // 1-based within the sentence
  std::string word;
  std::vector<TokenId> tokens;
  std::size_t token_offset = 0;  // position of the first token in the scored stream
  double raw_logprob = 0.0;
  double corrected_logprob = 0.0;
  double surprisal_bits = 0.0;
};

struct SurprisalOptions {
  // Tokens of preceding text in the same document kept as context; 0 keeps all.
  std::size_t context_window = 0;
  std::size_t threads = 1;
};

/// Consecutive sentences with the same doc_id form one document.
std::vector<WordRecord> word_surprisals(const NextTokenModel& model, const SubwordVocab& vocab,
                                        const std::vector<SentenceText>& sentences,
                                        const SurprisalOptions& options = {});

/// exp of the negative mean corrected log-probability per word.
double perplexity(const std::vector<WordRecord>& records);
double mean_surprisal_bits(const std::vector<WordRecord>& records);

double corpus_perplexity(const NextTokenModel& model, const SubwordVocab& vocab,
                         const std::vector<SentenceText>& sentences, const SurprisalOptions& options = {});

void write_surprisal_tsv(const std::filesystem::path& path, const std::vector<WordRecord>& records);
std::vector<WordRecord> read_surprisal_tsv(const std::filesystem::path& path);

/// Sentences from a TSV with columns doc_id, sentence_id, text (header row),
/// or from plain text where each non-empty line is a sentence of document "0".
std::vector<SentenceText> read_sentences(const std::filesystem::path& path);
void write_sentences(const std::filesystem::path& path, const std::vector<SentenceText>& sentences);

}  // namespace tokgran
