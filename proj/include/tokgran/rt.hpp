#pragma once
// Reading-time data: ingestion, exclusion filters, eye-tracking measures,
// partitioning, predictor assembly and the surprisal-vs-baseline experiment.

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "tokgran/lme.hpp"
#include "tokgran/surprisal.hpp"

namespace tokgran {

enum class Measure { SPR, SP, FP, GP };

std::string to_string(Measure m);
Measure parse_measure(std::string_view s);

struct RTObservation {
  long long subject_id = 0;
  long long sentence_id = 0;
  std::string doc_id;
  int word_pos = 1;  // 1-based within the sentence
  std::string word;
  Measure measure = Measure::SPR;
  double rt_ms = 0.0;
  bool prev_fixated = false;  // eye tracking only
  bool sent_initial = false;
  bool sent_final = false;
  bool line_boundary = false;
  bool screen_boundary = false;
  bool doc_boundary = false;
  int saccade_len = 0;  // words spanned by the saccade that first landed here

  bool operator==(const RTObservation&) const = default;
};

std::vector<RTObservation> read_rt_tsv(const std::filesystem::path& path);
void write_rt_tsv(const std::filesystem::path& path, const std::vector<RTObservation>& rows);

/// subject_id, correct (number of comprehension questions answered correctly).
std::map<long long, int> read_comprehension_tsv(const std::filesystem::path& path);

struct FixationEvent {
  long long subject_id = 0;
  long long fix_index = 0;   // temporal order within the subject
  long long word_index = 0;  // 0-based position in the text
  double duration_ms = 0.0;
};

std::vector<FixationEvent> read_fixations_tsv(const std::filesystem::path& path);
void write_fixations_tsv(const std::filesystem::path& path, const std::vector<FixationEvent>& rows);

/// A word of the displayed text with its layout flags.
struct TextWord {
  std::string doc_id;
  long long sentence_id = 0;
  int word_pos = 1;
  std::string word;
  bool sent_initial = false;
  bool sent_final = false;
  bool line_boundary = false;    // first or last word on a line
  bool screen_boundary = false;  // first or last word on a screen
  bool doc_boundary = false;     // first or last word of a document
};

/// Lays sentences out in order. Sentence ids must be integers. Lines hold
/// `words_per_line` words and screens `lines_per_screen` lines; a new
/// document starts a new screen.
std::vector<TextWord> layout_text(const std::vector<SentenceText>& sentences, int words_per_line = 12,
                                  int lines_per_screen = 8);

/// Minimum 5 correct answers, RT within [100, 3000] ms, no sentence-initial
/// or sentence-final words. Subjects missing from `comprehension` are kept.
std::vector<RTObservation> filter_spr(const std::vector<RTObservation>& rows,
                                      const std::map<long long, int>& comprehension = {});

/// First-pass, go-past and scan-path (total fixation) durations per fixated
/// word and subject. FP and GP exist only when no later word was fixated
/// before the first entry to the word.
std::vector<RTObservation> compute_et_measures(const std::vector<FixationEvent>& fixations,
                                               const std::vector<TextWord>& text);

/// Drops non-positive RTs, saccades longer than four words and every row
/// flagged as a sentence, line, screen or document boundary.
std::vector<RTObservation> filter_et(const std::vector<RTObservation>& rows);

enum class Partition { fit = 0, exploratory = 1, heldout = 2 };

std::string to_string(Partition p);
/// (subject + sentence) mod 4: 0 and 1 fit, 2 exploratory, 3 held out.
Partition partition_label(long long subject_id, long long sentence_id);

/// Add-one smoothed unigram model over whitespace-delimited, case-preserved
/// words. With N tokens and V seen types, a seen word with count c gets
/// (c + 1) / (N + V) and an unseen word 1 / (N + V).
class UnigramModel {
 public:
  void add_text(std::string_view text);
  double surprisal_bits(const std::string& word) const;
  long long tokens() const { return tokens_; }
  std::size_t types() const { return counts_.size(); }

  static UnigramModel from_sentences(const std::vector<SentenceText>& sentences);

 private:
  std::map<std::string, long long, std::less<>> counts_;
  long long tokens_ = 0;
};

/// Column names of the assembled predictor table.
namespace col {
inline constexpr const char* rt = "rt";
inline constexpr const char* length = "length";
inline constexpr const char* word_pos = "word_pos";
inline constexpr const char* unigram = "unigram";
inline constexpr const char* prev_fixated = "prev_fixated";
inline constexpr const char* surprisal = "surprisal";
inline constexpr const char* prev_surprisal = "prev_surprisal";
inline constexpr const char* subject = "subject";
inline constexpr const char* partition = "partition";
}  // namespace col

/// One predictor row per observation. LM surprisal comes from `records`
/// (matched on doc_id, sentence_id and word_pos); the previous word is the
/// preceding record of the same document whether or not its own RT survived
/// filtering, 0 at a document start. Throws ValidationError on unmatched
/// observations or word mismatches.
DataTable assemble_predictors(const std::vector<RTObservation>& rows, const std::vector<WordRecord>& records,
                              const UnigramModel& unigram);

/// Baseline and full regression specs for a measure. Random effects are by
/// subject and identical in both.
ModelSpec baseline_spec(Measure m);
ModelSpec full_spec(Measure m);

struct DeltaLogLik {
  double delta = 0.0;  // exploratory loglik(full) - loglik(baseline)
  LMEFit baseline;
  LMEFit full;
};

/// Fits both specs on the fit partition and evaluates on the exploratory one.
DeltaLogLik delta_loglik(const DataTable& table, Measure m, const LMEOptions& options = {});

struct Exp1Corpus {
  std::string name;
  std::vector<SentenceText> sentences;
  std::vector<RTObservation> observations;  // already filtered
};

struct Exp1LM {
  std::string model_size;
  int vocab_size = 0;
  std::string phase;  // "init" or "trained"
  // Word surprisals of a corpus text.
  std::function<std::vector<WordRecord>(const std::vector<SentenceText>&)> score;
};

struct Exp1Row {
  std::string model_size;
  int vocab_size = 0;
  std::string corpus;
  std::string measure;
  std::string phase;
  double delta_loglik = 0.0;
  double perplexity = 0.0;
  std::vector<RandomTerm> removed_baseline;
  std::vector<RandomTerm> removed_full;
};

/// Every corpus x measure x LM cell, in that nesting order. `unigram`
/// supplies the frequency baseline.
std::vector<Exp1Row> run_exp1(const std::vector<Exp1Corpus>& corpora, const std::vector<Exp1LM>& lms,
                              const UnigramModel& unigram, std::size_t threads = 1,
                              const LMEOptions& options = {});

/// Adds a model_size "average" row per (vocab, corpus, measure, phase):
/// arithmetic mean of ΔLogLik, geometric mean of perplexity over sizes.
std::vector<Exp1Row> with_size_average(const std::vector<Exp1Row>& rows);

void write_exp1_csv(const std::filesystem::path& path, const std::vector<Exp1Row>& rows);
std::vector<Exp1Row> read_exp1_csv(const std::filesystem::path& path);

}  // namespace tokgran
