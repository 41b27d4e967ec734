#pragma once
// Garden-path effects from LM surprisal: a filler-trained linking function
// maps surprisal to predicted reading times, and ambiguity effects on those
// predictions are estimated per construction and region.

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "tokgran/lme.hpp"
#include "tokgran/rt.hpp"
#include "tokgran/stats.hpp"
#include "tokgran/surprisal.hpp"

namespace tokgran {

enum class Construction { MV_RR, NP_S, NP_Z };
std::string to_string(Construction c);
Construction parse_construction(std::string_view s);
inline constexpr std::array<Construction, 3> kConstructions = {Construction::MV_RR, Construction::NP_S,
                                                              Construction::NP_Z};

enum class Region { critical = 0, spillover1 = 1, spillover2 = 2 };
std::string to_string(Region r);
Region parse_region(std::string_view s);
inline constexpr std::array<Region, 3> kRegions = {Region::critical, Region::spillover1, Region::spillover2};

enum Condition { kAmbiguous = 0, kUnambiguous = 1 };

struct GPItem {
  int item_id = 0;
  Construction construction = Construction::MV_RR;
  std::array<std::string, 2> sentence;  // indexed by Condition
  std::array<int, 2> critical{};        // 1-based word index of the critical word

  /// Word index (1-based) of a region in one condition.
  int region_index(Condition c, Region r) const { return critical[c] + static_cast<int>(r); }
  /// Same critical word in both conditions, at least two words before it and
  /// two spillover words after it.
  void validate() const;
};

/// Stimulus TSV: item_id, construction, condition (ambiguous|unambiguous),
/// sentence, critical_word_index (1-based).
std::vector<GPItem> read_gp_items(const std::filesystem::path& path);
void write_gp_items(const std::filesystem::path& path, const std::vector<GPItem>& items);

/// Word-level predictors of one sentence, 0-based word index.
struct SentencePredictors {
  std::vector<std::string> words;
  std::vector<double> surprisal;  // bits
  std::vector<double> logfreq;    // log2 unigram probability
  std::vector<double> length;     // characters
};

/// Groups word records by (doc_id, sentence_id) in order of appearance.
std::map<std::pair<std::string, std::string>, SentencePredictors> sentence_predictors(
    const std::vector<WordRecord>& records, const UnigramModel& unigram);

namespace gp {
inline constexpr const char* rt = "rt";
inline constexpr const char* surprisal[3] = {"surprisal", "surprisal_1", "surprisal_2"};
inline constexpr const char* logfreq[3] = {"logfreq", "logfreq_1", "logfreq_2"};
inline constexpr const char* length = "length";
inline constexpr const char* word_pos = "word_pos";
inline constexpr const char* subject = "subject";
inline constexpr const char* item = "item";
}  // namespace gp

/// Main effects: surprisal and log frequency of the current and two previous
/// words, length, word position; random intercepts by subject and item.
ModelSpec filler_spec();

/// Appends one predictor row for word `word_pos` (1-based, >= 3) of a sentence.
void add_word_row(std::map<std::string, std::vector<double>>& cols, const SentencePredictors& s, int word_pos,
                  double rt, long long subject, long long item);
DataTable to_table(std::map<std::string, std::vector<double>> cols);

/// Streams a filler RT TSV (subject_id, item_id, word_pos, word, rt_ms) into
/// a predictor table. Rows with word_pos < 3 have no two-word history and are
/// skipped. `by_item` holds the scored filler sentences.
DataTable read_filler_table(const std::filesystem::path& path, const std::map<long long, SentencePredictors>& by_item);

/// Filler sentences TSV: item_id, sentence.
std::vector<SentenceText> read_filler_sentences(const std::filesystem::path& path);

LMEFit fit_filler_model(const DataTable& fillers, const LMEOptions& options = {});

/// Fixed-effects prediction, i.e. random intercepts are zero for new subjects
/// and items.
std::vector<double> predict_rt(const LMEFit& filler_fit, const DataTable& rows);

/// Predicted RT of every word (index >= 3) of both conditions of each item.
struct StimulusPredictions {
  std::map<int, std::array<std::vector<double>, 2>> rt;  // item -> condition -> 0-based word index
};

/// `predictors` maps (item_id, condition) to the scored sentence.
StimulusPredictions predict_stimuli(const LMEFit& filler_fit, const std::vector<GPItem>& items,
                                    const std::map<std::pair<int, int>, SentencePredictors>& predictors);

struct GPEEstimate {
  std::string model_size;
  int vocab_size = 0;
  Construction construction = Construction::MV_RR;
  Region region = Region::critical;
  std::string unit;  // "ms" or "bits"
  double effect = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double p = 1.0;
};

struct GPEOptions {
  int lists = 2;                 // Latin-square lists; list s sees item i ambiguous when (s + i) is even
  double variance_floor = 1e-8;  // predicted RTs are noise-free
};

/// LME of predicted RT at the region on a binary ambiguity indicator with
/// random intercepts by list and item, over the items of one construction.
GPEEstimate estimate_gpe(const StimulusPredictions& predicted, const std::vector<GPItem>& items,
                         Construction construction, Region region, const GPEOptions& options = {});

/// Mean over items of ambiguous minus unambiguous corrected surprisal of
/// the critical word, with a t-interval. `predictors` as for predict_stimuli.
GPEEstimate surprisal_gpe(const std::vector<GPItem>& items, Construction construction,
                          const std::map<std::pair<int, int>, SentencePredictors>& predictors);

/// Each stimulus sentence as its own document: doc_id "i<item>c<condition>",
/// sentence_id "1".
std::vector<SentenceText> stimulus_sentences(const std::vector<GPItem>& items);
std::map<std::pair<int, int>, SentencePredictors> stimulus_predictors(const std::vector<GPItem>& items,
                                                                      const std::vector<WordRecord>& records,
                                                                      const UnigramModel& unigram);

/// OLS of effect on log2 |V|.
LineFit fit_trend(const std::vector<int>& vocab_sizes, const std::vector<double>& effects);

struct Exp2LM {
  std::string model_size;
  int vocab_size = 0;
  std::function<std::vector<WordRecord>(const std::vector<SentenceText>&)> score;
  LMEFit filler_fit;
};

/// For each LM: GPE in ms for every construction x region, then the raw
/// critical-word surprisal difference in bits per construction.
std::vector<GPEEstimate> run_exp2(const std::vector<GPItem>& items, const std::vector<Exp2LM>& lms,
                                  const UnigramModel& unigram, std::size_t threads = 1,
                                  const GPEOptions& options = {});

void write_gpe_csv(const std::filesystem::path& path, const std::vector<GPEEstimate>& rows);
std::vector<GPEEstimate> read_gpe_csv(const std::filesystem::path& path);

/// Synthetic items: three words of shared prefix, then an ambiguity-marking
/// word present only in the unambiguous condition, then the critical word and
/// spillover words drawn from the language. Ids start at `first_id`.
std::vector<GPItem> synthetic_gp_items(std::uint64_t seed, int per_construction, int first_id = 1);

}  // namespace tokgran
