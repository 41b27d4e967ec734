#pragma once
// Deterministic English-like text and reading-time corpora for tests, demos
// and the bundled data. Words are pronounceable syllable strings; frequent
// words are short, open classes are Zipf-distributed, sentences follow a few
// part-of-speech templates.

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "tokgran/rt.hpp"
#include "tokgran/surprisal.hpp"

namespace tokgran {

class SyntheticLanguage {
 public:
  explicit SyntheticLanguage(std::uint64_t seed);

  /// One sentence: capitalized first word, final period.
  std::string sentence(std::mt19937_64& rng) const;

  /// log2 of the expected relative frequency of a word form under the
  /// generator; capitalization and the final period are ignored. Unknown
  /// forms throw.
  double log2_frequency(const std::string& word) const;

  std::size_t types() const { return log2_freq_.size(); }

 private:
  enum Class { kDet, kAdj, kNoun, kVerb, kPrep, kAdv, kClasses };
  struct Lexicon {
    std::vector<std::string> words;
    std::vector<double> cdf;  // cumulative, normalized
  };

  std::vector<Lexicon> lex_;
  std::map<std::string, double> log2_freq_;
};

/// Newline-separated sentences, at least `min_bytes` long.
/// `stream` names the sampling substream; the language depends on `seed` alone.
std::string synthetic_text(std::uint64_t seed, std::size_t min_bytes, std::string_view stream = "synthetic-text");

/// `docs` documents of `sentences_per_doc` sentences; sentence ids run
/// 1, 2, ... across the whole corpus so they can be used for partitioning.
std::vector<SentenceText> synthetic_documents(std::uint64_t seed, int docs, int sentences_per_doc,
                                             std::string_view stream = "synthetic-documents");

struct RtEffects {
  double intercept = 200.0;
  double length = 3.0;    // ms per character
  double unigram = 8.0;   // ms per bit of true unigram surprisal
  double surprisal = 0.0; // ms per bit, current word and previous word alike
  double subject_sd = 20.0;
  double noise_sd = 25.0;
};

struct RtSimulation {
  std::vector<SentenceText> sentences;
  std::vector<TextWord> words;
  std::vector<RTObservation> observations;     // SPR, or FP/GP/SP from fixations
  std::vector<FixationEvent> fixations;        // eye-tracking only
  std::map<long long, int> comprehension;      // SPR only
};

/// Self-paced reading: every subject reads every word once. `surprisal`
/// holds one value per text word (document order) or is empty.
RtSimulation simulate_spr(std::uint64_t seed, const SyntheticLanguage& lang, const std::vector<SentenceText>& sentences,
                          int subjects, const RtEffects& effects, const std::vector<double>& surprisal = {});

/// Eye tracking: a left-to-right scan with skips of short words and
/// occasional one- or two-word regressions; measures are derived with
/// compute_et_measures.
RtSimulation simulate_et(std::uint64_t seed, const SyntheticLanguage& lang, const std::vector<SentenceText>& sentences,
                         int subjects, const RtEffects& effects, const std::vector<double>& surprisal = {});

}  // namespace tokgran
