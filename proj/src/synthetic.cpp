#include "tokgran/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

#include "tokgran/common.hpp"

namespace tokgran {

namespace {

constexpr std::array<const char*, 24> kOnsets = {"b", "d", "f",  "g",  "h",  "k",  "l",  "m",  "n",  "p",  "r",  "s",
                                                 "t", "v", "w",  "z",  "br", "st", "tr", "pl", "gr", "sh", "ch", "th"};
constexpr std::array<const char*, 8> kVowels = {"a", "e", "i", "o", "u", "ai", "ea", "ou"};
constexpr std::array<const char*, 10> kCodas = {"", "", "n", "r", "s", "t", "l", "m", "nd", "st"};

// Class sizes: det, adj, noun, verb, prep, adv.
constexpr std::array<int, 6> kSizes = {6, 800, 2500, 1200, 14, 300};
constexpr double kZipf = 1.05;
constexpr double kAdjRate = 0.3;
constexpr double kAdvRate = 0.5;

struct Slot {
  int cls;
  bool optional;
};

// D [A] N V D [A] N / D [A] N V P D N / N V [Adv] / D N P D [A] N V D N [Adv]
const std::vector<std::vector<Slot>> kTemplates = {
    {{0, false}, {1, true}, {2, false}, {3, false}, {0, false}, {1, true}, {2, false}},
    {{0, false}, {1, true}, {2, false}, {3, false}, {4, false}, {0, false}, {2, false}},
    {{2, false}, {3, false}, {5, true}},
    {{0, false}, {2, false}, {4, false}, {0, false}, {1, true}, {2, false}, {3, false}, {0, false}, {2, false},
     {5, true}},
};
constexpr std::array<double, 4> kTemplateWeights = {0.35, 0.3, 0.1, 0.25};

double optional_rate(int cls) { return cls == 1 ? kAdjRate : kAdvRate; }

std::string make_word(std::mt19937_64& rng, int syllables) {
  std::uniform_int_distribution<std::size_t> on(0, kOnsets.size() - 1), vo(0, kVowels.size() - 1),
      co(0, kCodas.size() - 1);
  std::string w;
  for (int s = 0; s < syllables; ++s) {
    w += kOnsets[on(rng)];
    w += kVowels[vo(rng)];
    if (s + 1 == syllables || std::bernoulli_distribution(0.25)(rng)) w += kCodas[co(rng)];
  }
  return w;
}

std::string base_form(std::string w) {
  if (!w.empty() && w.back() == '.') w.pop_back();
  if (!w.empty() && w[0] >= 'A' && w[0] <= 'Z') w[0] = static_cast<char>(w[0] - 'A' + 'a');
  return w;
}

std::discrete_distribution<int> template_draw() {
  return std::discrete_distribution<int>(kTemplateWeights.begin(), kTemplateWeights.end());
}

}  // namespace

SyntheticLanguage::SyntheticLanguage(std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, "synthetic-lexicon"));
  std::set<std::string> used;
  // Expected occurrences of each class per sentence.
  std::array<double, kClasses> per_sentence{};
  double length = 0.0;
  for (std::size_t t = 0; t < kTemplates.size(); ++t) {
    for (const auto& slot : kTemplates[t]) {
      const double e = kTemplateWeights[t] * (slot.optional ? optional_rate(slot.cls) : 1.0);
      per_sentence[static_cast<std::size_t>(slot.cls)] += e;
      length += e;
    }
  }
  lex_.resize(kClasses);
  for (int c = 0; c < kClasses; ++c) {
    auto& lex = lex_[static_cast<std::size_t>(c)];
    std::vector<double> weights;
    double total = 0.0;
    const bool closed = c == kDet || c == kPrep;
    for (int r = 0; r < kSizes[static_cast<std::size_t>(c)]; ++r) {
      // Frequent words are short.
      int syl = closed ? 1 : 1 + static_cast<int>(std::log2(r + 2.0) / 3.0) + (std::bernoulli_distribution(0.3)(rng) ? 1 : 0);
      std::string w;
      do {
        w = make_word(rng, syl);
      } while (!used.insert(w).second);
      lex.words.push_back(w);
      weights.push_back(1.0 / std::pow(r + 1.0, kZipf));
      total += weights.back();
    }
    double acc = 0.0;
    for (double w : weights) lex.cdf.push_back(acc += w / total);
    lex.cdf.back() = 1.0;
    for (std::size_t r = 0; r < lex.words.size(); ++r) {
      log2_freq_[lex.words[r]] =
          std::log2(per_sentence[static_cast<std::size_t>(c)] / length * weights[r] / total);
    }
  }
}

std::string SyntheticLanguage::sentence(std::mt19937_64& rng) const {
  auto pick = template_draw();
  const auto& tmpl = kTemplates[static_cast<std::size_t>(pick(rng))];
  std::vector<std::string> words;
  for (const auto& slot : tmpl) {
    if (slot.optional && !std::bernoulli_distribution(optional_rate(slot.cls))(rng)) continue;
    const auto& lex = lex_[static_cast<std::size_t>(slot.cls)];
    const double r = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const auto k = static_cast<std::size_t>(std::upper_bound(lex.cdf.begin(), lex.cdf.end(), r) - lex.cdf.begin());
    words.push_back(lex.words[std::min(k, lex.words.size() - 1)]);
  }
  words.front()[0] = static_cast<char>(words.front()[0] - 'a' + 'A');
  words.back() += '.';
  std::string s;
  for (const auto& w : words) {
    if (!s.empty()) s += ' ';
    s += w;
  }
  return s;
}

double SyntheticLanguage::log2_frequency(const std::string& word) const {
  const auto it = log2_freq_.find(base_form(word));
  if (it == log2_freq_.end()) throw ValidationError("'" + word + "' is not a word of the synthetic language");
  return it->second;
}

std::string synthetic_text(std::uint64_t seed, std::size_t min_bytes, std::string_view stream) {
  const SyntheticLanguage lang(seed);
  std::mt19937_64 rng(derive_seed(seed, stream));
  std::string text;
  while (text.size() < min_bytes) {
    text += lang.sentence(rng);
    text += '\n';
  }
  return text;
}

std::vector<SentenceText> synthetic_documents(std::uint64_t seed, int docs, int sentences_per_doc,
                                             std::string_view stream) {
  const SyntheticLanguage lang(seed);
  std::mt19937_64 rng(derive_seed(seed, stream));
  std::vector<SentenceText> out;
  int sid = 0;
  for (int d = 1; d <= docs; ++d)
    for (int s = 0; s < sentences_per_doc; ++s)
      out.push_back({"d" + std::to_string(d), std::to_string(++sid), lang.sentence(rng)});
  return out;
}

namespace {

// Per-word processing time of one subject, without noise.
std::vector<double> expected_times(const SyntheticLanguage& lang, const std::vector<TextWord>& words,
                                   const RtEffects& fx, const std::vector<double>& surprisal) {
  if (!surprisal.empty() && surprisal.size() != words.size())
    throw ValidationError("planted surprisal needs one value per text word");
  std::vector<double> t(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto& w = words[i];
    double v = fx.intercept + fx.length * static_cast<double>(w.word.size()) - fx.unigram * lang.log2_frequency(w.word);
    if (!surprisal.empty()) {
      v += fx.surprisal * surprisal[i];
      if (i > 0 && words[i - 1].doc_id == w.doc_id) v += fx.surprisal * surprisal[i - 1];
    }
    t[i] = v;
  }
  return t;
}

}  // namespace

RtSimulation simulate_spr(std::uint64_t seed, const SyntheticLanguage& lang, const std::vector<SentenceText>& sentences,
                          int subjects, const RtEffects& effects, const std::vector<double>& surprisal) {
  RtSimulation sim;
  sim.sentences = sentences;
  sim.words = layout_text(sentences);
  const auto mu = expected_times(lang, sim.words, effects, surprisal);
  std::mt19937_64 rng(derive_seed(seed, "simulate-spr"));
  std::normal_distribution<double> z(0.0, 1.0);
  for (int s = 1; s <= subjects; ++s) {
    const double u = effects.subject_sd * z(rng);
    sim.comprehension[s] = s % 10 == 9 ? 4 : 6 + s % 3;
    for (std::size_t i = 0; i < sim.words.size(); ++i) {
      const auto& w = sim.words[i];
      RTObservation o;
      o.subject_id = s;
      o.sentence_id = w.sentence_id;
      o.doc_id = w.doc_id;
      o.word_pos = w.word_pos;
      o.word = w.word;
      o.measure = Measure::SPR;
      o.rt_ms = std::max(1.0, mu[i] + u + effects.noise_sd * z(rng));
      o.sent_initial = w.sent_initial;
      o.sent_final = w.sent_final;
      sim.observations.push_back(std::move(o));
    }
  }
  return sim;
}

RtSimulation simulate_et(std::uint64_t seed, const SyntheticLanguage& lang, const std::vector<SentenceText>& sentences,
                         int subjects, const RtEffects& effects, const std::vector<double>& surprisal) {
  RtSimulation sim;
  sim.sentences = sentences;
  sim.words = layout_text(sentences);
  const auto mu = expected_times(lang, sim.words, effects, surprisal);
  std::mt19937_64 rng(derive_seed(seed, "simulate-et"));
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const long long n = static_cast<long long>(sim.words.size());
  for (int s = 1; s <= subjects; ++s) {
    const double u = effects.subject_sd * z(rng);
    long long k = 0;
    auto fixate = [&](long long w, double ms) {
      sim.fixations.push_back({s, k++, w, std::max(50.0, ms)});
    };
    long long pos = 0;
    while (pos < n) {
      const double t = mu[static_cast<std::size_t>(pos)] + u + effects.noise_sd * z(rng);
      if (unif(rng) < 0.2) {
        fixate(pos, 0.6 * t);
        fixate(pos, 0.4 * t);
      } else {
        fixate(pos, t);
      }
      if (pos >= 2 && unif(rng) < 0.08) {
        const long long back = pos - (unif(rng) < 0.7 ? 1 : 2);
        fixate(back, 0.5 * mu[static_cast<std::size_t>(back)] + effects.noise_sd * z(rng));
      }
      long long next = pos + 1;
      if (next < n && sim.words[static_cast<std::size_t>(next)].word.size() <= 3 && unif(rng) < 0.3) ++next;
      if (unif(rng) < 0.02) next = pos + 5 + (unif(rng) < 0.5 ? 1 : 0);
      pos = next;
    }
  }
  sim.observations = compute_et_measures(sim.fixations, sim.words);
  return sim;
}

}  // namespace tokgran
