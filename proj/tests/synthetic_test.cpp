#include "tokgran/synthetic.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "tokgran/common.hpp"
#include "tokgran/stats.hpp"

namespace tokgran {
namespace {

TEST(SyntheticText, SizeAndDeterminism) {
  const auto a = synthetic_text(1, 20000);
  EXPECT_GE(a.size(), 20000u);
  EXPECT_EQ(a, synthetic_text(1, 20000));
  EXPECT_NE(a, synthetic_text(2, 20000));
  EXPECT_EQ(a.back(), '\n');
}

TEST(SyntheticText, FrequenciesFormADistribution) {
  const SyntheticLanguage lang(3);
  std::mt19937_64 rng(1);
  std::map<std::string, int> counts;
  int total = 0;
  for (int i = 0; i < 20000; ++i) {
    std::istringstream in(lang.sentence(rng));
    std::string w;
    while (in >> w) {
      ++counts[w.back() == '.' ? w.substr(0, w.size() - 1) : w];
      ++total;
      EXPECT_LT(lang.log2_frequency(w), 0.0);
    }
  }
  // Empirical frequency of a handful of frequent forms matches the analytic one.
  int checked = 0;
  for (const auto& [w, c] : counts) {
    if (c < 2000) continue;
    std::string lower = w;
    lower[0] = static_cast<char>(std::tolower(lower[0]));
    if (lower != w) continue;
    const double expect = std::exp2(lang.log2_frequency(w)) * total;
    const double all = c + (counts.contains(std::string(1, static_cast<char>(std::toupper(w[0]))) + w.substr(1))
                                ? counts.at(std::string(1, static_cast<char>(std::toupper(w[0]))) + w.substr(1))
                                : 0);
    EXPECT_NEAR(all, expect, 5 * std::sqrt(expect)) << w;
    ++checked;
  }
  EXPECT_GT(checked, 3);
  EXPECT_THROW(lang.log2_frequency("qqqq"), ValidationError);
}

TEST(SyntheticText, FrequentWordsAreShorter) {
  const SyntheticLanguage lang(4);
  std::mt19937_64 rng(2);
  std::vector<double> len, freq;
  std::map<std::string, bool> seen;
  for (int i = 0; i < 3000; ++i) {
    std::istringstream in(lang.sentence(rng));
    std::string w;
    while (in >> w) {
      if (seen[w]) continue;
      seen[w] = true;
      len.push_back(static_cast<double>(w.size()));
      freq.push_back(lang.log2_frequency(w));
    }
  }
  EXPECT_LT(fit_line(freq, len).slope, 0.0);
}

TEST(Simulation, SprShape) {
  const SyntheticLanguage lang(5);
  const auto docs = synthetic_documents(5, 2, 5);
  const auto sim = simulate_spr(1, lang, docs, 10, {});
  EXPECT_EQ(sim.observations.size(), 10 * sim.words.size());
  EXPECT_EQ(sim.comprehension.at(9), 4);
  for (const auto& o : sim.observations) EXPECT_GT(o.rt_ms, 0.0);
  EXPECT_THROW(simulate_spr(1, lang, docs, 2, {}, {1.0}), ValidationError);
}

TEST(Simulation, EtMeasuresObeyIdentities) {
  const SyntheticLanguage lang(6);
  const auto sim = simulate_et(1, lang, synthetic_documents(6, 3, 6), 5, {});
  std::map<std::tuple<long long, long long, int, Measure>, double> m;
  for (const auto& o : sim.observations) {
    EXPECT_GT(o.rt_ms, 0.0);
    m[{o.subject_id, o.sentence_id, o.word_pos, o.measure}] = o.rt_ms;
  }
  int regressions = 0;
  for (const auto& [k, v] : m) {
    if (std::get<3>(k) != Measure::FP) continue;
    const auto gp = m.at({std::get<0>(k), std::get<1>(k), std::get<2>(k), Measure::GP});
    EXPECT_GE(gp, v);
    regressions += gp > v;
  }
  EXPECT_GT(regressions, 0);
}

}  // namespace
}  // namespace tokgran
