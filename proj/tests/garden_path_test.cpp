#include "tokgran/garden_path.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "gp_fixtures.hpp"
#include "tokgran/common.hpp"
#include "tokgran/synthetic.hpp"
#include "tokgran/text.hpp"
#include "word_model_oracle.hpp"

namespace tokgran {
namespace {

namespace fs = std::filesystem;
using testing::exact_filler;
using testing::planted;
using testing::random_sentence;
using testing::simulate_fillers;

fs::path temp_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / name;
  fs::create_directories(d);
  return d;
}

TEST(Items, RoundTripAndValidation) {
  const auto items = synthetic_gp_items(3, 4);
  ASSERT_EQ(items.size(), 12u);
  const auto dir = temp_dir("tokgran_gp_items");
  write_gp_items(dir / "s.tsv", items);
  const auto back = read_gp_items(dir / "s.tsv");
  ASSERT_EQ(back.size(), items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    EXPECT_EQ(back[i].sentence, items[i].sentence);
    EXPECT_EQ(back[i].critical, items[i].critical);
    EXPECT_EQ(back[i].construction, items[i].construction);
  }
  // Region bookkeeping: critical, +1, +2 in both conditions.
  for (const auto& it : items)
    for (int c = 0; c < 2; ++c)
      for (auto r : kRegions)
        EXPECT_EQ(it.region_index(static_cast<Condition>(c), r), it.critical[static_cast<std::size_t>(c)] + static_cast<int>(r));

  GPItem bad = items[0];
  bad.critical[1] -= 1;  // now the inserted "that"
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = items[0];
  bad.critical = {1, 1};
  EXPECT_THROW(bad.validate(), ValidationError);
  {
    std::ofstream out(dir / "bad.tsv");
    out << "item_id\tconstruction\tcondition\tsentence\tcritical_word_index\n"
        << "1\tXX\tambiguous\ta b c d e f\t3\n";
  }
  try {
    read_gp_items(dir / "bad.tsv");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("bad.tsv:2"), std::string::npos);
  }
  {
    std::ofstream out(dir / "half.tsv");
    out << "item_id\tconstruction\tcondition\tsentence\tcritical_word_index\n"
        << "1\tNP/Z\tambiguous\ta b c d e f\t3\n";
  }
  EXPECT_THROW(read_gp_items(dir / "half.tsv"), ValidationError);
  fs::remove_all(dir);
}

TEST(Filler, RecoversSurprisalCoefficient) {
  const auto t = simulate_fillers(1, 40, 30);
  const auto fit = fit_filler_model(t);
  EXPECT_TRUE(fit.converged);
  const auto k = fit.index_of(gp::surprisal[0]);
  EXPECT_NEAR(fit.beta(static_cast<Eigen::Index>(k)), 3.0, 2 * fit.se(k));
  EXPECT_GT(fit.se(k), 0.0);
}

TEST(Filler, ConstantSurprisalIsAliased) {
  auto t = simulate_fillers(2, 20, 10);
  t.col(gp::surprisal[0]).assign(t.rows(), 7.0);
  const auto fit = fit_filler_model(t);
  const auto k = fit.index_of(gp::surprisal[0]);
  EXPECT_TRUE(fit.aliased[k]);
  EXPECT_EQ(fit.beta(static_cast<Eigen::Index>(k)), 0.0);
}

TEST(PredictRt, LinearAndMatchesDotProduct) {
  const auto fit = fit_filler_model(simulate_fillers(3, 20, 10));
  std::mt19937_64 rng(4);
  auto s = random_sentence(rng, 5);
  std::map<std::string, std::vector<double>> cols;
  add_word_row(cols, s, 4, 0, 0, 0);
  s.surprisal[3] += 2.5;
  add_word_row(cols, s, 4, 0, 0, 0);
  const auto t = to_table(cols);
  const auto p = predict_rt(fit, t);
  const double b = fit.beta(static_cast<Eigen::Index>(fit.index_of(gp::surprisal[0])));
  EXPECT_NEAR(p[1] - p[0], 2.5 * b, 1e-10);
  double dot = fit.beta(0);
  for (std::size_t j = 0; j < fit.spec.fixed.size(); ++j)
    dot += fit.beta(static_cast<Eigen::Index>(j + 1)) * t.col(fit.spec.fixed[j])[0];
  EXPECT_NEAR(p[0], dot, 1e-10);

  LMEFit zero = fit;
  zero.beta.setZero();
  zero.beta(0) = 321.0;
  for (double v : predict_rt(zero, t)) EXPECT_EQ(v, 321.0);

  DataTable missing;
  missing.add("x", {1.0});
  EXPECT_THROW(predict_rt(fit, missing), ValidationError);
}

TEST(Gpe, NoDifferenceGivesZero) {
  const auto items = synthetic_gp_items(5, 8);
  const auto preds = planted(items, std::vector<double>(items.size(), 0.0));
  const auto sp = predict_stimuli(exact_filler(2.0), items, preds);
  for (auto c : kConstructions) {
    const auto e = estimate_gpe(sp, items, c, Region::critical);
    EXPECT_NEAR(e.effect, 0.0, 1e-6);
    EXPECT_LE(e.ci_lo, 0.0);
    EXPECT_GE(e.ci_hi, 0.0);
    EXPECT_EQ(e.unit, "ms");
    const auto s = surprisal_gpe(items, c, preds);
    EXPECT_EQ(s.effect, 0.0);
    EXPECT_EQ(s.unit, "bits");
  }
}

TEST(Gpe, PlantedFiveBitsAtTwoMsPerBit) {
  const auto items = synthetic_gp_items(6, 8);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> z(5.0, 1.0);
  std::vector<double> delta;
  for (std::size_t i = 0; i < items.size(); ++i) delta.push_back(z(rng));
  const auto preds = planted(items, delta);
  const auto sp = predict_stimuli(exact_filler(2.0), items, preds);
  for (auto c : kConstructions) {
    const auto e = estimate_gpe(sp, items, c, Region::critical);
    EXPECT_LT(e.ci_lo, 10.0);
    EXPECT_GT(e.ci_hi, 10.0);
    EXPECT_LE(e.ci_lo, e.effect);
    EXPECT_GE(e.ci_hi, e.effect);
    // Spillover 1 carries the previous-word coefficient.
    const auto s1 = estimate_gpe(sp, items, c, Region::spillover1);
    EXPECT_NEAR(s1.effect / e.effect, 0.7 / 2.0, 1e-6);
  }
}

TEST(Gpe, ConstructionsAreIndependent) {
  const auto items = synthetic_gp_items(8, 6);
  std::vector<double> delta;
  for (std::size_t i = 0; i < items.size(); ++i) delta.push_back(3.0 + 0.25 * static_cast<double>(i % 5));
  const auto preds = planted(items, delta);
  const auto sp = predict_stimuli(exact_filler(2.0), items, preds);
  std::vector<GPItem> without_npz;
  for (const auto& it : items)
    if (it.construction != Construction::NP_Z) without_npz.push_back(it);
  for (auto r : kRegions) {
    const auto a = estimate_gpe(sp, items, Construction::MV_RR, r);
    const auto b = estimate_gpe(sp, without_npz, Construction::MV_RR, r);
    EXPECT_EQ(a.effect, b.effect);
    EXPECT_EQ(a.ci_lo, b.ci_lo);
    EXPECT_EQ(a.p, b.p);
  }
  EXPECT_THROW(estimate_gpe(sp, without_npz, Construction::NP_Z, Region::critical), ValidationError);
}

TEST(Gpe, ScalesLinearlyWithSurprisalDifference) {
  const auto items = synthetic_gp_items(10, 6);
  std::vector<double> delta;
  for (std::size_t i = 0; i < items.size(); ++i) delta.push_back(2.0 + std::sin(static_cast<double>(i)));
  std::vector<double> scaled = delta;
  for (double& d : scaled) d *= 3.0;
  const auto f = exact_filler(2.0);
  const auto a = estimate_gpe(predict_stimuli(f, items, planted(items, delta)), items, Construction::NP_S,
                              Region::critical);
  const auto b = estimate_gpe(predict_stimuli(f, items, planted(items, scaled)), items, Construction::NP_S,
                              Region::critical);
  EXPECT_NEAR(b.effect, 3.0 * a.effect, 1e-8);
}

TEST(SurprisalGpe, BigramToyModel) {
  const auto vocab = SubwordVocab::from_pieces(
      {{U"▁", -2.0}, {U"a", -2.0}, {U"b", -2.0}, {U"c", -2.0}, {U"▁a", -1.5}, {U"▁ab", -1.2}}, false);
  const std::vector<std::string> words{"a", "ab", "abc", "b", "ca", "bab"};
  std::mt19937_64 rng(11);
  auto q = testing::random_bigram(rng, words.size());
  // "ca" is all but impossible after "b".
  auto& row = q[3 + 1];
  row[4] = 1e-9;
  double s = 0.0;
  for (double x : row) s += x;
  for (double& x : row) x /= s;
  const testing::WordDerivedModel model(vocab, words, q, 0.0);

  GPItem it;
  it.item_id = 1;
  it.construction = Construction::NP_S;
  it.sentence = {"a b ca ab bab", "a a ca ab bab"};
  it.critical = {3, 3};
  GPItem same = it;
  same.item_id = 2;
  same.sentence = {"a ab ca b b", "a ab ca b b"};
  const std::vector<GPItem> items{it, same};
  UnigramModel uni;
  uni.add_text("a b ca ab bab");
  const auto preds = stimulus_predictors(items, word_surprisals(model, vocab, stimulus_sentences(items)), uni);
  const double expect = std::log2(q[0 + 1][4] / q[3 + 1][4]);
  EXPECT_GT(expect, 20.0);
  const double d1 = preds.at({1, kAmbiguous}).surprisal[2] - preds.at({1, kUnambiguous}).surprisal[2];
  EXPECT_NEAR(d1, expect, 1e-6);
  EXPECT_EQ(preds.at({2, kAmbiguous}).surprisal[2], preds.at({2, kUnambiguous}).surprisal[2]);
  const auto g = surprisal_gpe(items, Construction::NP_S, preds);
  EXPECT_NEAR(g.effect, d1 / 2.0, 1e-9);
  EXPECT_LE(g.ci_lo, g.effect);
  // Same word in both conditions: length and frequency terms coincide.
  EXPECT_EQ(preds.at({1, kAmbiguous}).length[2], preds.at({1, kUnambiguous}).length[2]);
  EXPECT_EQ(preds.at({1, kAmbiguous}).logfreq[2], preds.at({1, kUnambiguous}).logfreq[2]);
}

TEST(Trend, ClosedForms) {
  const auto three = fit_trend({256, 1024, 4096}, {1, 2, 3});
  EXPECT_NEAR(three.slope, 0.5, 1e-12);
  std::vector<int> v{64, 256, 1024, 4096, 16384};
  std::vector<double> lin;
  for (int x : v) lin.push_back(0.75 * std::log2(x) - 2.0);
  for (double r : fit_trend(v, lin).residuals) EXPECT_LT(std::abs(r), 1e-9);
  const auto flat = fit_trend(v, std::vector<double>(v.size(), 4.0));
  EXPECT_EQ(flat.slope, 0.0);
  EXPECT_NEAR(flat.p, 1.0, 1e-12);
  EXPECT_THROW(fit_trend({64, 256}, {1, 2}), ValidationError);
}

TEST(Exp2, CsvRoundTripAndRun) {
  const auto items = synthetic_gp_items(12, 4);
  Exp2LM lm;
  lm.model_size = "tiny";
  lm.vocab_size = 64;
  lm.filler_fit = exact_filler(2.0);
  lm.score = [&](const std::vector<SentenceText>& sents) {
    std::vector<WordRecord> out;
    std::mt19937_64 r(1);
    std::normal_distribution<double> z(8.0, 2.0);
    for (const auto& s : sents) {
      const auto w = text::split_words(text::normalize(s.text));
      for (std::size_t i = 0; i < w.size(); ++i) {
        WordRecord rec;
        rec.doc_id = s.doc_id;
        rec.sentence_id = s.sentence_id;
        rec.word_pos = static_cast<int>(i + 1);
        rec.word = w[i];
        rec.surprisal_bits = z(r);
        out.push_back(rec);
      }
    }
    return out;
  };
  UnigramModel uni;
  uni.add_text("a b c");
  const auto rows = run_exp2(items, {lm, lm}, uni, 2);
  ASSERT_EQ(rows.size(), 2u * (3 * 3 + 3));
  EXPECT_EQ(rows[9].unit, "bits");
  const auto path = fs::temp_directory_path() / "tokgran_gpe.csv";
  write_gpe_csv(path, rows);
  const auto back = read_gpe_csv(path);
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(back[i].effect, rows[i].effect);
    EXPECT_EQ(back[i].region, rows[i].region);
  }
  fs::remove(path);
}

TEST(Filler, StreamsPaperScaleInput) {
  // 995,814 rows over 1,000 filler items of 10 words.
  const auto dir = temp_dir("tokgran_fillers");
  std::map<long long, SentencePredictors> by_item;
  std::mt19937_64 rng(21);
  for (long long i = 0; i < 1000; ++i) by_item[i] = random_sentence(rng, 10);
  const long long n = 995814;
  {
    std::ofstream out(dir / "fillers.tsv");
    out << "subject_id\titem_id\tword_pos\tword\trt_ms\n";
    std::uniform_real_distribution<double> rt(200.0, 600.0);
    for (long long r = 0; r < n; ++r) {
      const long long item = (r / 10) % 1000, pos = r % 10 + 1;
      out << r / 10000 << '\t' << item << '\t' << pos << "\tw" << pos - 1 << '\t' << rt(rng) << '\n';
    }
  }
  const auto t = read_filler_table(dir / "fillers.tsv", by_item);
  // Positions 1 and 2 have no two-word history.
  long long expect = 0;
  for (long long r = 0; r < n; ++r) expect += r % 10 + 1 >= 3;
  EXPECT_EQ(static_cast<long long>(t.rows()), expect);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace tokgran
