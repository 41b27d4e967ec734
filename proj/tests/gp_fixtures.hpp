#pragma once
// Garden-path fixtures: hand-set stimulus predictors, a filler model with
// known coefficients, and simulated filler reading times.

#include <algorithm>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "tokgran/garden_path.hpp"

namespace tokgran::testing {

inline SentencePredictors random_sentence(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> s(8.0, 3.0), f(-10.0, 2.0);
  std::uniform_int_distribution<int> len(2, 9);
  SentencePredictors p;
  for (int i = 0; i < n; ++i) {
    p.words.push_back("w" + std::to_string(i));
    p.surprisal.push_back(s(rng));
    p.logfreq.push_back(f(rng));
    p.length.push_back(len(rng));
  }
  return p;
}

// Fillers: rt = 250 + 3 s + 1 s1 + 0.5 s2 - 4 f + 2 len + subject + item + noise.
inline DataTable simulate_fillers(std::uint64_t seed, int items, int subjects, double s_effect = 3.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::map<std::string, std::vector<double>> cols;
  std::vector<SentencePredictors> sent;
  std::vector<double> item_u;
  for (int i = 0; i < items; ++i) {
    sent.push_back(random_sentence(rng, 8));
    item_u.push_back(10.0 * z(rng));
  }
  for (int s = 0; s < subjects; ++s) {
    const double u = 20.0 * z(rng);
    for (int i = 0; i < items; ++i) {
      const auto& p = sent[static_cast<std::size_t>(i)];
      for (int w = 3; w <= 8; ++w) {
        const auto k = static_cast<std::size_t>(w - 1);
        const double rt = 250 + s_effect * p.surprisal[k] + p.surprisal[k - 1] + 0.5 * p.surprisal[k - 2] -
                          4 * p.logfreq[k] + 2 * p.length[k] + u + item_u[static_cast<std::size_t>(i)] + 15 * z(rng);
        add_word_row(cols, p, w, rt, s, i);
      }
    }
  }
  return to_table(std::move(cols));
}

// Stimuli with hand-set predictors: both conditions share everything except
// the critical-word surprisal, which is raised by `delta[item]` when ambiguous.
inline std::map<std::pair<int, int>, SentencePredictors> planted(const std::vector<GPItem>& items,
                                                          const std::vector<double>& delta) {
  std::mt19937_64 rng(9);
  std::map<std::pair<int, int>, SentencePredictors> out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& it = items[i];
    const auto base = random_sentence(rng, 12);
    for (int c = 0; c < 2; ++c) {
      // Align the critical word of each condition with the same base slot.
      SentencePredictors s;
      const int shift = it.critical[static_cast<std::size_t>(c)] - it.critical[0];
      for (int k = 0; k < 10; ++k) {
        const auto src = static_cast<std::size_t>(std::max(0, k - shift));
        s.words.push_back(base.words[src]);
        s.surprisal.push_back(base.surprisal[src]);
        s.logfreq.push_back(base.logfreq[src]);
        s.length.push_back(base.length[src]);
      }
      if (c == kAmbiguous) s.surprisal[static_cast<std::size_t>(it.critical[0] - 1)] += delta[i];
      out[{it.item_id, c}] = s;
    }
  }
  return out;
}

inline LMEFit exact_filler(double b_surprisal) {
  LMEFit f;
  f.spec = filler_spec();
  f.beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(f.spec.fixed.size() + 1));
  f.beta(0) = 300.0;
  f.beta(1) = b_surprisal;
  f.beta(2) = 0.7;
  f.beta(4) = -3.0;
  f.beta(7) = 2.0;
  return f;
}

}  // namespace tokgran::testing
