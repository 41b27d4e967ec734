#pragma once
// Exhaustive segmentation enumeration, used as an independent oracle for the
// lattice algorithms. Deliberately naive: plain recursion over a std::map.

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "tokgran/tokenizer.hpp"

namespace tokgran::testing {

struct Segmentation {
  std::vector<std::u32string> pieces;
  double log_prob = 0.0;
};

// Every way to split `text` into entries of `table`; characters with no
// single-character entry fall back to `unk_log_prob`, one per character.
inline std::vector<Segmentation> enumerate_segmentations(const std::map<std::u32string, double>& table,
                                                         double unk_log_prob, const std::u32string& text) {
  std::vector<Segmentation> out;
  Segmentation cur;
  std::function<void(std::size_t)> rec = [&](std::size_t pos) {
    if (pos == text.size()) {
      out.push_back(cur);
      return;
    }
    const std::u32string one(1, text[pos]);
    if (!table.contains(one)) {
      cur.pieces.push_back(U"<unk>");
      cur.log_prob += unk_log_prob;
      rec(pos + 1);
      cur.log_prob -= unk_log_prob;
      cur.pieces.pop_back();
      return;
    }
    for (std::size_t len = 1; pos + len <= text.size(); ++len) {
      auto it = table.find(text.substr(pos, len));
      if (it == table.end()) continue;
      cur.pieces.push_back(it->first);
      cur.log_prob += it->second;
      rec(pos + len);
      cur.log_prob -= it->second;
      cur.pieces.pop_back();
    }
  };
  rec(0);
  return out;
}

inline double log_sum(const std::vector<Segmentation>& segs) {
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& s : segs) hi = std::max(hi, s.log_prob);
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (const auto& s : segs) acc += std::exp(s.log_prob - hi);
  return hi + std::log(acc);
}

inline double best_score(const std::vector<Segmentation>& segs) {
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& s : segs) hi = std::max(hi, s.log_prob);
  return hi;
}

inline std::map<std::u32string, double> table_of(const SubwordVocab& vocab) {
  std::map<std::u32string, double> t;
  for (const auto& p : vocab.pieces()) t[p.text] = p.log_prob;
  return t;
}

// Random vocabulary over the first `alphabet` letters with at most
// `max_entries` entries. With `drop_char` one letter may be left out so that
// the unknown-token path is exercised.
inline SubwordVocab random_vocab(std::mt19937_64& rng, int alphabet, std::size_t max_entries, bool drop_char) {
  std::uniform_real_distribution<double> score(-4.0, 0.0);
  std::map<std::u32string, double> table;
  const int skip = drop_char ? std::uniform_int_distribution<int>(-1, alphabet - 1)(rng) : -1;
  for (int c = 0; c < alphabet; ++c) {
    if (c != skip) table[std::u32string(1, static_cast<char32_t>(U'a' + c))] = score(rng);
  }
  std::uniform_int_distribution<int> letter(0, alphabet - 1);
  std::uniform_int_distribution<int> len(2, 4);
  const std::size_t target = std::uniform_int_distribution<std::size_t>(table.size(), max_entries)(rng);
  for (int attempts = 0; table.size() < target && attempts < 500; ++attempts) {
    std::u32string s;
    const int n = len(rng);
    bool ok = true;
    for (int i = 0; i < n; ++i) {
      const int c = letter(rng);
      if (c == skip) ok = false;
      s.push_back(static_cast<char32_t>(U'a' + c));
    }
    if (ok) table.emplace(s, score(rng));
  }
  std::vector<Piece> pieces;
  for (auto& [s, lp] : table) pieces.push_back({s, lp});
  return SubwordVocab::from_pieces(std::move(pieces));
}

inline std::u32string random_string(std::mt19937_64& rng, int alphabet, std::size_t max_len) {
  const std::size_t n = std::uniform_int_distribution<std::size_t>(0, max_len)(rng);
  std::uniform_int_distribution<int> letter(0, alphabet - 1);
  std::u32string s;
  for (std::size_t i = 0; i < n; ++i) s.push_back(static_cast<char32_t>(U'a' + letter(rng)));
  return s;
}

}  // namespace tokgran::testing
