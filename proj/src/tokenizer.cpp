#include "tokgran/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "tokgran/common.hpp"
#include "tokgran/text.hpp"

namespace tokgran {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kUnkPenalty = 10.0;
// Pieces that receive no posterior mass keep this fraction of the total.
constexpr double kCountFloor = 1e-12;
constexpr std::size_t kShards = 64;

const std::u32string kUnkU32 = U"<unk>";
const std::u32string kBosU32 = U"<s>";
const std::u32string kUnkSurface = U"⁇";

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool is_special_text(std::u32string_view s) { return s == kUnkU32 || s == kBosU32; }

// Shard boundaries depend only on the corpus size, so the reduction order
// (and therefore every floating-point sum) is independent of thread count.
template <class PerShard>
auto sharded(std::size_t n, std::size_t threads, PerShard&& per_shard) {
  const std::size_t shards = std::max<std::size_t>(1, std::min(kShards, n));
  return parallel_map(shards, threads, [&](std::size_t s) {
    const std::size_t lo = n * s / shards;
    const std::size_t hi = n * (s + 1) / shards;
    return per_shard(lo, hi);
  });
}

}  // namespace

void TokenizerConfig::validate() const {
  if (target_vocab_size < 3) throw ValidationError("target_vocab_size must be at least 3");
  if (!(char_coverage > 0.0 && char_coverage <= 1.0)) throw ValidationError("char_coverage must lie in (0, 1]");
  if (seed_vocab_multiplier < 1) throw ValidationError("seed_vocab_multiplier must be positive");
  if (!(prune_fraction > 0.0 && prune_fraction < 1.0)) throw ValidationError("prune_fraction must lie in (0, 1)");
  if (em_iterations_per_round < 1) throw ValidationError("em_iterations_per_round must be positive");
  if (max_piece_length < 1) throw ValidationError("max_piece_length must be positive");
}

// ---------------------------------------------------------------------------
// SubwordVocab
// ---------------------------------------------------------------------------

SubwordVocab SubwordVocab::from_pieces(std::vector<Piece> pieces, bool renormalize) {
  SubwordVocab v;
  std::set<std::u32string_view> seen;
  for (const auto& p : pieces) {
    if (p.text.empty()) throw ValidationError("vocabulary entry is empty");
    if (is_special_text(p.text)) throw ValidationError("vocabulary entry collides with a special token");
    if (!std::isfinite(p.log_prob)) throw ValidationError("vocabulary entry has non-finite log-probability");
    if (!seen.insert(p.text).second) throw ValidationError("duplicate vocabulary entry: " + text::u32_to_utf8(p.text));
    if (p.text.size() == 1) v.basic_chars_.insert(p.text.front());
  }
  for (const auto& p : pieces) {
    for (char32_t c : p.text) {
      if (!v.basic_chars_.contains(c)) {
        throw ValidationError("entry '" + text::u32_to_utf8(p.text) + "' is not built from basic characters");
      }
    }
  }
  if (renormalize && !pieces.empty()) {
    double z = kNegInf;
    for (const auto& p : pieces) z = log_add(z, p.log_prob);
    for (auto& p : pieces) p.log_prob -= z;
  }
  std::sort(pieces.begin(), pieces.end(), [](const Piece& a, const Piece& b) {
    if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
    return a.text < b.text;
  });
  v.pieces_ = std::move(pieces);
  v.rebuild_index();
  return v;
}

void SubwordVocab::rebuild_index() {
  trie_.assign(1, TrieNode{});
  ids_.clear();
  max_len_ = 0;
  double min_lp = 0.0;
  for (std::size_t i = 0; i < pieces_.size(); ++i) {
    const auto id = static_cast<TokenId>(i + 2);
    const auto& s = pieces_[i].text;
    ids_.emplace(s, id);
    max_len_ = std::max(max_len_, s.size());
    min_lp = std::min(min_lp, pieces_[i].log_prob);
    int node = 0;
    for (char32_t c : s) {
      auto& kids = trie_[static_cast<std::size_t>(node)].children;
      auto it = kids.find(c);
      if (it == kids.end()) {
        const int next = static_cast<int>(trie_.size());
        kids.emplace(c, next);
        trie_.emplace_back();
        node = next;
      } else {
        node = it->second;
      }
    }
    trie_[static_cast<std::size_t>(node)].piece = id;
  }
  unk_log_prob_ = min_lp - kUnkPenalty;
}

std::u32string_view SubwordVocab::text(TokenId id) const {
  if (id == kUnk) return kUnkU32;
  if (id == kBos) return kBosU32;
  return pieces_.at(static_cast<std::size_t>(id - 2)).text;
}

std::string SubwordVocab::text_utf8(TokenId id) const { return text::u32_to_utf8(text(id)); }

double SubwordVocab::log_prob(TokenId id) const {
  if (id == kUnk) return unk_log_prob_;
  if (id == kBos) return 0.0;
  return pieces_.at(static_cast<std::size_t>(id - 2)).log_prob;
}

bool SubwordVocab::starts_word(TokenId id) const {
  return !is_special(id) && text(id).front() == text::kWhitespaceMarker;
}

std::optional<TokenId> SubwordVocab::find(std::u32string_view piece) const {
  auto it = ids_.find(std::u32string(piece));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::string SubwordVocab::serialize() const {
  std::ostringstream out;
  out << "#version\t" << kFormatVersion << '\n';
  out << "#coverage\t" << format_double(coverage_) << '\n';
  out << "#dummy_prefix\t" << (dummy_prefix_ ? 1 : 0) << '\n';
  std::u32string chars(basic_chars_.begin(), basic_chars_.end());
  out << "#basic_chars\t" << text::u32_to_utf8(chars) << '\n';
  for (const auto& [k, val] : stamps_) out << '#' << k << '\t' << val << '\n';
  out << kUnkText << '\t' << format_double(unk_log_prob_) << '\n';
  out << kBosText << '\t' << format_double(0.0) << '\n';
  for (const auto& p : pieces_) out << text::u32_to_utf8(p.text) << '\t' << format_double(p.log_prob) << '\n';
  return out.str();
}

SubwordVocab SubwordVocab::deserialize(std::string_view contents) {
  std::vector<Piece> pieces;
  std::map<std::string, std::string> headers;
  bool in_header = true;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  int specials = 0;
  while (pos < contents.size()) {
    auto end = contents.find('\n', pos);
    if (end == std::string_view::npos) end = contents.size();
    std::string_view line = contents.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string_view::npos) {
      throw ValidationError("vocabulary line " + std::to_string(line_no) + ": expected token<TAB>value");
    }
    std::string key(line.substr(0, tab));
    std::string value(line.substr(tab + 1));
    if (in_header && key.starts_with('#')) {
      headers[key.substr(1)] = value;
      continue;
    }
    in_header = false;
    if (specials == 0) {
      if (key != kUnkText) throw ValidationError("vocabulary line " + std::to_string(line_no) + ": expected <unk>");
      ++specials;
      continue;
    }
    if (specials == 1) {
      if (key != kBosText) throw ValidationError("vocabulary line " + std::to_string(line_no) + ": expected <s>");
      ++specials;
      continue;
    }
    double lp = 0.0;
    try {
      std::size_t used = 0;
      lp = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ValidationError("vocabulary line " + std::to_string(line_no) + ": bad log-probability");
    }
    pieces.push_back({text::utf8_to_u32(key), lp});
  }
  if (specials < 2) throw ValidationError("vocabulary file lacks the special tokens");
  if (headers["version"] != std::to_string(kFormatVersion)) {
    throw ValidationError("unsupported vocabulary version '" + headers["version"] + "'");
  }
  auto v = from_pieces(std::move(pieces), /*renormalize=*/false);
  v.coverage_ = std::stod(headers.at("coverage"));
  v.dummy_prefix_ = headers.count("dummy_prefix") == 0 || headers["dummy_prefix"] != "0";
  const auto chars = text::utf8_to_u32(headers["basic_chars"]);
  if (std::set<char32_t>(chars.begin(), chars.end()) != v.basic_chars_) {
    throw ValidationError("#basic_chars header disagrees with the single-character entries");
  }
  for (auto& [k, val] : headers) {
    if (k != "version" && k != "coverage" && k != "dummy_prefix" && k != "basic_chars") v.stamps_[k] = val;
  }
  return v;
}

void SubwordVocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << serialize();
}

SubwordVocab SubwordVocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open vocabulary " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

// ---------------------------------------------------------------------------
// Corpus
// ---------------------------------------------------------------------------

TrainingCorpus count_words(const std::vector<std::string>& documents, const TokenizerConfig& config) {
  std::vector<std::size_t> order(documents.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (config.max_documents > 0 && config.max_documents < documents.size()) {
    std::mt19937_64 rng(config.rng_seed);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(config.max_documents);
    std::sort(order.begin(), order.end());
  }
  std::unordered_map<std::u32string, double> counts;
  for (std::size_t d : order) {
    const auto pieces = text::to_piece_form(text::normalize(documents[d]), config.dummy_prefix);
    std::size_t start = 0;
    for (std::size_t i = 1; i <= pieces.size(); ++i) {
      if (i == pieces.size() || pieces[i] == text::kWhitespaceMarker) {
        if (i > start) counts[pieces.substr(start, i - start)] += 1.0;
        start = i;
      }
    }
  }
  TrainingCorpus corpus;
  corpus.reserve(counts.size());
  for (auto& [s, c] : counts) corpus.push_back({s, c});
  std::sort(corpus.begin(), corpus.end(), [](const auto& a, const auto& b) { return a.text < b.text; });
  return corpus;
}

// ---------------------------------------------------------------------------
// Lattice
// ---------------------------------------------------------------------------

SegmentationLattice::SegmentationLattice(const SubwordVocab& vocab, std::u32string_view text, TokenId excluded)
    : length_(text.size()), starting_(text.size() + 1), ending_(text.size() + 1) {
  const double unk_lp = vocab.log_prob(SubwordVocab::kUnk);
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (!vocab.covers(text[i])) {
      edges_.push_back({i, i + 1, SubwordVocab::kUnk, unk_lp});
      continue;
    }
    vocab.for_each_match(text, i, [&](std::size_t end, TokenId id) {
      if (id != excluded) edges_.push_back({i, end, id, vocab.log_prob(id)});
    });
  }
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    starting_[edges_[e].begin].push_back(e);
    ending_[edges_[e].end].push_back(e);
  }
}

const std::vector<double>& SegmentationLattice::forward() const {
  if (alpha_.empty()) {
    alpha_.assign(length_ + 1, kNegInf);
    alpha_[0] = 0.0;
    for (std::size_t j = 1; j <= length_; ++j) {
      double acc = kNegInf;
      for (std::size_t e : ending_[j]) acc = log_add(acc, alpha_[edges_[e].begin] + edges_[e].log_prob);
      alpha_[j] = acc;
    }
  }
  return alpha_;
}

const std::vector<double>& SegmentationLattice::backward() const {
  if (beta_.empty()) {
    beta_.assign(length_ + 1, kNegInf);
    beta_[length_] = 0.0;
    for (std::size_t i = length_; i-- > 0;) {
      double acc = kNegInf;
      for (std::size_t e : starting_[i]) acc = log_add(acc, edges_[e].log_prob + beta_[edges_[e].end]);
      beta_[i] = acc;
    }
  }
  return beta_;
}

std::vector<TokenId> SegmentationLattice::viterbi(double* score) const {
  struct Best {
    double score = kNegInf;
    std::size_t tokens = 0;
    std::size_t edge = 0;
  };
  // Right-to-left so that ties can be broken on the first (leftmost) token.
  std::vector<Best> best(length_ + 1);
  best[length_].score = 0.0;
  for (std::size_t i = length_; i-- > 0;) {
    Best& cur = best[i];
    for (std::size_t e : starting_[i]) {
      const auto& edge = edges_[e];
      const Best& tail = best[edge.end];
      if (tail.score == kNegInf) continue;
      const double s = edge.log_prob + tail.score;
      const std::size_t n = tail.tokens + 1;
      const double tol = 1e-12 * std::max(1.0, std::abs(s));
      bool better = false;
      if (cur.score == kNegInf || s > cur.score + tol) {
        better = true;
      } else if (s >= cur.score - tol) {
        better = n < cur.tokens || (n == cur.tokens && edge.end > edges_[cur.edge].end);
      }
      if (better) cur = {s, n, e};
    }
  }
  if (score) *score = best[0].score;
  std::vector<TokenId> out;
  if (length_ == 0) return out;
  if (best[0].score == kNegInf) throw std::logic_error("segmentation lattice has no complete path");
  for (std::size_t i = 0; i < length_;) {
    const auto& edge = edges_[best[i].edge];
    out.push_back(edge.id);
    i = edge.end;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

SubwordVocab build_seed_vocab(const TrainingCorpus& corpus, const TokenizerConfig& config) {
  config.validate();
  std::unordered_map<char32_t, double> char_counts;
  double total = 0.0;
  for (const auto& w : corpus) {
    for (char32_t c : w.text) char_counts[c] += w.count;
    total += w.count * static_cast<double>(w.text.size());
  }
  if (total <= 0.0) throw ValidationError("tokenizer corpus is empty after normalization");

  std::vector<std::pair<char32_t, double>> chars(char_counts.begin(), char_counts.end());
  std::sort(chars.begin(), chars.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::set<char32_t> kept;
  std::vector<Piece> seed;
  double accumulated = 0.0;
  for (const auto& [c, n] : chars) {
    if (accumulated / total >= config.char_coverage && c != text::kWhitespaceMarker) continue;
    accumulated += n;
    kept.insert(c);
    seed.push_back({std::u32string(1, c), n});
  }
  if (kept.empty()) throw ValidationError("character coverage retains no characters");

  std::unordered_map<std::u32string, double> substrings;
  for (const auto& w : corpus) {
    const auto& s = w.text;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!kept.contains(s[i])) continue;
      for (std::size_t len = 2; len <= config.max_piece_length && i + len <= s.size(); ++len) {
        const char32_t last = s[i + len - 1];
        if (!kept.contains(last) || last == text::kWhitespaceMarker) break;
        substrings[s.substr(i, len)] += w.count;
      }
    }
  }
  std::vector<Piece> candidates;
  candidates.reserve(substrings.size());
  for (auto& [s, n] : substrings) {
    if (!is_special_text(s)) candidates.push_back({s, n});
  }
  const std::size_t seed_size = config.seed_vocab_multiplier * config.target_vocab_size;
  const std::size_t room = seed_size > seed.size() ? seed_size - seed.size() : 0;
  const auto by_count = [](const Piece& a, const Piece& b) {
    if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
    return a.text < b.text;
  };
  if (candidates.size() > room) {
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(room), candidates.end(),
                      by_count);
    candidates.resize(room);
  }
  for (auto& p : candidates) seed.push_back(std::move(p));
  for (auto& p : seed) p.log_prob = std::log(p.log_prob);
  auto vocab = SubwordVocab::from_pieces(std::move(seed));
  vocab.set_coverage(config.char_coverage);
  vocab.set_dummy_prefix(config.dummy_prefix);
  return vocab;
}

ExpectedCounts expected_counts(const SubwordVocab& vocab, const TrainingCorpus& corpus, std::size_t threads) {
  const std::size_t v = vocab.size();
  auto partial = sharded(corpus.size(), threads, [&](std::size_t lo, std::size_t hi) {
    ExpectedCounts acc{std::vector<double>(v, 0.0), 0.0};
    for (std::size_t w = lo; w < hi; ++w) {
      const SegmentationLattice lattice(vocab, corpus[w].text);
      const auto& alpha = lattice.forward();
      const auto& beta = lattice.backward();
      const double z = alpha.back();
      if (z == kNegInf) {
        throw std::logic_error("string not coverable: " + text::u32_to_utf8(corpus[w].text));
      }
      acc.log_likelihood += corpus[w].count * z;
      for (const auto& e : lattice.edges()) {
        const double post = std::exp(alpha[e.begin] + e.log_prob + beta[e.end] - z);
        acc.counts[static_cast<std::size_t>(e.id)] += corpus[w].count * post;
      }
    }
    return acc;
  });
  ExpectedCounts out{std::vector<double>(v, 0.0), 0.0};
  for (const auto& p : partial) {
    out.log_likelihood += p.log_likelihood;
    for (std::size_t i = 0; i < v; ++i) out.counts[i] += p.counts[i];
  }
  return out;
}

double corpus_log_likelihood(const SubwordVocab& vocab, const TrainingCorpus& corpus, std::size_t threads) {
  auto partial = sharded(corpus.size(), threads, [&](std::size_t lo, std::size_t hi) {
    double acc = 0.0;
    for (std::size_t w = lo; w < hi; ++w) {
      acc += corpus[w].count * SegmentationLattice(vocab, corpus[w].text).log_marginal();
    }
    return acc;
  });
  return std::accumulate(partial.begin(), partial.end(), 0.0);
}

SubwordVocab em_round(const SubwordVocab& vocab, const TrainingCorpus& corpus, std::size_t threads) {
  const auto expected = expected_counts(vocab, corpus, threads);
  double total = 0.0;
  for (std::size_t i = 2; i < vocab.size(); ++i) total += expected.counts[i];
  std::vector<Piece> pieces;
  pieces.reserve(vocab.piece_count());
  for (std::size_t i = 2; i < vocab.size(); ++i) {
    const double c = std::max(expected.counts[i], kCountFloor * total);
    pieces.push_back({vocab.pieces()[i - 2].text, std::log(c / total)});
  }
  auto next = SubwordVocab::from_pieces(std::move(pieces));
  next.set_coverage(vocab.coverage());
  next.set_dummy_prefix(vocab.dummy_prefix());
  return next;
}

std::vector<double> prune_scores(const SubwordVocab& vocab, const TrainingCorpus& corpus) {
  const std::size_t v = vocab.size();
  std::vector<double> freq(v, 0.0);
  std::vector<double> containing(v, 0.0);
  double all = 0.0;
  std::vector<TokenId> seen;
  for (const auto& w : corpus) {
    const auto ids = SegmentationLattice(vocab, w.text).viterbi();
    all += w.count;
    seen.clear();
    for (TokenId id : ids) {
      freq[static_cast<std::size_t>(id)] += w.count;
      seen.push_back(id);
    }
    std::sort(seen.begin(), seen.end());
    seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
    for (TokenId id : seen) containing[static_cast<std::size_t>(id)] += w.count;
  }
  double sum = 0.0;
  for (std::size_t i = 2; i < v; ++i) sum += freq[i];

  std::vector<double> scores(v, 0.0);
  for (std::size_t i = 2; i < v; ++i) {
    const auto id = static_cast<TokenId>(i);
    if (vocab.text(id).size() < 2 || freq[i] == 0.0) continue;
    // Removing the piece reassigns its occurrences to its best alternative
    // segmentation under the remaining vocabulary.
    const auto alt = SegmentationLattice(vocab, vocab.text(id), id).viterbi();
    const double logprob_piece = std::log(freq[i]) - std::log(sum);
    const double logsum_alt = std::log(sum + freq[i] * (static_cast<double>(alt.size()) - 1.0));
    double logprob_alt = 0.0;
    for (TokenId a : alt) logprob_alt += std::log(freq[static_cast<std::size_t>(a)] + freq[i]) - logsum_alt;
    const double share = containing[i] / all;
    scores[i] = share * (logprob_piece - logprob_alt);
  }
  return scores;
}

std::size_t pruned_size(std::size_t current, const TokenizerConfig& config) {
  const auto removed = static_cast<std::size_t>(std::floor(static_cast<double>(current) * config.prune_fraction + 1e-9));
  std::size_t keep = current - std::min(removed, current);
  keep = std::max(keep, config.target_vocab_size);
  if (keep >= current && current > config.target_vocab_size) keep = current - 1;
  return std::min(keep, current);
}

SubwordVocab prune_round(const SubwordVocab& vocab, const TrainingCorpus& corpus, const TokenizerConfig& config) {
  if (config.target_vocab_size < vocab.basic_chars().size() + 2) {
    throw ValidationError("target vocabulary size " + std::to_string(config.target_vocab_size) +
                          " is smaller than the basic characters plus two special tokens (" +
                          std::to_string(vocab.basic_chars().size() + 2) + ")");
  }
  if (vocab.size() <= config.target_vocab_size) return vocab;
  const auto scores = prune_scores(vocab, corpus);
  std::vector<TokenId> candidates;
  for (std::size_t i = 2; i < vocab.size(); ++i) {
    if (vocab.text(static_cast<TokenId>(i)).size() >= 2) candidates.push_back(static_cast<TokenId>(i));
  }
  std::sort(candidates.begin(), candidates.end(), [&](TokenId a, TokenId b) {
    const double sa = scores[static_cast<std::size_t>(a)];
    const double sb = scores[static_cast<std::size_t>(b)];
    if (sa != sb) return sa < sb;
    return vocab.text(a) < vocab.text(b);
  });
  const std::size_t remove = std::min(vocab.size() - pruned_size(vocab.size(), config), candidates.size());
  std::vector<bool> drop(vocab.size(), false);
  for (std::size_t k = 0; k < remove; ++k) drop[static_cast<std::size_t>(candidates[k])] = true;
  std::vector<Piece> kept;
  kept.reserve(vocab.piece_count() - remove);
  for (std::size_t i = 2; i < vocab.size(); ++i) {
    if (!drop[i]) kept.push_back(vocab.pieces()[i - 2]);
  }
  auto next = SubwordVocab::from_pieces(std::move(kept));
  next.set_coverage(vocab.coverage());
  next.set_dummy_prefix(vocab.dummy_prefix());
  return next;
}

SubwordVocab train_tokenizer(const TrainingCorpus& corpus, const TokenizerConfig& config) {
  config.validate();
  auto vocab = build_seed_vocab(corpus, config);
  if (config.target_vocab_size < vocab.basic_chars().size() + 2) {
    throw ValidationError("target vocabulary size " + std::to_string(config.target_vocab_size) +
                          " is smaller than the basic characters plus two special tokens (" +
                          std::to_string(vocab.basic_chars().size() + 2) + ")");
  }
  if (vocab.size() < config.target_vocab_size) {
    throw ValidationError("corpus yields only " + std::to_string(vocab.size()) + " candidate entries, fewer than the target " +
                          std::to_string(config.target_vocab_size));
  }
  while (vocab.size() > config.target_vocab_size) {
    for (int i = 0; i < config.em_iterations_per_round; ++i) vocab = em_round(vocab, corpus, config.threads);
    vocab = prune_round(vocab, corpus, config);
  }
  for (int i = 0; i < config.em_iterations_per_round; ++i) vocab = em_round(vocab, corpus, config.threads);
  return vocab;
}

SubwordVocab train_tokenizer(const std::vector<std::string>& documents, const TokenizerConfig& config) {
  config.validate();
  return train_tokenizer(count_words(documents, config), config);
}

// ---------------------------------------------------------------------------
// Encoding
// ---------------------------------------------------------------------------

std::vector<TokenId> encode_viterbi(const SubwordVocab& vocab, std::u32string_view pieces) {
  return SegmentationLattice(vocab, pieces).viterbi();
}

std::vector<TokenId> encode(const SubwordVocab& vocab, std::string_view text, bool add_bos) {
  const auto pieces = text::to_piece_form(text::normalize(text), vocab.dummy_prefix());
  auto ids = encode_viterbi(vocab, pieces);
  if (add_bos) ids.insert(ids.begin(), SubwordVocab::kBos);
  return ids;
}

std::string decode(const SubwordVocab& vocab, const std::vector<TokenId>& ids) {
  std::u32string out;
  for (TokenId id : ids) {
    if (id == SubwordVocab::kBos) continue;
    out += id == SubwordVocab::kUnk ? std::u32string_view(kUnkSurface) : vocab.text(id);
  }
  return text::from_piece_form(out, vocab.dummy_prefix());
}

double marginal_loglik(const SubwordVocab& vocab, std::u32string_view pieces) {
  return SegmentationLattice(vocab, pieces).log_marginal();
}

}  // namespace tokgran
