#include "tokgran/surprisal.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "tokgran/common.hpp"
#include "tokgran/text.hpp"
#include "tokgran/tsv.hpp"

namespace tokgran {

std::vector<bool> boundary_mask(const SubwordVocab& vocab) {
  std::vector<bool> mask(vocab.size(), false);
  mask[SubwordVocab::kBos] = true;
  for (std::size_t id = 2; id < vocab.size(); ++id) mask[id] = vocab.starts_word(static_cast<TokenId>(id));
  return mask;
}

double log_boundary_mass(const RowMatrix& logp, Eigen::Index row, const std::vector<bool>& mask) {
  if (static_cast<std::size_t>(logp.cols()) != mask.size()) {
    throw ValidationError("model vocabulary size " + std::to_string(logp.cols()) + " does not match tokenizer size " +
                          std::to_string(mask.size()));
  }
  double hi = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < logp.cols(); ++k) {
    if (mask[static_cast<std::size_t>(k)]) hi = std::max(hi, logp(row, k));
  }
  if (!std::isfinite(hi)) throw std::domain_error("zero word-boundary probability; the model is degenerate");
  double acc = 0.0;
  for (Eigen::Index k = 0; k < logp.cols(); ++k) {
    if (mask[static_cast<std::size_t>(k)]) acc += std::exp(logp(row, k) - hi);
  }
  return hi + std::log(acc);
}

Alignment align_words(std::string_view text, const SubwordVocab& vocab) {
  const std::string norm = text::normalize(text);
  Alignment out;
  out.tokens = encode(vocab, norm);
  const auto words = text::split_words(norm);
  std::size_t w = 0;
  for (std::size_t i = 0; i < out.tokens.size(); ++i) {
    if (i == 0 || vocab.starts_word(out.tokens[i])) {
      if (w == words.size()) throw std::logic_error("tokenization produced more word starts than words");
      if (i > 0) out.words.back().end = i;
      out.words.push_back({words[w++], i, out.tokens.size()});
    }
  }
  if (w != words.size()) throw std::logic_error("tokenization crosses a word boundary in: " + norm);
  return out;
}

WordLogProb corrected_word_logprob(const NextTokenModel& model, const std::vector<bool>& mask,
                                   const std::vector<TokenId>& context, const std::vector<TokenId>& span) {
  if (context.empty()) throw ValidationError("context must contain at least the start token");
  if (span.empty()) throw ValidationError("empty word span");
  std::vector<TokenId> stream = context;
  stream.insert(stream.end(), span.begin(), span.end());
  const RowMatrix logp = model.next_token_logprobs(stream);
  WordLogProb out;
  const auto b = static_cast<Eigen::Index>(context.size());
  const auto e = static_cast<Eigen::Index>(stream.size());
  for (Eigen::Index i = b; i < e; ++i) out.raw += logp(i - 1, stream[static_cast<std::size_t>(i)]);
  out.corrected = out.raw + log_boundary_mass(logp, e - 1, mask) - log_boundary_mass(logp, b - 1, mask);
  return out;
}

namespace {

struct DocRange {
  std::size_t first = 0;
  std::size_t last = 0;  // exclusive
};

std::vector<WordRecord> score_document(const NextTokenModel& model, const std::vector<bool>& mask,
                                       const SubwordVocab& vocab, const std::vector<SentenceText>& sentences,
                                       DocRange range, std::size_t window) {
  std::vector<Alignment> aligned;
  for (std::size_t s = range.first; s < range.last; ++s) aligned.push_back(align_words(sentences[s].text, vocab));

  std::vector<WordRecord> out;
  auto emit = [&](const RowMatrix& logp, const std::vector<TokenId>& stream, std::size_t offset, std::size_t s) {
    const auto& a = aligned[s - range.first];
    for (std::size_t w = 0; w < a.words.size(); ++w) {
      const auto& span = a.words[w];
      WordRecord r;
      r.doc_id = sentences[s].doc_id;
      r.sentence_id = sentences[s].sentence_id;
      r.word_pos = static_cast<int>(w) + 1;
      r.word = span.word;
      r.tokens.assign(a.tokens.begin() + static_cast<std::ptrdiff_t>(span.begin),
                      a.tokens.begin() + static_cast<std::ptrdiff_t>(span.end));
      r.token_offset = offset + span.begin;
      const auto b = static_cast<Eigen::Index>(offset + span.begin);
      const auto e = static_cast<Eigen::Index>(offset + span.end);
      for (Eigen::Index i = b; i < e; ++i) r.raw_logprob += logp(i - 1, stream[static_cast<std::size_t>(i)]);
      r.corrected_logprob = r.raw_logprob + log_boundary_mass(logp, e - 1, mask) - log_boundary_mass(logp, b - 1, mask);
      r.surprisal_bits = -r.corrected_logprob / std::numbers::ln2;
      out.push_back(std::move(r));
    }
  };

  if (window == 0) {
    std::vector<TokenId> stream{SubwordVocab::kBos};
    std::vector<std::size_t> offsets;
    for (const auto& a : aligned) {
      offsets.push_back(stream.size());
      stream.insert(stream.end(), a.tokens.begin(), a.tokens.end());
    }
    const RowMatrix logp = model.next_token_logprobs(stream);
    for (std::size_t s = range.first; s < range.last; ++s) emit(logp, stream, offsets[s - range.first], s);
    return out;
  }
  std::vector<TokenId> history;
  for (std::size_t s = range.first; s < range.last; ++s) {
    std::vector<TokenId> stream{SubwordVocab::kBos};
    const std::size_t keep = std::min(window, history.size());
    stream.insert(stream.end(), history.end() - static_cast<std::ptrdiff_t>(keep), history.end());
    const std::size_t offset = stream.size();
    const auto& toks = aligned[s - range.first].tokens;
    stream.insert(stream.end(), toks.begin(), toks.end());
    emit(model.next_token_logprobs(stream), stream, offset, s);
    history.insert(history.end(), toks.begin(), toks.end());
  }
  return out;
}

}  // namespace

std::vector<WordRecord> word_surprisals(const NextTokenModel& model, const SubwordVocab& vocab,
                                        const std::vector<SentenceText>& sentences, const SurprisalOptions& options) {
  if (static_cast<std::size_t>(model.vocab_size()) != vocab.size()) {
    throw ValidationError("model vocabulary size " + std::to_string(model.vocab_size()) +
                          " does not match tokenizer size " + std::to_string(vocab.size()));
  }
  const auto mask = boundary_mask(vocab);
  std::vector<DocRange> docs;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (i == 0 || sentences[i].doc_id != sentences[i - 1].doc_id) docs.push_back({i, i});
    docs.back().last = i + 1;
  }
  auto parts = parallel_map(docs.size(), options.threads, [&](std::size_t d) {
    return score_document(model, mask, vocab, sentences, docs[d], options.context_window);
  });
  std::vector<WordRecord> out;
  for (auto& p : parts) {
    for (auto& r : p) out.push_back(std::move(r));
  }
  return out;
}

double perplexity(const std::vector<WordRecord>& records) {
  if (records.empty()) throw ValidationError("perplexity of an empty corpus");
  double total = 0.0;
  for (const auto& r : records) total += r.corrected_logprob;
  return std::exp(-total / static_cast<double>(records.size()));
}

double mean_surprisal_bits(const std::vector<WordRecord>& records) {
  if (records.empty()) throw ValidationError("mean surprisal of an empty corpus");
  double total = 0.0;
  for (const auto& r : records) total += r.surprisal_bits;
  return total / static_cast<double>(records.size());
}

double corpus_perplexity(const NextTokenModel& model, const SubwordVocab& vocab,
                         const std::vector<SentenceText>& sentences, const SurprisalOptions& options) {
  return perplexity(word_surprisals(model, vocab, sentences, options));
}

void write_surprisal_tsv(const std::filesystem::path& path, const std::vector<WordRecord>& records) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "doc_id\tsentence_id\tword_pos\tword\tn_tokens\tsurprisal_bits\traw_logprob\tcorrected_logprob\n";
  for (const auto& r : records) {
    os << r.doc_id << '\t' << r.sentence_id << '\t' << r.word_pos << '\t' << r.word << '\t' << r.tokens.size() << '\t'
       << tsv::format(r.surprisal_bits) << '\t' << tsv::format(r.raw_logprob) << '\t'
       << tsv::format(r.corrected_logprob) << '\n';
  }
}

std::vector<WordRecord> read_surprisal_tsv(const std::filesystem::path& path) {
  tsv::Reader reader(path, {"doc_id", "sentence_id", "word_pos", "word", "n_tokens", "surprisal_bits", "raw_logprob",
                            "corrected_logprob"});
  const auto c_doc = reader.column("doc_id"), c_sent = reader.column("sentence_id"),
             c_pos = reader.column("word_pos"), c_word = reader.column("word"), c_n = reader.column("n_tokens"),
             c_s = reader.column("surprisal_bits"), c_raw = reader.column("raw_logprob"),
             c_cor = reader.column("corrected_logprob");
  std::vector<WordRecord> out;
  reader.for_each([&](const tsv::Row& row) {
    WordRecord r;
    r.doc_id = row.str(c_doc);
    r.sentence_id = row.str(c_sent);
    r.word_pos = static_cast<int>(row.integer(c_pos));
    r.word = row.str(c_word);
    r.tokens.resize(static_cast<std::size_t>(row.integer(c_n)));
    r.surprisal_bits = row.real(c_s);
    r.raw_logprob = row.real(c_raw);
    r.corrected_logprob = row.real(c_cor);
    out.push_back(std::move(r));
  });
  return out;
}

std::vector<SentenceText> read_sentences(const std::filesystem::path& path) {
  std::ifstream probe(path);
  if (!probe) throw ValidationError("cannot open " + path.string());
  std::string first;
  std::getline(probe, first);
  std::vector<SentenceText> out;
  if (first.rfind("doc_id\t", 0) == 0) {
    tsv::Reader reader(path, {"doc_id", "sentence_id", "text"});
    const auto cd = reader.column("doc_id"), cs = reader.column("sentence_id"), ct = reader.column("text");
    reader.for_each([&](const tsv::Row& row) { out.push_back({row.str(cd), row.str(cs), row.str(ct)}); });
    return out;
  }
  std::size_t n = 0;
  for (const auto& line : text::read_documents(path)) out.push_back({"0", std::to_string(++n), line});
  return out;
}

void write_sentences(const std::filesystem::path& path, const std::vector<SentenceText>& sentences) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "doc_id\tsentence_id\ttext\n";
  for (const auto& s : sentences) {
    if (s.text.find_first_of("\t\n") != std::string::npos) throw ValidationError("sentence text contains a tab or newline");
    out << s.doc_id << '\t' << s.sentence_id << '\t' << s.text << '\n';
  }
}

}  // namespace tokgran
