#include "tokgran/rt.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <tuple>

#include "tokgran/common.hpp"
#include "tokgran/text.hpp"
#include "tokgran/tsv.hpp"

namespace tokgran {

std::string to_string(Measure m) {
  switch (m) {
    case Measure::SPR: return "SPR";
    case Measure::SP: return "SP";
    case Measure::FP: return "FP";
    case Measure::GP: return "GP";
  }
  return "?";
}

Measure parse_measure(std::string_view s) {
  if (s == "SPR") return Measure::SPR;
  if (s == "SP") return Measure::SP;
  if (s == "FP") return Measure::FP;
  if (s == "GP") return Measure::GP;
  throw ValidationError("unknown measure '" + std::string(s) + "'");
}

namespace {

const std::vector<std::string> kRtColumns = {"subject_id",   "sentence_id", "doc_id",        "word_pos",
                                             "word",         "measure",     "rt_ms",         "prev_fixated",
                                             "sent_initial", "sent_final",  "line_boundary", "screen_boundary",
                                             "saccade_len"};

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

std::vector<RTObservation> read_rt_tsv(const std::filesystem::path& path) {
  tsv::Reader reader(path, kRtColumns);
  std::vector<std::size_t> c;
  for (const auto& name : kRtColumns) c.push_back(reader.column(name));
  const std::size_t doc_col = reader.column("doc_boundary");
  std::vector<RTObservation> rows;
  reader.for_each([&](const tsv::Row& r) {
    RTObservation o;
    o.subject_id = r.integer(c[0]);
    o.sentence_id = r.integer(c[1]);
    o.doc_id = r.str(c[2]);
    o.word_pos = static_cast<int>(r.integer(c[3]));
    o.word = r.str(c[4]);
    try {
      o.measure = parse_measure(r.str(c[5]));
    } catch (const ValidationError& e) {
      throw ValidationError(r.where() + ": " + e.what());
    }
    o.rt_ms = r.real(c[6]);
    o.prev_fixated = r.flag(c[7]);
    o.sent_initial = r.flag(c[8]);
    o.sent_final = r.flag(c[9]);
    o.line_boundary = r.flag(c[10]);
    o.screen_boundary = r.flag(c[11]);
    o.saccade_len = static_cast<int>(r.integer(c[12]));
    if (doc_col != tsv::Reader::npos) o.doc_boundary = r.flag(doc_col);
    if (o.word_pos < 1) throw ValidationError(r.where() + ": word_pos must be >= 1");
    // Zero marks an unfixated word; filter_et drops it.
    if (o.rt_ms < 0.0 || (o.rt_ms == 0.0 && o.measure == Measure::SPR))
      throw ValidationError(r.where() + ": rt_ms must be positive");
    rows.push_back(std::move(o));
  });
  return rows;
}

void write_rt_tsv(const std::filesystem::path& path, const std::vector<RTObservation>& rows) {
  auto out = open_out(path);
  for (std::size_t i = 0; i < kRtColumns.size(); ++i) out << kRtColumns[i] << '\t';
  out << "doc_boundary\n";
  for (const auto& o : rows) {
    out << o.subject_id << '\t' << o.sentence_id << '\t' << o.doc_id << '\t' << o.word_pos << '\t' << o.word << '\t'
        << to_string(o.measure) << '\t' << tsv::format(o.rt_ms) << '\t' << o.prev_fixated << '\t' << o.sent_initial
        << '\t' << o.sent_final << '\t' << o.line_boundary << '\t' << o.screen_boundary << '\t' << o.saccade_len
        << '\t' << o.doc_boundary << '\n';
  }
}

std::map<long long, int> read_comprehension_tsv(const std::filesystem::path& path) {
  tsv::Reader reader(path, {"subject_id", "correct"});
  const auto s = reader.column("subject_id"), k = reader.column("correct");
  std::map<long long, int> scores;
  reader.for_each([&](const tsv::Row& r) { scores[r.integer(s)] = static_cast<int>(r.integer(k)); });
  return scores;
}

std::vector<FixationEvent> read_fixations_tsv(const std::filesystem::path& path) {
  tsv::Reader reader(path, {"subject_id", "fix_index", "word_index", "duration_ms"});
  const auto s = reader.column("subject_id"), f = reader.column("fix_index"), w = reader.column("word_index"),
             d = reader.column("duration_ms");
  std::vector<FixationEvent> rows;
  reader.for_each([&](const tsv::Row& r) {
    FixationEvent e{r.integer(s), r.integer(f), r.integer(w), r.real(d)};
    if (e.fix_index < 0 || e.word_index < 0) throw ValidationError(r.where() + ": negative index");
    if (!(e.duration_ms > 0.0)) throw ValidationError(r.where() + ": duration_ms must be positive");
    rows.push_back(e);
  });
  return rows;
}

void write_fixations_tsv(const std::filesystem::path& path, const std::vector<FixationEvent>& rows) {
  auto out = open_out(path);
  out << "subject_id\tfix_index\tword_index\tduration_ms\n";
  for (const auto& e : rows)
    out << e.subject_id << '\t' << e.fix_index << '\t' << e.word_index << '\t' << tsv::format(e.duration_ms) << '\n';
}

std::vector<TextWord> layout_text(const std::vector<SentenceText>& sentences, int words_per_line,
                                  int lines_per_screen) {
  if (words_per_line < 1 || lines_per_screen < 1) throw ValidationError("layout needs positive line and screen sizes");
  std::vector<TextWord> out;
  int slot = 0;  // word slot within the current screen
  const int per_screen = words_per_line * lines_per_screen;
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    const auto& st = sentences[s];
    long long sid = 0;
    const auto* b = st.sentence_id.data();
    const auto [p, ec] = std::from_chars(b, b + st.sentence_id.size(), sid);
    if (ec != std::errc{} || p != b + st.sentence_id.size())
      throw ValidationError("sentence id '" + st.sentence_id + "' is not an integer");
    const bool new_doc = s == 0 || sentences[s - 1].doc_id != st.doc_id;
    if (new_doc) {
      if (!out.empty()) out.back().doc_boundary = true;
      slot = 0;
    }
    const auto words = text::split_words(text::normalize(st.text));
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (slot == per_screen) slot = 0;
      TextWord w;
      w.doc_id = st.doc_id;
      w.sentence_id = sid;
      w.word_pos = static_cast<int>(i + 1);
      w.word = words[i];
      w.sent_initial = i == 0;
      w.sent_final = i + 1 == words.size();
      w.line_boundary = slot % words_per_line == 0 || slot % words_per_line == words_per_line - 1;
      w.screen_boundary = slot == 0 || slot == per_screen - 1;
      w.doc_boundary = new_doc && i == 0;
      if (slot == 0 && !out.empty()) {
        // The previous word closed a line and a screen.
        out.back().line_boundary = out.back().screen_boundary = true;
      }
      out.push_back(std::move(w));
      ++slot;
    }
  }
  if (!out.empty()) out.back().doc_boundary = true;
  return out;
}

std::vector<RTObservation> filter_spr(const std::vector<RTObservation>& rows,
                                      const std::map<long long, int>& comprehension) {
  std::vector<RTObservation> out;
  for (const auto& o : rows) {
    if (o.sent_initial || o.sent_final) continue;
    if (o.rt_ms < 100.0 || o.rt_ms > 3000.0) continue;
    const auto it = comprehension.find(o.subject_id);
    if (it != comprehension.end() && it->second < 5) continue;
    out.push_back(o);
  }
  return out;
}

std::vector<RTObservation> compute_et_measures(const std::vector<FixationEvent>& fixations,
                                               const std::vector<TextWord>& text) {
  std::map<long long, std::vector<FixationEvent>> by_subject;
  for (const auto& f : fixations) {
    if (f.word_index < 0 || f.word_index >= static_cast<long long>(text.size()))
      throw ValidationError("fixation on word " + std::to_string(f.word_index) + " outside the text");
    if (!(f.duration_ms > 0.0)) throw ValidationError("fixation durations must be positive");
    by_subject[f.subject_id].push_back(f);
  }
  std::vector<RTObservation> out;
  for (auto& [subject, seq] : by_subject) {
    std::stable_sort(seq.begin(), seq.end(),
                     [](const FixationEvent& a, const FixationEvent& b) { return a.fix_index < b.fix_index; });
    struct Acc {
      std::size_t first = 0;
      bool seen = false;
      double sp = 0.0;
    };
    std::map<long long, Acc> words;
    for (std::size_t k = 0; k < seq.size(); ++k) {
      auto& a = words[seq[k].word_index];
      if (!a.seen) a.first = k, a.seen = true;
      a.sp += seq[k].duration_ms;
    }
    for (const auto& [w, a] : words) {
      const TextWord& tw = text[static_cast<std::size_t>(w)];
      RTObservation base;
      base.subject_id = subject;
      base.sentence_id = tw.sentence_id;
      base.doc_id = tw.doc_id;
      base.word_pos = tw.word_pos;
      base.word = tw.word;
      base.sent_initial = tw.sent_initial;
      base.sent_final = tw.sent_final;
      base.line_boundary = tw.line_boundary;
      base.screen_boundary = tw.screen_boundary;
      base.doc_boundary = tw.doc_boundary;
      bool later_first = false;
      for (std::size_t k = 0; k < a.first; ++k) {
        later_first |= seq[k].word_index > w;
        base.prev_fixated |= seq[k].word_index == w - 1;
      }
      base.saccade_len = a.first == 0 ? 0 : static_cast<int>(std::llabs(w - seq[a.first - 1].word_index));
      if (!later_first) {
        double fp = 0.0, gp = 0.0;
        std::size_t k = a.first;
        for (; k < seq.size() && seq[k].word_index == w; ++k) fp += seq[k].duration_ms;
        gp = fp;
        for (; k < seq.size() && seq[k].word_index <= w; ++k) gp += seq[k].duration_ms;
        auto o = base;
        o.measure = Measure::FP;
        o.rt_ms = fp;
        out.push_back(o);
        o.measure = Measure::GP;
        o.rt_ms = gp;
        out.push_back(o);
      }
      base.measure = Measure::SP;
      base.rt_ms = a.sp;
      out.push_back(base);
    }
  }
  return out;
}

std::vector<RTObservation> filter_et(const std::vector<RTObservation>& rows) {
  std::vector<RTObservation> out;
  for (const auto& o : rows) {
    if (!(o.rt_ms > 0.0) || o.saccade_len > 4) continue;
    if (o.sent_initial || o.sent_final || o.line_boundary || o.screen_boundary || o.doc_boundary) continue;
    out.push_back(o);
  }
  return out;
}

std::string to_string(Partition p) {
  switch (p) {
    case Partition::fit: return "fit";
    case Partition::exploratory: return "exploratory";
    case Partition::heldout: return "heldout";
  }
  return "?";
}

Partition partition_label(long long subject_id, long long sentence_id) {
  if (subject_id < 0 || sentence_id < 0) throw ValidationError("partition ids must be non-negative integers");
  switch ((subject_id % 4 + sentence_id % 4) % 4) {
    case 0:
    case 1: return Partition::fit;
    case 2: return Partition::exploratory;
    default: return Partition::heldout;
  }
}

void UnigramModel::add_text(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) {
      const auto word = text.substr(i, j - i);
      auto it = counts_.find(word);
      if (it == counts_.end()) counts_.emplace(std::string(word), 1);
      else ++it->second;
      ++tokens_;
    }
    i = j;
  }
}

double UnigramModel::surprisal_bits(const std::string& word) const {
  if (tokens_ == 0) throw ValidationError("unigram model trained on an empty corpus");
  const auto it = counts_.find(word);
  const double c = it == counts_.end() ? 0.0 : static_cast<double>(it->second);
  return -std::log2((c + 1.0) / static_cast<double>(tokens_ + static_cast<long long>(counts_.size())));
}

UnigramModel UnigramModel::from_sentences(const std::vector<SentenceText>& sentences) {
  UnigramModel m;
  for (const auto& s : sentences) m.add_text(s.text);
  return m;
}

DataTable assemble_predictors(const std::vector<RTObservation>& rows, const std::vector<WordRecord>& records,
                              const UnigramModel& unigram) {
  std::map<std::tuple<std::string, std::string, int>, std::size_t> index;
  for (std::size_t i = 0; i < records.size(); ++i)
    index.emplace(std::tuple{records[i].doc_id, records[i].sentence_id, records[i].word_pos}, i);
  std::vector<double> rt, len, pos, uni, pf, s, ps, subj, part;
  for (const auto& o : rows) {
    const auto it = index.find({o.doc_id, std::to_string(o.sentence_id), o.word_pos});
    if (it == index.end())
      throw ValidationError("no surprisal for doc " + o.doc_id + " sentence " + std::to_string(o.sentence_id) +
                            " word " + std::to_string(o.word_pos));
    const auto& rec = records[it->second];
    if (rec.word != o.word)
      throw ValidationError("word mismatch at doc " + o.doc_id + " sentence " + std::to_string(o.sentence_id) +
                            " word " + std::to_string(o.word_pos) + ": '" + o.word + "' vs '" + rec.word + "'");
    double prev = 0.0;
    if (it->second > 0 && records[it->second - 1].doc_id == o.doc_id) prev = records[it->second - 1].surprisal_bits;
    rt.push_back(o.rt_ms);
    len.push_back(static_cast<double>(text::char_length(o.word)));
    pos.push_back(o.word_pos);
    uni.push_back(unigram.surprisal_bits(o.word));
    pf.push_back(o.prev_fixated ? 1.0 : 0.0);
    s.push_back(rec.surprisal_bits);
    ps.push_back(prev);
    subj.push_back(static_cast<double>(o.subject_id));
    part.push_back(static_cast<double>(partition_label(o.subject_id, o.sentence_id)));
  }
  DataTable t;
  t.add(col::rt, std::move(rt));
  t.add(col::length, std::move(len));
  t.add(col::word_pos, std::move(pos));
  t.add(col::unigram, std::move(uni));
  t.add(col::prev_fixated, std::move(pf));
  t.add(col::surprisal, std::move(s));
  t.add(col::prev_surprisal, std::move(ps));
  t.add(col::subject, std::move(subj));
  t.add(col::partition, std::move(part));
  return t;
}

ModelSpec baseline_spec(Measure m) {
  ModelSpec s;
  s.response = col::rt;
  s.fixed = {col::length, col::word_pos, col::unigram};
  s.random = {{col::subject, "1"}, {col::subject, col::word_pos}};
  if (m == Measure::SPR) {
    s.random.push_back({col::subject, col::length});
    s.random.push_back({col::subject, col::surprisal});
    s.random.push_back({col::subject, col::prev_surprisal});
  } else {
    s.fixed.push_back(col::prev_fixated);
    s.random.push_back({col::subject, col::surprisal});
  }
  return s;
}

ModelSpec full_spec(Measure m) {
  ModelSpec s = baseline_spec(m);
  s.fixed.push_back(col::surprisal);
  s.fixed.push_back(col::prev_surprisal);
  return s;
}

DeltaLogLik delta_loglik(const DataTable& table, Measure m, const LMEOptions& options) {
  const auto& part = table.col(col::partition);
  std::vector<bool> fit_rows(part.size()), expl_rows(part.size());
  for (std::size_t i = 0; i < part.size(); ++i) {
    fit_rows[i] = part[i] == static_cast<double>(Partition::fit);
    expl_rows[i] = part[i] == static_cast<double>(Partition::exploratory);
  }
  const DataTable fit = table.subset(fit_rows), expl = table.subset(expl_rows);
  if (fit.rows() == 0 || expl.rows() == 0) throw ValidationError("empty fit or exploratory partition");
  DeltaLogLik r;
  r.baseline = simplify_until_converged(baseline_spec(m), fit, options);
  r.full = simplify_until_converged(full_spec(m), fit, options);
  r.delta = loglik_on(r.full, expl) - loglik_on(r.baseline, expl);
  return r;
}

std::vector<Exp1Row> run_exp1(const std::vector<Exp1Corpus>& corpora, const std::vector<Exp1LM>& lms,
                              const UnigramModel& unigram, std::size_t threads, const LMEOptions& options) {
  struct Scored {
    std::vector<WordRecord> records;
    double perplexity = 0.0;
  };
  // Score each corpus once per LM.
  const std::size_t nl = lms.size();
  auto scored = parallel_map(corpora.size() * nl, threads, [&](std::size_t k) {
    Scored s;
    s.records = lms[k % nl].score(corpora[k / nl].sentences);
    s.perplexity = perplexity(s.records);
    return s;
  });
  struct Cell {
    std::size_t corpus, lm;
    Measure measure;
  };
  std::vector<Cell> cells;
  for (std::size_t c = 0; c < corpora.size(); ++c) {
    std::set<Measure> measures;
    for (const auto& o : corpora[c].observations) measures.insert(o.measure);
    for (Measure m : measures)
      for (std::size_t l = 0; l < nl; ++l) cells.push_back({c, l, m});
  }
  return parallel_map(cells.size(), threads, [&](std::size_t i) {
    const Cell& cell = cells[i];
    std::vector<RTObservation> rows;
    for (const auto& o : corpora[cell.corpus].observations)
      if (o.measure == cell.measure) rows.push_back(o);
    const Scored& s = scored[cell.corpus * nl + cell.lm];
    const auto d = delta_loglik(assemble_predictors(rows, s.records, unigram), cell.measure, options);
    const auto& lm = lms[cell.lm];
    Exp1Row r;
    r.model_size = lm.model_size;
    r.vocab_size = lm.vocab_size;
    r.corpus = corpora[cell.corpus].name;
    r.measure = to_string(cell.measure);
    r.phase = lm.phase;
    r.delta_loglik = d.delta;
    r.perplexity = s.perplexity;
    r.removed_baseline = d.baseline.removed;
    r.removed_full = d.full.removed;
    return r;
  });
}

std::vector<Exp1Row> with_size_average(const std::vector<Exp1Row>& rows) {
  std::vector<Exp1Row> out;
  std::map<std::tuple<int, std::string, std::string, std::string>, std::vector<const Exp1Row*>> groups;
  for (const auto& r : rows) {
    if (r.model_size == "average") continue;
    out.push_back(r);
    groups[{r.vocab_size, r.corpus, r.measure, r.phase}].push_back(&r);
  }
  for (const auto& [key, members] : groups) {
    Exp1Row a;
    a.model_size = "average";
    std::tie(a.vocab_size, a.corpus, a.measure, a.phase) = key;
    double d = 0.0, lp = 0.0;
    for (const auto* m : members) {
      d += m->delta_loglik;
      lp += std::log(m->perplexity);
    }
    a.delta_loglik = d / static_cast<double>(members.size());
    a.perplexity = std::exp(lp / static_cast<double>(members.size()));
    out.push_back(a);
  }
  return out;
}

void write_exp1_csv(const std::filesystem::path& path, const std::vector<Exp1Row>& rows) {
  auto out = open_out(path);
  out << "model_size,vocab_size,corpus,measure,phase,delta_loglik,perplexity\n";
  for (const auto& r : rows)
    out << r.model_size << ',' << r.vocab_size << ',' << r.corpus << ',' << r.measure << ',' << r.phase << ','
        << tsv::format(r.delta_loglik) << ',' << tsv::format(r.perplexity) << '\n';
}

std::vector<Exp1Row> read_exp1_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "model_size,vocab_size,corpus,measure,phase,delta_loglik,perplexity")
    throw ValidationError(path.string() + ":1: unexpected header");
  std::vector<Exp1Row> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = tsv::split(line, ',');
    if (f.size() != 7) throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": expected 7 fields");
    Exp1Row r;
    try {
      r.model_size = f[0];
      r.vocab_size = std::stoi(f[1]);
      r.corpus = f[2];
      r.measure = f[3];
      r.phase = f[4];
      r.delta_loglik = std::stod(f[5]);
      r.perplexity = std::stod(f[6]);
    } catch (const std::logic_error&) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": bad number");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace tokgran
