#include "tokgran/garden_path.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <set>

#include "tokgran/common.hpp"
#include "tokgran/synthetic.hpp"
#include "tokgran/text.hpp"
#include "tokgran/tsv.hpp"

namespace tokgran {

std::string to_string(Construction c) {
  switch (c) {
    case Construction::MV_RR: return "MV/RR";
    case Construction::NP_S: return "NP/S";
    case Construction::NP_Z: return "NP/Z";
  }
  return "?";
}

Construction parse_construction(std::string_view s) {
  for (auto c : kConstructions)
    if (to_string(c) == s) return c;
  throw ValidationError("unknown construction '" + std::string(s) + "'");
}

std::string to_string(Region r) {
  switch (r) {
    case Region::critical: return "critical";
    case Region::spillover1: return "spillover1";
    case Region::spillover2: return "spillover2";
  }
  return "?";
}

Region parse_region(std::string_view s) {
  for (auto r : kRegions)
    if (to_string(r) == s) return r;
  throw ValidationError("unknown region '" + std::string(s) + "'");
}

namespace {

std::vector<std::string> words_of(const std::string& sentence) { return text::split_words(text::normalize(sentence)); }

const char* condition_name(int c) { return c == kAmbiguous ? "ambiguous" : "unambiguous"; }

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

void GPItem::validate() const {
  const std::string id = "item " + std::to_string(item_id);
  std::array<std::vector<std::string>, 2> w = {words_of(sentence[0]), words_of(sentence[1])};
  for (int c = 0; c < 2; ++c) {
    if (critical[c] < 3) throw ValidationError(id + ": the critical word needs two preceding words");
    if (critical[c] + 2 > static_cast<int>(w[c].size()))
      throw ValidationError(id + ": the critical word needs two spillover words");
  }
  if (w[0][static_cast<std::size_t>(critical[0] - 1)] != w[1][static_cast<std::size_t>(critical[1] - 1)])
    throw ValidationError(id + ": critical word differs across conditions");
}

std::vector<GPItem> read_gp_items(const std::filesystem::path& path) {
  tsv::Reader reader(path, {"item_id", "construction", "condition", "sentence", "critical_word_index"});
  const auto ci = reader.column("item_id"), cc = reader.column("construction"), cd = reader.column("condition"),
             cs = reader.column("sentence"), ck = reader.column("critical_word_index");
  std::map<int, GPItem> items;
  std::map<int, std::array<bool, 2>> seen;
  reader.for_each([&](const tsv::Row& r) {
    const int id = static_cast<int>(r.integer(ci));
    Construction c;
    try {
      c = parse_construction(r.str(cc));
    } catch (const ValidationError& e) {
      throw ValidationError(r.where() + ": " + e.what());
    }
    const std::string cond = r.str(cd);
    int k;
    if (cond == "ambiguous") k = kAmbiguous;
    else if (cond == "unambiguous") k = kUnambiguous;
    else throw ValidationError(r.where() + ": condition must be ambiguous or unambiguous");
    auto& item = items[id];
    if (seen[id][static_cast<std::size_t>(k)]) throw ValidationError(r.where() + ": duplicate condition");
    if (seen[id][0] || seen[id][1]) {
      if (item.construction != c) throw ValidationError(r.where() + ": construction differs across conditions");
    }
    seen[id][static_cast<std::size_t>(k)] = true;
    item.item_id = id;
    item.construction = c;
    item.sentence[static_cast<std::size_t>(k)] = r.str(cs);
    item.critical[static_cast<std::size_t>(k)] = static_cast<int>(r.integer(ck));
  });
  std::vector<GPItem> out;
  for (auto& [id, item] : items) {
    if (!seen[id][0] || !seen[id][1])
      throw ValidationError(path.string() + ": item " + std::to_string(id) + " lacks a condition");
    try {
      item.validate();
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ": " + e.what());
    }
    out.push_back(item);
  }
  return out;
}

void write_gp_items(const std::filesystem::path& path, const std::vector<GPItem>& items) {
  auto out = open_out(path);
  out << "item_id\tconstruction\tcondition\tsentence\tcritical_word_index\n";
  for (const auto& it : items)
    for (int c = 0; c < 2; ++c)
      out << it.item_id << '\t' << to_string(it.construction) << '\t' << condition_name(c) << '\t'
          << it.sentence[static_cast<std::size_t>(c)] << '\t' << it.critical[static_cast<std::size_t>(c)] << '\n';
}

std::map<std::pair<std::string, std::string>, SentencePredictors> sentence_predictors(
    const std::vector<WordRecord>& records, const UnigramModel& unigram) {
  std::map<std::pair<std::string, std::string>, SentencePredictors> out;
  for (const auto& r : records) {
    auto& s = out[{r.doc_id, r.sentence_id}];
    if (r.word_pos != static_cast<int>(s.words.size()) + 1)
      throw ValidationError("word records of sentence " + r.sentence_id + " are out of order");
    s.words.push_back(r.word);
    s.surprisal.push_back(r.surprisal_bits);
    s.logfreq.push_back(-unigram.surprisal_bits(r.word));
    s.length.push_back(static_cast<double>(text::char_length(r.word)));
  }
  return out;
}

ModelSpec filler_spec() {
  ModelSpec s;
  s.response = gp::rt;
  for (int k = 0; k < 3; ++k) s.fixed.push_back(gp::surprisal[k]);
  for (int k = 0; k < 3; ++k) s.fixed.push_back(gp::logfreq[k]);
  s.fixed.push_back(gp::length);
  s.fixed.push_back(gp::word_pos);
  s.random = {{gp::subject, "1"}, {gp::item, "1"}};
  return s;
}

void add_word_row(std::map<std::string, std::vector<double>>& cols, const SentencePredictors& s, int word_pos,
                  double rt, long long subject, long long item) {
  if (word_pos < 3 || word_pos > static_cast<int>(s.words.size()))
    throw ValidationError("word position " + std::to_string(word_pos) + " has no two-word history");
  const auto i = static_cast<std::size_t>(word_pos - 1);
  cols[gp::rt].push_back(rt);
  for (std::size_t k = 0; k < 3; ++k) {
    cols[gp::surprisal[k]].push_back(s.surprisal[i - k]);
    cols[gp::logfreq[k]].push_back(s.logfreq[i - k]);
  }
  cols[gp::length].push_back(s.length[i]);
  cols[gp::word_pos].push_back(word_pos);
  cols[gp::subject].push_back(static_cast<double>(subject));
  cols[gp::item].push_back(static_cast<double>(item));
}

DataTable to_table(std::map<std::string, std::vector<double>> cols) {
  DataTable t;
  for (auto& [name, v] : cols) t.add(name, std::move(v));
  return t;
}

DataTable read_filler_table(const std::filesystem::path& path, const std::map<long long, SentencePredictors>& by_item) {
  tsv::Reader reader(path, {"subject_id", "item_id", "word_pos", "word", "rt_ms"});
  const auto cs = reader.column("subject_id"), ci = reader.column("item_id"), cp = reader.column("word_pos"),
             cw = reader.column("word"), cr = reader.column("rt_ms");
  std::map<std::string, std::vector<double>> cols;
  reader.for_each([&](const tsv::Row& r) {
    const auto pos = r.integer(cp);
    if (pos < 1) throw ValidationError(r.where() + ": word_pos must be >= 1");
    if (pos < 3) return;
    const auto item = r.integer(ci);
    const auto it = by_item.find(item);
    if (it == by_item.end()) throw ValidationError(r.where() + ": no filler sentence for item " + std::to_string(item));
    const auto& s = it->second;
    if (pos > static_cast<long long>(s.words.size())) throw ValidationError(r.where() + ": word_pos beyond the sentence");
    if (r.at(cw) != s.words[static_cast<std::size_t>(pos - 1)])
      throw ValidationError(r.where() + ": word '" + r.at(cw) + "' does not match the filler sentence");
    const double rt = r.real(cr);
    if (!(rt > 0.0)) throw ValidationError(r.where() + ": rt_ms must be positive");
    add_word_row(cols, s, static_cast<int>(pos), rt, r.integer(cs), item);
  });
  if (cols.empty()) throw ValidationError(path.string() + ": no usable filler rows");
  return to_table(std::move(cols));
}

std::vector<SentenceText> read_filler_sentences(const std::filesystem::path& path) {
  tsv::Reader reader(path, {"item_id", "sentence"});
  const auto ci = reader.column("item_id"), cs = reader.column("sentence");
  std::vector<SentenceText> out;
  std::set<long long> ids;
  reader.for_each([&](const tsv::Row& r) {
    const auto id = r.integer(ci);
    if (!ids.insert(id).second) throw ValidationError(r.where() + ": duplicate item_id");
    out.push_back({"f" + std::to_string(id), std::to_string(id), r.str(cs)});
  });
  return out;
}

LMEFit fit_filler_model(const DataTable& fillers, const LMEOptions& options) {
  return simplify_until_converged(filler_spec(), fillers, options);
}

std::vector<double> predict_rt(const LMEFit& filler_fit, const DataTable& rows) {
  for (const auto& name : filler_fit.spec.fixed)
    if (!rows.has(name)) throw ValidationError("stimulus rows lack predictor column " + name);
  return predict_fixed(filler_fit, rows);
}

StimulusPredictions predict_stimuli(const LMEFit& filler_fit, const std::vector<GPItem>& items,
                                    const std::map<std::pair<int, int>, SentencePredictors>& predictors) {
  StimulusPredictions out;
  for (const auto& item : items) {
    for (int c = 0; c < 2; ++c) {
      const auto it = predictors.find({item.item_id, c});
      if (it == predictors.end())
        throw ValidationError("no scored sentence for item " + std::to_string(item.item_id) + " " + condition_name(c));
      const auto& s = it->second;
      std::map<std::string, std::vector<double>> cols;
      for (int p = 3; p <= static_cast<int>(s.words.size()); ++p) add_word_row(cols, s, p, 0.0, 0, item.item_id);
      auto& v = out.rt[item.item_id][static_cast<std::size_t>(c)];
      v.assign(s.words.size(), std::numeric_limits<double>::quiet_NaN());
      if (cols.empty()) continue;
      const auto pred = predict_rt(filler_fit, to_table(std::move(cols)));
      for (std::size_t k = 0; k < pred.size(); ++k) v[k + 2] = pred[k];
    }
  }
  return out;
}

GPEEstimate estimate_gpe(const StimulusPredictions& predicted, const std::vector<GPItem>& items,
                         Construction construction, Region region, const GPEOptions& options) {
  if (options.lists < 2) throw ValidationError("estimate_gpe needs at least two lists");
  std::vector<double> rt, amb, list, item;
  for (const auto& it : items) {
    if (it.construction != construction) continue;
    const auto p = predicted.rt.find(it.item_id);
    if (p == predicted.rt.end()) throw ValidationError("no predictions for item " + std::to_string(it.item_id));
    for (int s = 0; s < options.lists; ++s) {
      const int c = (s + it.item_id) % 2 == 0 ? kAmbiguous : kUnambiguous;
      const int idx = it.region_index(static_cast<Condition>(c), region);
      const auto& v = p->second[static_cast<std::size_t>(c)];
      if (idx < 3 || idx > static_cast<int>(v.size()))
        throw ValidationError("region " + to_string(region) + " outside item " + std::to_string(it.item_id));
      rt.push_back(v[static_cast<std::size_t>(idx - 1)]);
      amb.push_back(c == kAmbiguous ? 1.0 : 0.0);
      list.push_back(s);
      item.push_back(it.item_id);
    }
  }
  if (item.size() < 4) throw ValidationError("estimate_gpe needs at least two items of " + to_string(construction));
  DataTable t;
  t.add("rt", std::move(rt));
  t.add("ambiguous", std::move(amb));
  t.add("list", std::move(list));
  t.add("item", std::move(item));
  LMEOptions lo;
  lo.variance_floor = options.variance_floor;
  const auto fit = simplify_until_converged({"rt", {"ambiguous"}, {{"list", "1"}, {"item", "1"}}}, t, lo);
  const auto w = wald(fit, "ambiguous");
  GPEEstimate e;
  e.construction = construction;
  e.region = region;
  e.unit = "ms";
  e.effect = w.estimate;
  e.ci_lo = w.ci_lo;
  e.ci_hi = w.ci_hi;
  e.p = w.p;
  return e;
}

GPEEstimate surprisal_gpe(const std::vector<GPItem>& items, Construction construction,
                          const std::map<std::pair<int, int>, SentencePredictors>& predictors) {
  std::vector<double> diff;
  for (const auto& it : items) {
    if (it.construction != construction) continue;
    std::array<double, 2> s{};
    for (int c = 0; c < 2; ++c) {
      const auto p = predictors.find({it.item_id, c});
      if (p == predictors.end())
        throw ValidationError("no scored sentence for item " + std::to_string(it.item_id) + " " + condition_name(c));
      s[static_cast<std::size_t>(c)] =
          p->second.surprisal.at(static_cast<std::size_t>(it.critical[static_cast<std::size_t>(c)] - 1));
    }
    diff.push_back(s[kAmbiguous] - s[kUnambiguous]);
  }
  const auto ci = t_interval(diff);
  GPEEstimate e;
  e.construction = construction;
  e.region = Region::critical;
  e.unit = "bits";
  e.effect = ci.mean;
  e.ci_lo = ci.ci_lo;
  e.ci_hi = ci.ci_hi;
  e.p = ci.p;
  return e;
}

std::vector<SentenceText> stimulus_sentences(const std::vector<GPItem>& items) {
  std::vector<SentenceText> out;
  for (const auto& it : items)
    for (int c = 0; c < 2; ++c)
      out.push_back({"i" + std::to_string(it.item_id) + "c" + std::to_string(c), "1",
                     it.sentence[static_cast<std::size_t>(c)]});
  return out;
}

std::map<std::pair<int, int>, SentencePredictors> stimulus_predictors(const std::vector<GPItem>& items,
                                                                      const std::vector<WordRecord>& records,
                                                                      const UnigramModel& unigram) {
  const auto by_sentence = sentence_predictors(records, unigram);
  std::map<std::pair<int, int>, SentencePredictors> out;
  for (const auto& it : items) {
    for (int c = 0; c < 2; ++c) {
      const auto p = by_sentence.find({"i" + std::to_string(it.item_id) + "c" + std::to_string(c), "1"});
      if (p == by_sentence.end()) throw ValidationError("stimulus " + std::to_string(it.item_id) + " was not scored");
      out[{it.item_id, c}] = p->second;
    }
  }
  return out;
}

LineFit fit_trend(const std::vector<int>& vocab_sizes, const std::vector<double>& effects) {
  std::vector<double> x;
  for (int v : vocab_sizes) {
    if (v < 1) throw ValidationError("vocabulary sizes must be positive");
    x.push_back(std::log2(static_cast<double>(v)));
  }
  return fit_line(x, effects);
}

std::vector<GPEEstimate> run_exp2(const std::vector<GPItem>& items, const std::vector<Exp2LM>& lms,
                                  const UnigramModel& unigram, std::size_t threads, const GPEOptions& options) {
  std::vector<Construction> present;
  for (auto c : kConstructions)
    for (const auto& it : items)
      if (it.construction == c) {
        present.push_back(c);
        break;
      }
  const auto sentences = stimulus_sentences(items);
  auto per_lm = parallel_map(lms.size(), threads, [&](std::size_t l) {
    const auto& lm = lms[l];
    const auto preds = stimulus_predictors(items, lm.score(sentences), unigram);
    const auto predicted = predict_stimuli(lm.filler_fit, items, preds);
    std::vector<GPEEstimate> out;
    for (auto c : present)
      for (auto r : kRegions) out.push_back(estimate_gpe(predicted, items, c, r, options));
    for (auto c : present) out.push_back(surprisal_gpe(items, c, preds));
    for (auto& e : out) {
      e.model_size = lm.model_size;
      e.vocab_size = lm.vocab_size;
    }
    return out;
  });
  std::vector<GPEEstimate> all;
  for (auto& v : per_lm) all.insert(all.end(), v.begin(), v.end());
  return all;
}

void write_gpe_csv(const std::filesystem::path& path, const std::vector<GPEEstimate>& rows) {
  auto out = open_out(path);
  out << "model_size,vocab_size,construction,region,unit,effect,ci_lo,ci_hi,p\n";
  for (const auto& e : rows)
    out << e.model_size << ',' << e.vocab_size << ',' << to_string(e.construction) << ',' << to_string(e.region) << ','
        << e.unit << ',' << tsv::format(e.effect) << ',' << tsv::format(e.ci_lo) << ',' << tsv::format(e.ci_hi) << ','
        << tsv::format(e.p) << '\n';
}

std::vector<GPEEstimate> read_gpe_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "model_size,vocab_size,construction,region,unit,effect,ci_lo,ci_hi,p")
    throw ValidationError(path.string() + ":1: unexpected header");
  std::vector<GPEEstimate> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = tsv::split(line, ',');
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (f.size() != 9) throw ValidationError(where + ": expected 9 fields");
    GPEEstimate e;
    try {
      e.model_size = f[0];
      e.vocab_size = std::stoi(f[1]);
      e.construction = parse_construction(f[2]);
      e.region = parse_region(f[3]);
      e.unit = f[4];
      e.effect = std::stod(f[5]);
      e.ci_lo = std::stod(f[6]);
      e.ci_hi = std::stod(f[7]);
      e.p = std::stod(f[8]);
    } catch (const std::logic_error& err) {
      throw ValidationError(where + ": " + err.what());
    }
    rows.push_back(std::move(e));
  }
  return rows;
}

std::vector<GPItem> synthetic_gp_items(std::uint64_t seed, int per_construction, int first_id) {
  const SyntheticLanguage lang(seed);
  std::mt19937_64 rng(derive_seed(seed, "synthetic-gp-items"));
  std::vector<GPItem> out;
  int id = first_id;
  for (auto c : kConstructions) {
    for (int k = 0; k < per_construction; ++k) {
      std::vector<std::string> w;
      do {
        w = words_of(lang.sentence(rng));
      } while (w.size() < 6);
      // Critical word at position 4; the unambiguous version marks the
      // boundary before it.
      GPItem it;
      it.item_id = id++;
      it.construction = c;
      std::vector<std::string> unamb = w;
      if (c == Construction::NP_Z) {
        unamb[2] += ",";
        it.critical = {4, 4};
      } else {
        unamb.insert(unamb.begin() + 3, "that");
        it.critical = {4, 5};
      }
      auto join = [](const std::vector<std::string>& v) {
        std::string s;
        for (const auto& x : v) s += (s.empty() ? "" : " ") + x;
        return s;
      };
      it.sentence = {join(w), join(unamb)};
      it.validate();
      out.push_back(it);
    }
  }
  return out;
}

}  // namespace tokgran
