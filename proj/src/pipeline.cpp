#include "tokgran/pipeline.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <json.hpp>

#include <fstream>
#include <memory>
#include <random>
#include <sstream>

#include "tokgran/common.hpp"
#include "tokgran/garden_path.hpp"
#include "tokgran/report.hpp"
#include "tokgran/synthetic.hpp"

namespace tokgran {
namespace {

namespace fs = std::filesystem;

std::string hex64(std::uint64_t h) { return fmt::format("{:016x}", h); }

std::string file_hash(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return hex64(fnv1a64(ss.str()));
}

std::map<std::string, std::string> stamps(const RunConfig& c) {
  return {{"config_hash", c.hash_hex()}, {"seed", std::to_string(c.seed)}};
}

// Documents as token streams: consecutive sentences with one doc_id are
// joined with spaces.
std::vector<std::vector<TokenId>> corpus_streams(const SubwordVocab& vocab, const std::vector<SentenceText>& corpus) {
  std::vector<std::string> docs;
  std::string current;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (i > 0 && corpus[i].doc_id != corpus[i - 1].doc_id) {
      docs.push_back(std::move(current));
      current.clear();
    }
    current += (current.empty() ? "" : " ") + corpus[i].text;
  }
  if (!current.empty()) docs.push_back(std::move(current));
  std::vector<std::vector<TokenId>> out;
  for (const auto& d : docs) out.push_back(encode(vocab, d, true));
  return out;
}

struct GridLM {
  std::string model_size;
  int vocab_size = 0;
  std::string phase;
  std::shared_ptr<const SubwordVocab> vocab;
  std::shared_ptr<const SsmLanguageModel> model;
};

std::function<std::vector<WordRecord>(const std::vector<SentenceText>&)> scorer(const RunConfig& c, const GridLM& lm) {
  SurprisalOptions opts;
  opts.context_window = c.context_window;
  return [opts, vocab = lm.vocab, model = lm.model](const std::vector<SentenceText>& s) {
    return word_surprisals(*model, *vocab, s, opts);
  };
}

// Tokenizers and LMs for every grid cell with a phase in `phases`, saved
// under <out>/models.
std::vector<GridLM> build_grid(const RunConfig& c, const std::vector<SentenceText>& corpus,
                               const std::vector<std::string>& phases, RunResult& result) {
  const fs::path dir = c.out / "models";
  fs::create_directories(dir);
  const auto& vs = c.grid.vocab_sizes;
  auto vocabs = parallel_map(vs.size(), c.threads, [&](std::size_t i) {
    spdlog::info("training tokenizer |V|={}", vs[i]);
    return std::make_shared<const SubwordVocab>(build_tokenizer(c, corpus, vs[i]));
  });
  for (std::size_t i = 0; i < vs.size(); ++i) {
    const auto p = dir / fmt::format("vocab_{}.txt", vs[i]);
    vocabs[i]->save(p);
    result.artifacts.push_back(p);
  }

  struct Job {
    std::size_t v;
    std::string size;
  };
  std::vector<Job> jobs;
  for (std::size_t v = 0; v < vs.size(); ++v)
    for (const auto& m : c.grid.model_sizes) jobs.push_back({v, m});
  const bool want_init = std::find(phases.begin(), phases.end(), "init") != phases.end();
  const bool want_trained = std::find(phases.begin(), phases.end(), "trained") != phases.end();

  struct Built {
    LMParameters init, trained;
    std::vector<LossRecord> trace;
  };
  auto built = parallel_map(jobs.size(), c.threads, [&](std::size_t j) {
    const auto& job = jobs[j];
    const SubwordVocab& vocab = *vocabs[job.v];
    Built b;
    b.init = build_lm(c, vocab, job.size, "init", corpus);
    if (want_trained) {
      spdlog::info("training {} LM |V|={}", job.size, vs[job.v]);
      RunConfig one = c;
      one.threads = 1;
      b.trained = build_lm(one, vocab, job.size, "trained", corpus, &b.trace);
    }
    return b;
  });

  std::vector<GridLM> out;
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    const auto& job = jobs[j];
    const int v = vs[job.v];
    if (want_init) {
      out.push_back({job.size, v, "init", vocabs[job.v], std::make_shared<const SsmLanguageModel>(built[j].init)});
    }
    if (want_trained) {
      const auto ckpt = dir / fmt::format("lm_{}_{}.ckpt", job.size, v);
      const auto loss = dir / fmt::format("loss_{}_{}.tsv", job.size, v);
      save_checkpoint(ckpt, built[j].trained);
      write_loss_trace(loss, built[j].trace);
      result.artifacts.push_back(ckpt);
      result.artifacts.push_back(loss);
      out.push_back(
          {job.size, v, "trained", vocabs[job.v], std::make_shared<const SsmLanguageModel>(built[j].trained)});
    }
  }
  return out;
}

void write_manifest(const RunConfig& c, RunResult& result, const nlohmann::json& metrics) {
  nlohmann::json m;
  m["subcommand"] = c.subcommand;
  m["config_hash"] = c.hash_hex();
  m["seed"] = c.seed;
  m["config"] = c.settings;
  m["config"].erase("run.out");
  auto& arts = m["artifacts"] = nlohmann::json::array();
  for (const auto& p : result.artifacts) {
    arts.push_back({{"path", fs::relative(p, c.out).generic_string()}, {"fnv1a64", file_hash(p)}});
  }
  m["warnings"] = result.warnings;
  m["metrics"] = metrics;
  const auto path = c.out / "manifest.json";
  std::ofstream out(path, std::ios::binary);
  out << m.dump(2) << "\n";
}

RunResult run_train_tokenizer(const RunConfig& c, nlohmann::json& metrics) {
  RunResult r;
  const auto corpus = read_sentences(c.paths.corpus);
  const int target = static_cast<int>(c.tokenizer.target_vocab_size);
  SubwordVocab vocab = build_tokenizer(c, corpus, target);
  for (const auto& [k, v] : stamps(c)) vocab.stamps()[k] = v;
  const auto path = c.out / fmt::format("vocab_{}.txt", target);
  vocab.save(path);
  r.artifacts.push_back(path);
  // Granularity of the result on its own training text.
  std::size_t tokens = 0, words = 0;
  for (const auto& s : corpus) {
    tokens += encode(vocab, s.text).size();
    std::istringstream in(s.text);
    std::string w;
    while (in >> w) ++words;
  }
  metrics["vocab_size"] = vocab.size();
  metrics["tokens_per_word"] = words ? static_cast<double>(tokens) / static_cast<double>(words) : 0.0;
  spdlog::info("vocabulary of {} entries, {:.3f} tokens per word", vocab.size(),
               metrics["tokens_per_word"].get<double>());
  return r;
}

RunResult run_train_lm(const RunConfig& c, nlohmann::json& metrics) {
  RunResult r;
  const auto corpus = read_sentences(c.paths.corpus);
  const auto vocab = SubwordVocab::load(c.paths.vocab);
  std::vector<LossRecord> trace;
  const auto params = build_lm(c, vocab, c.model_size, "trained", corpus, &trace);
  const auto v = vocab.size();
  const auto ckpt = c.out / fmt::format("lm_{}_{}.ckpt", c.model_size, v);
  const auto loss = c.out / fmt::format("loss_{}_{}.tsv", c.model_size, v);
  save_checkpoint(ckpt, params);
  write_loss_trace(loss, trace);
  r.artifacts = {ckpt, loss};
  metrics["parameters"] = count_params(params.config);
  if (!trace.empty()) metrics["final_loss"] = trace.back().loss;
  return r;
}

RunResult run_surprisal(const RunConfig& c, nlohmann::json& metrics) {
  RunResult r;
  const auto vocab = SubwordVocab::load(c.paths.vocab);
  const SsmLanguageModel model(load_checkpoint(c.paths.checkpoint));
  if (static_cast<std::size_t>(model.vocab_size()) != vocab.size()) {
    throw ValidationError(fmt::format("checkpoint vocabulary ({}) does not match the tokenizer ({})",
                                      model.vocab_size(), vocab.size()));
  }
  SurprisalOptions opts;
  opts.context_window = c.context_window;
  opts.threads = c.threads;
  const auto records = word_surprisals(model, vocab, read_sentences(c.paths.sentences), opts);
  const auto path = c.out / "surprisal.tsv";
  write_surprisal_tsv(path, records);
  r.artifacts.push_back(path);
  metrics["words"] = records.size();
  metrics["perplexity"] = perplexity(records);
  spdlog::info("{} words, perplexity {:.3f}", records.size(), perplexity(records));
  return r;
}

RunResult run_exp1_cmd(const RunConfig& c) {
  RunResult r;
  const auto corpus = read_sentences(c.paths.corpus);
  std::vector<Exp1Corpus> corpora;
  for (const auto& src : c.corpora) {
    corpora.push_back(load_exp1_corpus(src));
    spdlog::info("corpus {}: {} observations after filtering", src.name, corpora.back().observations.size());
  }
  const auto grid = build_grid(c, corpus, c.grid.phases, r);
  std::vector<Exp1LM> lms;
  for (const auto& g : grid) lms.push_back({g.model_size, g.vocab_size, g.phase, scorer(c, g)});
  const auto unigram = UnigramModel::from_sentences(corpus);
  const auto rows = run_exp1(corpora, lms, unigram, c.threads);
  for (const auto& row : rows) {
    std::string removed;
    for (const auto& t : row.removed_full) removed += " " + t.label();
    spdlog::info("{} {} {} |V|={} {}: dLL={:.3f} ppl={:.2f}{}", row.corpus, row.measure, row.model_size,
                 row.vocab_size, row.phase, row.delta_loglik, row.perplexity,
                 removed.empty() ? "" : ", dropped" + removed);
  }
  const auto csv = c.out / "exp1.csv";
  write_exp1_csv(csv, rows);
  auto fig = exp1_figure(summarize_exp1(rows, r.warnings));
  fig.stamps = stamps(c);
  const auto svg = c.out / "exp1.svg";
  write_svg(svg, fig);
  r.artifacts.push_back(csv);
  r.artifacts.push_back(svg);
  return r;
}

RunResult run_exp2_cmd(const RunConfig& c) {
  RunResult r;
  const auto corpus = read_sentences(c.paths.corpus);
  const auto items = read_gp_items(c.paths.stimuli);
  const auto fillers = read_filler_sentences(c.paths.filler_sentences);
  const auto unigram = UnigramModel::from_sentences(corpus);
  const bool trained = std::find(c.grid.phases.begin(), c.grid.phases.end(), "trained") != c.grid.phases.end();
  const std::string phase = trained ? "trained" : "init";
  spdlog::info("experiment 2 on {} LMs", phase);
  const auto grid = build_grid(c, corpus, {phase}, r);

  auto lms = parallel_map(grid.size(), c.threads, [&](std::size_t i) {
    Exp2LM lm;
    lm.model_size = grid[i].model_size;
    lm.vocab_size = grid[i].vocab_size;
    lm.score = scorer(c, grid[i]);
    std::map<long long, SentencePredictors> by_item;
    for (auto& [key, s] : sentence_predictors(lm.score(fillers), unigram)) by_item[std::stoll(key.second)] = s;
    lm.filler_fit = fit_filler_model(read_filler_table(c.paths.filler_rt, by_item));
    return lm;
  });
  for (const auto& lm : lms) {
    const auto w = wald(lm.filler_fit, gp::surprisal[0]);
    spdlog::info("{} |V|={}: filler surprisal slope {:.3f} ms/bit", lm.model_size, lm.vocab_size, w.estimate);
  }
  GPEOptions gpe = c.gpe;
  const auto rows = run_exp2(items, lms, unigram, c.threads, gpe);
  const auto csv = c.out / "gpe.csv";
  write_gpe_csv(csv, rows);
  auto fig = gpe_figure(rows, gpe_trends(rows), r.warnings);
  fig.stamps = stamps(c);
  const auto svg = c.out / "gpe.svg";
  write_svg(svg, fig);
  r.artifacts.push_back(csv);
  r.artifacts.push_back(svg);
  return r;
}

RunResult run_simulate(const RunConfig& c) {
  RunResult r;
  const auto& s = c.simulate;
  const SyntheticLanguage lang(c.seed);
  auto add = [&](const fs::path& p) { r.artifacts.push_back(p); };

  {
    const auto p = c.out / "corpus.txt";
    std::ofstream out(p, std::ios::binary);
    out << synthetic_text(c.seed, s.corpus_bytes, "corpus");
    add(p);
  }
  // Reading-time texts come from separate draws of the same language.
  const auto spr_text = synthetic_documents(c.seed, s.docs, s.sentences_per_doc, "spr-text");
  const auto spr = simulate_spr(derive_seed(c.seed, "spr"), lang, spr_text, s.subjects, {});
  write_sentences(c.out / "spr_sentences.tsv", spr.sentences);
  write_rt_tsv(c.out / "spr_rt.tsv", spr.observations);
  {
    std::ofstream out(c.out / "spr_comprehension.tsv", std::ios::binary);
    out << "subject_id\tcorrect\n";
    for (const auto& [subj, correct] : spr.comprehension) out << subj << '\t' << correct << '\n';
  }
  const auto et_text = synthetic_documents(c.seed, s.docs, s.sentences_per_doc, "et-text");
  const auto et = simulate_et(derive_seed(c.seed, "et"), lang, et_text, s.subjects, {});
  write_sentences(c.out / "et_sentences.tsv", et.sentences);
  write_fixations_tsv(c.out / "et_fixations.tsv", et.fixations);
  for (const char* f : {"spr_sentences.tsv", "spr_rt.tsv", "spr_comprehension.tsv", "et_sentences.tsv",
                        "et_fixations.tsv"}) {
    add(c.out / f);
  }

  write_gp_items(c.out / "gp_stimuli.tsv", synthetic_gp_items(c.seed, s.gp_items));
  add(c.out / "gp_stimuli.tsv");

  // Fillers: the same generative reading-time model as the corpora.
  std::mt19937_64 rng(derive_seed(c.seed, "fillers"));
  std::vector<std::string> filler;
  for (int i = 0; i < s.filler_items; ++i) filler.push_back(lang.sentence(rng));
  {
    std::ofstream out(c.out / "filler_sentences.tsv", std::ios::binary);
    out << "item_id\tsentence\n";
    for (int i = 0; i < s.filler_items; ++i) out << i + 1 << '\t' << filler[static_cast<std::size_t>(i)] << '\n';
  }
  {
    const RtEffects fx;
    std::normal_distribution<double> subj(0.0, fx.subject_sd), noise(0.0, fx.noise_sd);
    std::ofstream out(c.out / "filler_rt.tsv", std::ios::binary);
    out << "subject_id\titem_id\tword_pos\tword\trt_ms\n";
    for (int subject = 1; subject <= s.filler_subjects; ++subject) {
      const double u = subj(rng);
      for (int i = 0; i < s.filler_items; ++i) {
        std::istringstream in(filler[static_cast<std::size_t>(i)]);
        std::string w;
        int pos = 0;
        while (in >> w) {
          ++pos;
          const double mu = fx.intercept + fx.length * static_cast<double>(w.size()) -
                            fx.unigram * lang.log2_frequency(w) + u;
          out << subject << '\t' << i + 1 << '\t' << pos << '\t' << w << '\t'
              << fmt::format("{:.1f}", std::max(50.0, mu + noise(rng))) << '\n';
        }
      }
    }
  }
  add(c.out / "filler_sentences.tsv");
  add(c.out / "filler_rt.tsv");

  // A config that runs both experiments on this bundle.
  {
    std::ofstream out(c.out / "config.ini", std::ios::binary);
    out << "[paths]\ncorpus = corpus.txt\nstimuli = gp_stimuli.tsv\nfiller_sentences = filler_sentences.tsv\n"
           "filler_rt = filler_rt.tsv\n\n"
           "[tokenizer]\nmax_documents = 2000\n\n"
           "[training]\nwarmup_steps = 20\ntotal_steps = 200\nbatch_size = 8\nseq_len = 64\nmax_lr = 3e-3\n\n"
           "[grid]\nvocab_sizes = 64,256,1024\nmodel_sizes = tiny\nphases = init,trained\n\n"
           "[exp1]\ncorpora = spr, et\n\n"
           "[corpus_spr]\ntype = spr\nsentences = spr_sentences.tsv\nrt = spr_rt.tsv\n"
           "comprehension = spr_comprehension.tsv\n\n"
           "[corpus_et]\ntype = et\nsentences = et_sentences.tsv\nfixations = et_fixations.tsv\n";
    add(c.out / "config.ini");
  }
  return r;
}

}  // namespace

SubwordVocab build_tokenizer(const RunConfig& config, const std::vector<SentenceText>& corpus, int vocab_size) {
  TokenizerConfig tc = config.tokenizer;
  tc.target_vocab_size = static_cast<std::size_t>(vocab_size);
  tc.rng_seed = derive_seed(config.seed, fmt::format("tokenizer:{}", vocab_size));
  std::vector<std::string> docs;
  docs.reserve(corpus.size());
  for (const auto& s : corpus) docs.push_back(s.text);
  auto vocab = train_tokenizer(docs, tc);
  for (const auto& [k, v] : stamps(config)) vocab.stamps()[k] = v;
  return vocab;
}

LMParameters build_lm(const RunConfig& config, const SubwordVocab& vocab, const std::string& model_size,
                      const std::string& phase, const std::vector<SentenceText>& corpus, std::vector<LossRecord>* trace) {
  const int v = static_cast<int>(vocab.size());
  LMConfig lc = LMConfig::named(model_size, v);
  lc.precision = config.precision;
  auto params = init_params(lc, derive_seed(config.seed, fmt::format("lm-init:{}:{}", model_size, v)));
  if (phase == "init") return params;
  if (phase != "trained") throw ValidationError("unknown phase '" + phase + "'");
  TrainOptions opts;
  opts.seed = derive_seed(config.seed, fmt::format("lm-train:{}:{}", model_size, v));
  opts.threads = config.threads;
  opts.on_step = [](const LossRecord& rec) {
    if (rec.step % 100 == 0) spdlog::debug("step {} lr {:.3g} loss {:.4f}", rec.step, rec.lr, rec.loss);
  };
  auto result = train(std::move(params), corpus_streams(vocab, corpus), config.training, opts);
  if (trace) *trace = std::move(result.trace);
  return std::move(result.params);
}

Exp1Corpus load_exp1_corpus(const CorpusSource& source) {
  Exp1Corpus c;
  c.name = source.name;
  c.sentences = read_sentences(source.sentences);
  if (source.type == "spr") {
    std::map<long long, int> comprehension;
    if (!source.comprehension.empty()) comprehension = read_comprehension_tsv(source.comprehension);
    c.observations = filter_spr(read_rt_tsv(source.rt), comprehension);
  } else if (source.type == "et") {
    c.observations = filter_et(compute_et_measures(read_fixations_tsv(source.fixations), layout_text(c.sentences)));
  } else {
    throw ValidationError("corpus " + source.name + ": type must be spr or et");
  }
  if (c.observations.empty()) throw ValidationError("corpus " + source.name + " has no observations after filtering");
  return c;
}

RunResult run(const RunConfig& config) {
  config.validate();
  fs::create_directories(config.out);
  spdlog::info("{}: config {} seed {}", config.subcommand, config.hash_hex(), config.seed);
  nlohmann::json metrics = nlohmann::json::object();
  RunResult r;
  const auto& cmd = config.subcommand;
  if (cmd == "train-tokenizer") {
    r = run_train_tokenizer(config, metrics);
  } else if (cmd == "train-lm") {
    r = run_train_lm(config, metrics);
  } else if (cmd == "surprisal") {
    r = run_surprisal(config, metrics);
  } else if (cmd == "exp1") {
    r = run_exp1_cmd(config);
  } else if (cmd == "exp2") {
    r = run_exp2_cmd(config);
  } else if (cmd == "report") {
    auto rep = write_report(config.paths.results, config.out, stamps(config));
    r.artifacts = rep.artifacts;
    r.warnings = rep.warnings;
  } else if (cmd == "simulate") {
    r = run_simulate(config);
  }
  for (const auto& w : r.warnings) spdlog::warn("{}", w);
  write_manifest(config, r, metrics);
  return r;
}

}  // namespace tokgran
