#include "tokgran/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <set>
#include <sstream>

#include "tokgran/common.hpp"

namespace tokgran {
namespace {

namespace fs = std::filesystem;

const std::vector<std::pair<std::string, std::string>>& defaults() {
  static const std::vector<std::pair<std::string, std::string>> d = {
      {"run.seed", "0"},
      {"run.threads", "1"},
      {"run.out", "out"},
      {"paths.corpus", ""},
      {"paths.vocab", ""},
      {"paths.checkpoint", ""},
      {"paths.sentences", ""},
      {"paths.stimuli", ""},
      {"paths.filler_sentences", ""},
      {"paths.filler_rt", ""},
      {"paths.results", ""},
      {"tokenizer.vocab_size", "8000"},
      {"tokenizer.char_coverage", "0.9995"},
      {"tokenizer.seed_vocab_multiplier", "10"},
      {"tokenizer.prune_fraction", "0.25"},
      {"tokenizer.em_iterations", "2"},
      {"tokenizer.max_piece_length", "16"},
      {"tokenizer.dummy_prefix", "true"},
      {"tokenizer.max_documents", "0"},
      {"lm.size", "desk"},
      {"lm.precision", "f32"},
      {"training.max_lr", "1e-3"},
      {"training.min_lr", "1e-5"},
      {"training.warmup_steps", "503"},
      {"training.total_steps", "10063"},
      {"training.weight_decay", "0.01"},
      {"training.clip_norm", "1.0"},
      {"training.beta1", "0.9"},
      {"training.beta2", "0.95"},
      {"training.eps", "1e-8"},
      {"training.batch_size", "8"},
      {"training.seq_len", "128"},
      {"surprisal.context_window", "0"},
      {"grid.vocab_sizes", "64,256,1024"},
      {"grid.model_sizes", "tiny"},
      {"grid.phases", "init,trained"},
      {"exp1.corpora", ""},
      {"exp2.lists", "2"},
      {"exp2.variance_floor", "1e-8"},
      {"simulate.corpus_bytes", "300000"},
      {"simulate.docs", "4"},
      {"simulate.sentences_per_doc", "25"},
      {"simulate.subjects", "24"},
      {"simulate.gp_items", "8"},
      {"simulate.filler_items", "40"},
      {"simulate.filler_subjects", "40"},
  };
  return d;
}

const std::vector<std::string> kCorpusKeys = {"type", "sentences", "rt", "comprehension", "fixations"};
const std::set<std::string> kPathKeys = {"paths.corpus",           "paths.vocab",     "paths.checkpoint",
                                         "paths.sentences",        "paths.stimuli",   "paths.filler_sentences",
                                         "paths.filler_rt",        "paths.results",   "run.out"};

bool is_path_key(const std::string& key) {
  if (kPathKeys.contains(key)) return true;
  const auto dot = key.find('.');
  return key.starts_with("corpus_") && key.substr(dot + 1) != "type";
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

class Reader {
 public:
  explicit Reader(const std::map<std::string, std::string>& s) : s_(s) {}

  const std::string& str(const std::string& key) const {
    auto it = s_.find(key);
    if (it == s_.end()) throw ValidationError("missing setting " + key);
    return it->second;
  }

  template <class T>
  T integer(const std::string& key) const {
    const std::string& v = str(key);
    T out{};
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
      throw ValidationError("setting " + key + ": '" + v + "' is not an integer in range");
    }
    return out;
  }

  double real(const std::string& key) const {
    const std::string& v = str(key);
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size()) {
      throw ValidationError("setting " + key + ": '" + v + "' is not a number");
    }
    return x;
  }

  bool boolean(const std::string& key) const {
    std::string v = str(key);
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ValidationError("setting " + key + ": '" + v + "' is not a boolean");
  }

 private:
  const std::map<std::string, std::string>& s_;
};

std::string env_name(const std::string& key) {
  std::string out = "GB_";
  for (char c : key) out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

void require_file(const fs::path& p, const std::string& key) {
  if (p.empty()) throw ValidationError("setting " + key + " is required for this subcommand");
  if (!fs::exists(p)) throw ValidationError("setting " + key + ": " + p.string() + " does not exist");
}

}  // namespace

std::optional<std::string> process_env(const std::string& name) {
  const char* v = std::getenv(name.c_str());
  if (v == nullptr) return std::nullopt;
  return std::string(v);
}

std::string default_config_ini() {
  std::ostringstream out;
  std::string section;
  for (const auto& [key, value] : defaults()) {
    const auto dot = key.find('.');
    if (key.substr(0, dot) != section) {
      section = key.substr(0, dot);
      out << (out.tellp() > 0 ? "\n" : "") << "[" << section << "]\n";
    }
    out << key.substr(dot + 1) << " = " << value << "\n";
  }
  return out.str();
}

RunConfig load_config(const std::string& subcommand, const std::optional<fs::path>& file,
                      const std::map<std::string, std::string>& overrides, const EnvLookup& env) {
  std::map<std::string, std::string> s;
  for (const auto& [k, v] : defaults()) s[k] = v;

  auto known = [&](const std::string& key) {
    if (s.contains(key)) return true;
    const auto dot = key.find('.');
    if (dot == std::string::npos || !key.starts_with("corpus_") || dot == 7) return false;
    return std::find(kCorpusKeys.begin(), kCorpusKeys.end(), key.substr(dot + 1)) != kCorpusKeys.end();
  };

  if (file) {
    if (!fs::exists(*file)) throw ValidationError("config file " + file->string() + " does not exist");
    boost::property_tree::ptree tree;
    try {
      boost::property_tree::read_ini(file->string(), tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ValidationError("config " + e.filename() + " line " + std::to_string(e.line()) + ": " + e.message());
    }
    const fs::path base = file->parent_path();
    for (const auto& [section, body] : tree) {
      if (body.empty() && !body.data().empty()) {
        throw ValidationError("config " + file->string() + ": key '" + section + "' outside a section");
      }
      for (const auto& [k, node] : body) {
        const std::string key = section + "." + k;
        if (!known(key)) throw ValidationError("config " + file->string() + ": unknown setting " + key);
        std::string value = trim(node.data());
        // Paths in a config file are relative to the file.
        if (is_path_key(key) && !value.empty() && fs::path(value).is_relative()) {
          value = (base / value).lexically_normal().string();
        }
        s[key] = value;
      }
    }
  }
  for (auto& [key, value] : s) {
    if (auto v = env(env_name(key))) value = trim(*v);
  }
  for (const auto& [key, value] : overrides) {
    if (!known(key)) throw ValidationError("unknown setting " + key);
    s[key] = trim(value);
  }

  const Reader r(s);
  RunConfig c;
  c.subcommand = subcommand;
  c.seed = r.integer<std::uint64_t>("run.seed");
  c.threads = r.integer<std::size_t>("run.threads");
  c.out = r.str("run.out");
  c.paths.corpus = r.str("paths.corpus");
  c.paths.vocab = r.str("paths.vocab");
  c.paths.checkpoint = r.str("paths.checkpoint");
  c.paths.sentences = r.str("paths.sentences");
  c.paths.stimuli = r.str("paths.stimuli");
  c.paths.filler_sentences = r.str("paths.filler_sentences");
  c.paths.filler_rt = r.str("paths.filler_rt");
  c.paths.results = r.str("paths.results");

  c.tokenizer.target_vocab_size = r.integer<std::size_t>("tokenizer.vocab_size");
  c.tokenizer.char_coverage = r.real("tokenizer.char_coverage");
  c.tokenizer.seed_vocab_multiplier = r.integer<std::size_t>("tokenizer.seed_vocab_multiplier");
  c.tokenizer.prune_fraction = r.real("tokenizer.prune_fraction");
  c.tokenizer.em_iterations_per_round = r.integer<int>("tokenizer.em_iterations");
  c.tokenizer.max_piece_length = r.integer<std::size_t>("tokenizer.max_piece_length");
  c.tokenizer.dummy_prefix = r.boolean("tokenizer.dummy_prefix");
  c.tokenizer.max_documents = r.integer<std::size_t>("tokenizer.max_documents");
  c.tokenizer.threads = c.threads;

  c.model_size = r.str("lm.size");
  const auto& precision = r.str("lm.precision");
  if (precision == "f32") {
    c.precision = Precision::f32;
  } else if (precision == "f64") {
    c.precision = Precision::f64;
  } else {
    throw ValidationError("setting lm.precision: expected f32 or f64, got '" + precision + "'");
  }

  c.training.max_lr = r.real("training.max_lr");
  c.training.min_lr = r.real("training.min_lr");
  c.training.warmup_steps = r.integer<std::size_t>("training.warmup_steps");
  c.training.total_steps = r.integer<std::size_t>("training.total_steps");
  c.training.weight_decay = r.real("training.weight_decay");
  c.training.clip_norm = r.real("training.clip_norm");
  c.training.beta1 = r.real("training.beta1");
  c.training.beta2 = r.real("training.beta2");
  c.training.eps = r.real("training.eps");
  c.training.batch_size = r.integer<std::size_t>("training.batch_size");
  c.training.seq_len = r.integer<std::size_t>("training.seq_len");
  c.context_window = r.integer<std::size_t>("surprisal.context_window");

  for (const auto& v : split_list(r.str("grid.vocab_sizes"))) {
    std::map<std::string, std::string> one = {{"grid.vocab_sizes", v}};
    c.grid.vocab_sizes.push_back(Reader(one).integer<int>("grid.vocab_sizes"));
  }
  c.grid.model_sizes = split_list(r.str("grid.model_sizes"));
  c.grid.phases = split_list(r.str("grid.phases"));

  for (const auto& name : split_list(r.str("exp1.corpora"))) {
    const std::string sec = "corpus_" + name;
    auto get = [&](const std::string& k) {
      auto it = s.find(sec + "." + k);
      return it == s.end() ? std::string() : it->second;
    };
    CorpusSource src;
    src.name = name;
    src.type = get("type");
    src.sentences = get("sentences");
    src.rt = get("rt");
    src.comprehension = get("comprehension");
    src.fixations = get("fixations");
    c.corpora.push_back(src);
  }

  c.gpe.lists = r.integer<int>("exp2.lists");
  c.gpe.variance_floor = r.real("exp2.variance_floor");
  c.simulate.corpus_bytes = r.integer<std::size_t>("simulate.corpus_bytes");
  c.simulate.docs = r.integer<int>("simulate.docs");
  c.simulate.sentences_per_doc = r.integer<int>("simulate.sentences_per_doc");
  c.simulate.subjects = r.integer<int>("simulate.subjects");
  c.simulate.gp_items = r.integer<int>("simulate.gp_items");
  c.simulate.filler_items = r.integer<int>("simulate.filler_items");
  c.simulate.filler_subjects = r.integer<int>("simulate.filler_subjects");
  c.settings = std::move(s);
  return c;
}

std::string RunConfig::canonical() const {
  std::string out;
  for (const auto& [k, v] : settings) {
    if (k == "run.out") continue;
    out += k + "=" + v + "\n";
  }
  return out;
}

std::uint64_t RunConfig::hash() const { return fnv1a64(canonical()); }

std::string RunConfig::hash_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
  return buf;
}

void RunConfig::validate() const {
  static const std::set<std::string> subcommands = {"train-tokenizer", "train-lm", "surprisal", "exp1",
                                                    "exp2",            "report",   "simulate"};
  if (!subcommands.contains(subcommand)) throw ValidationError("unknown subcommand '" + subcommand + "'");
  if (threads < 1) throw ValidationError("run.threads must be at least 1");
  if (out.empty()) throw ValidationError("run.out must not be empty");
  tokenizer.validate();
  training.validate();
  if (grid.vocab_sizes.empty() || grid.model_sizes.empty() || grid.phases.empty()) {
    throw ValidationError("experiment grid must have at least one vocab size, model size and phase");
  }
  for (int v : grid.vocab_sizes)
    if (v < 3) throw ValidationError("grid.vocab_sizes entries must be at least 3");
  for (const auto& m : grid.model_sizes) LMConfig::named(m, 2);
  LMConfig::named(model_size, 2);
  for (const auto& p : grid.phases)
    if (p != "init" && p != "trained") throw ValidationError("grid.phases entries must be init or trained");
  if (gpe.lists < 1) throw ValidationError("exp2.lists must be at least 1");
  if (simulate.docs < 1 || simulate.sentences_per_doc < 1 || simulate.subjects < 1 || simulate.gp_items < 1 ||
      simulate.filler_items < 1 || simulate.filler_subjects < 1) {
    throw ValidationError("simulate sizes must be positive");
  }

  if (subcommand == "train-tokenizer") {
    require_file(paths.corpus, "paths.corpus");
  } else if (subcommand == "train-lm") {
    require_file(paths.corpus, "paths.corpus");
    require_file(paths.vocab, "paths.vocab");
  } else if (subcommand == "surprisal") {
    require_file(paths.vocab, "paths.vocab");
    require_file(paths.checkpoint, "paths.checkpoint");
    require_file(paths.sentences, "paths.sentences");
  } else if (subcommand == "exp1") {
    require_file(paths.corpus, "paths.corpus");
    if (corpora.empty()) throw ValidationError("exp1.corpora must name at least one corpus");
    for (const auto& c : corpora) {
      const std::string sec = "corpus_" + c.name;
      require_file(c.sentences, sec + ".sentences");
      if (c.type == "spr") {
        require_file(c.rt, sec + ".rt");
        if (!c.comprehension.empty()) require_file(c.comprehension, sec + ".comprehension");
      } else if (c.type == "et") {
        require_file(c.fixations, sec + ".fixations");
      } else {
        throw ValidationError("setting " + sec + ".type: expected spr or et, got '" + c.type + "'");
      }
    }
  } else if (subcommand == "exp2") {
    require_file(paths.corpus, "paths.corpus");
    require_file(paths.stimuli, "paths.stimuli");
    require_file(paths.filler_sentences, "paths.filler_sentences");
    require_file(paths.filler_rt, "paths.filler_rt");
  } else if (subcommand == "report") {
    require_file(paths.results, "paths.results");
  }
}

}  // namespace tokgran
