#pragma once
// Run configuration: INI file, GB_<SECTION>_<KEY> environment overrides and
// command-line overrides, in increasing precedence.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tokgran/garden_path.hpp"
#include "tokgran/ssm.hpp"
#include "tokgran/tokenizer.hpp"

namespace tokgran {

/// One reading-time corpus of Experiment 1, from an `[corpus_<name>]` section.
struct CorpusSource {
  std::string name;
  std::string type;  // "spr" or "et"
  std::filesystem::path sentences;
  std::filesystem::path rt;             // spr
  std::filesystem::path comprehension;  // spr, optional
  std::filesystem::path fixations;      // et
};

struct GridConfig {
  std::vector<int> vocab_sizes;
  std::vector<std::string> model_sizes;
  std::vector<std::string> phases;  // "init", "trained"
};

/// Sizes of the synthetic data bundle written by `simulate`.
struct SimulateConfig {
  std::size_t corpus_bytes = 300000;
  int docs = 4;
  int sentences_per_doc = 25;
  int subjects = 24;
  int gp_items = 8;  // per construction
  int filler_items = 40;
  int filler_subjects = 40;
};

struct RunConfig {
  std::string subcommand;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::filesystem::path out = "out";

  struct Paths {
    std::filesystem::path corpus;      // LM and tokenizer training text
    std::filesystem::path vocab;
    std::filesystem::path checkpoint;
    std::filesystem::path sentences;   // text to score
    std::filesystem::path stimuli;
    std::filesystem::path filler_sentences;
    std::filesystem::path filler_rt;
    std::filesystem::path results;     // input directory of `report`
  } paths;

  std::vector<CorpusSource> corpora;
  TokenizerConfig tokenizer;
  std::string model_size = "desk";
  Precision precision = Precision::f32;
  TrainingSchedule training;
  std::size_t context_window = 0;
  GridConfig grid;
  GPEOptions gpe;
  SimulateConfig simulate;

  /// Every setting as sorted `section.key=value` lines; run.out is left out
  /// so the same run written to two directories hashes alike.
  std::string canonical() const;
  std::uint64_t hash() const;
  std::string hash_hex() const;

  /// Grid non-empty, settings in range, and the inputs of `subcommand` exist.
  void validate() const;

  // Flat settings the typed fields were read from.
  std::map<std::string, std::string> settings;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Process environment.
std::optional<std::string> process_env(const std::string& name);

/// Builds a config for `subcommand`. `overrides` are `section.key` settings
/// from flags. Unknown sections or keys and malformed values throw
/// ValidationError naming the key (and the line for INI syntax errors).
RunConfig load_config(const std::string& subcommand, const std::optional<std::filesystem::path>& file,
                      const std::map<std::string, std::string>& overrides, const EnvLookup& env = process_env);

/// Default settings as INI text.
std::string default_config_ini();

}  // namespace tokgran
