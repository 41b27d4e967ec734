#pragma once
// Subcommand pipelines behind the command-line tool.

#include <filesystem>
#include <string>
#include <vector>

#include "tokgran/config.hpp"
#include "tokgran/rt.hpp"
#include "tokgran/ssm.hpp"
#include "tokgran/surprisal.hpp"
#include "tokgran/tokenizer.hpp"

namespace tokgran {

struct RunResult {
  std::vector<std::filesystem::path> artifacts;
  std::vector<std::string> warnings;
};

/// Validates `config` and runs its subcommand. Every artifact is listed in
/// <out>/manifest.json with the config hash, the seed and its own FNV-1a hash.
RunResult run(const RunConfig& config);

/// The tokenizer of one grid column, trained on the corpus sentences; its
/// rng seed derives from the global seed and |V|.
SubwordVocab build_tokenizer(const RunConfig& config, const std::vector<SentenceText>& corpus, int vocab_size);

/// Initial parameters, or trained ones when phase is "trained". Each corpus
/// document (run of sentences sharing a doc_id) is one token stream.
/// `trace` receives the training loss log when not null.
LMParameters build_lm(const RunConfig& config, const SubwordVocab& vocab, const std::string& model_size,
                      const std::string& phase, const std::vector<SentenceText>& corpus,
                      std::vector<LossRecord>* trace = nullptr);

/// Filtered observations of one Experiment 1 corpus.
Exp1Corpus load_exp1_corpus(const CorpusSource& source);

}  // namespace tokgran
