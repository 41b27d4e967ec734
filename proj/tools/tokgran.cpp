// tokgran: tokenizer / LM / reading-time pipeline driver.
//
// Exit status: 0 success, 1 invalid input or configuration, 2 any other
// failure.

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "tokgran/common.hpp"
#include "tokgran/config.hpp"
#include "tokgran/pipeline.hpp"

namespace {

// Flag name -> config key, per subcommand.
struct FlagSpec {
  const char* flag;
  const char* key;
  const char* help;
};

const std::map<std::string, std::vector<FlagSpec>> kSubcommands = {
    {"train-tokenizer",
     {{"--corpus", "paths.corpus", "training text"}, {"--vocab-size", "tokenizer.vocab_size", "target |V|"}}},
    {"train-lm",
     {{"--corpus", "paths.corpus", "training text"},
      {"--vocab", "paths.vocab", "tokenizer file"},
      {"--size", "lm.size", "tiny, desk, small, medium or large"},
      {"--steps", "training.total_steps", "optimizer steps"}}},
    {"surprisal",
     {{"--vocab", "paths.vocab", "tokenizer file"},
      {"--checkpoint", "paths.checkpoint", "LM checkpoint"},
      {"--sentences", "paths.sentences", "text to score"}}},
    {"exp1", {{"--corpus", "paths.corpus", "tokenizer and LM training text"}}},
    {"exp2",
     {{"--corpus", "paths.corpus", "tokenizer and LM training text"},
      {"--stimuli", "paths.stimuli", "garden-path items"},
      {"--filler-sentences", "paths.filler_sentences", "filler sentences"},
      {"--filler-rt", "paths.filler_rt", "filler reading times"}}},
    {"report", {{"--results", "paths.results", "directory holding exp1.csv and/or gpe.csv"}}},
    {"simulate", {}},
};

const std::map<std::string, std::string> kDescriptions = {
    {"train-tokenizer", "Train a unigram-LM tokenizer"},
    {"train-lm", "Train a state-space LM over a tokenizer"},
    {"surprisal", "Word surprisal and perplexity of a text"},
    {"exp1", "Surprisal fit to reading times over the vocabulary x model grid"},
    {"exp2", "Garden-path effects over the vocabulary x model grid"},
    {"report", "Aggregate tables and figures from experiment results"},
    {"simulate", "Write a synthetic data bundle and a config that uses it"},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Subword granularity and reading-time surprisal workbench"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::string out;
  std::vector<std::string> sets;
  std::string log_level = "info";
  app.add_option("-c,--config", config_file, "INI config file");
  app.add_option("--seed", seed, "global random seed");
  app.add_option("--threads", threads, "worker threads");
  app.add_option("--out", out, "output directory");
  app.add_option("--set", sets, "override a setting: section.key=value")->take_all();
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

  std::map<std::string, std::string> flag_values;
  for (const auto& [name, flags] : kSubcommands) {
    auto* sub = app.add_subcommand(name, kDescriptions.at(name));
    for (const auto& f : flags) {
      sub->add_option(f.flag, flag_values[f.key], f.help);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  auto logger = spdlog::stderr_color_mt("tokgran");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    const std::string subcommand = app.get_subcommands().front()->get_name();
    std::map<std::string, std::string> overrides;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw tokgran::ValidationError("--set expects section.key=value, got '" + s + "'");
      overrides[s.substr(0, eq)] = s.substr(eq + 1);
    }
    for (const auto& f : kSubcommands.at(subcommand)) {
      if (!flag_values[f.key].empty()) overrides[f.key] = flag_values[f.key];
    }
    if (seed) overrides["run.seed"] = std::to_string(*seed);
    if (threads) overrides["run.threads"] = std::to_string(*threads);
    if (!out.empty()) overrides["run.out"] = out;

    std::optional<std::filesystem::path> file;
    if (!config_file.empty()) file = config_file;
    const auto config = tokgran::load_config(subcommand, file, overrides);
    const auto result = tokgran::run(config);
    for (const auto& p : result.artifacts) std::cout << p.string() << "\n";
    return 0;
  } catch (const tokgran::ValidationError& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
}
