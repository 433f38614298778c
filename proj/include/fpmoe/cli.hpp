#pragma once
// Command-line surface. Every subcommand is a thin wrapper over a library call.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "fpmoe/config.hpp"
#include "fpmoe/pipeline.hpp"

namespace fpmoe::cli {

struct CorpusSettings {
  std::vector<std::string> languages{"lang0", "lang1", "lang2"};
  std::size_t n_docs = 60;
  std::size_t doc_len = 600;
  std::size_t files_per_repo = 2;
  double max_avg_line = 100.0;
  std::size_t max_line = 1000;
  double dedup_threshold = 0.9;
  std::size_t ngram = 10;
  std::string separator = "\n\n";
};

// Contents of a --config file: {"seed": .., "model": {..}, "train": {..}, "corpus": {..}};
// every key optional, unknown keys rejected.
struct Settings {
  std::optional<std::uint64_t> seed;
  ModelConfig model;
  pipeline::TrainConfig train;
  CorpusSettings corpus;
};

void to_json(nlohmann::json& j, const CorpusSettings& c);
void from_json(const nlohmann::json& j, CorpusSettings& c);
void to_json(nlohmann::json& j, const Settings& s);
void from_json(const nlohmann::json& j, Settings& s);
Settings load_settings(const std::filesystem::path& path);

// Exit codes: 0 success, 1 contract error or bad usage, 2 I/O error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fpmoe::cli
