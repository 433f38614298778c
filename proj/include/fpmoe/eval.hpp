#pragma once
// Held-out evaluation: per-language cross-entropy and perplexity, routing
// diagnostics for MoE checkpoints, and comparison tables across runs.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "fpmoe/checkpoint.hpp"
#include "fpmoe/corpus.hpp"
#include "fpmoe/moe.hpp"

namespace fpmoe::eval {

struct LanguageScore {
  std::size_t tokens = 0;  // predicted positions
  double ce = 0.0;
  double perplexity = 0.0;
};

struct RoutingReport {
  moe::RoutingStats aggregate;  // pooled over layers
  std::vector<moe::RoutingStats> layers;
  double unconditional_entropy = 0.0;
  double conditional_entropy = 0.0;
  std::map<std::string, double> language_entropy;
  std::map<std::string, std::optional<std::size_t>> majority_expert;
  // Mean shared-expert gate per layer; absent without a shared expert.
  std::optional<std::vector<double>> mean_lambda;
};

struct EvalReport {
  std::string label;
  std::string kind;
  std::string provenance;
  std::uint64_t seed = 0;
  std::string corpus_hash;
  std::map<std::string, LanguageScore> languages;
  std::optional<RoutingReport> routing;  // MoE checkpoints only

  double average_perplexity() const;
};

struct EvalOptions {
  bool routing = true;
  std::uint64_t seed = 0;  // recorded only; evaluation draws no randomness
  std::string label;       // defaults to the checkpoint provenance
};

// Every document is cut into windows of at most the context length (plus one
// target) and scored in full; documents shorter than two tokens are skipped.
EvalReport evaluate(const Checkpoint& ckpt, const std::vector<corpus::Document>& docs, const EvalOptions& options = {});

void to_json(nlohmann::json& j, const EvalReport& r);
void from_json(const nlohmann::json& j, EvalReport& r);
nlohmann::json routing_stats_to_json(const moe::RoutingStats& s);
moe::RoutingStats routing_stats_from_json(const nlohmann::json& j);

struct ComparisonRow {
  std::string label;
  std::map<std::string, double> perplexity;
  double average = 0.0;
  std::map<std::string, double> delta;  // against the baseline row
  double average_delta = 0.0;
};

struct ComparisonTable {
  std::string baseline;
  std::string corpus_hash;
  std::vector<std::string> languages;
  std::vector<ComparisonRow> rows;
};

// Rows in input order. Reports must share corpus hash and language set
// (ContractError otherwise); `baseline` names a row label, the first row when
// empty.
ComparisonTable compare(const std::vector<EvalReport>& reports, const std::string& baseline = "");

void to_json(nlohmann::json& j, const ComparisonTable& t);
// Fixed-width text rendering.
std::string format_table(const ComparisonTable& t);

}  // namespace fpmoe::eval
