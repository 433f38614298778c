#pragma once
// Three-stage training: dense warm-up per language (and on the mixed corpus),
// dense -> MoE assembly under one of the ablation variants A-E, and joint MoE
// fine-tuning on L = L_CE + L_aux.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "fpmoe/checkpoint.hpp"
#include "fpmoe/corpus.hpp"

namespace fpmoe::pipeline {

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 32;
  // Window length in tokens; clipped to the context length and corpus.
  std::size_t seq_len = 256;
  // Explicit step budget. When unset, dense warm-up uses warmup_steps (if
  // nonzero) and otherwise both stages run `epochs` passes over the corpus.
  std::optional<std::size_t> steps;
  std::size_t warmup_steps = 500;
  double epochs = 1.0;
  std::uint64_t seed = 0;
  // Load-balancing coefficient; the model config's alpha when unset.
  std::optional<double> alpha;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// ---- optimizer ----

// Adam with decoupled weight decay over a checkpoint's parameters. Frozen
// parameters are skipped; after each update parameters are rounded back to
// float32 storage precision.
class AdamW {
 public:
  explicit AdamW(const TrainConfig& cfg) : cfg_(cfg) {}
  // Throws ContractError when a trainable parameter has no gradient.
  void step(Checkpoint& params, double learning_rate);
  std::size_t steps_taken() const { return t_; }

 private:
  TrainConfig cfg_;
  std::size_t t_ = 0;
  std::map<std::string, std::vector<double>> m_;
  std::map<std::string, std::vector<double>> v_;
};

// ---- training ----

struct TraceRecord {
  std::size_t step = 0;
  double l_ce = 0.0;
  double l_aux = 0.0;  // mean of the per-layer terms
  double lr = 0.0;
  // Per MoE layer: dispatch fractions, mean router probabilities, aux term.
  std::vector<std::vector<double>> f;
  std::vector<std::vector<double>> p;
  std::vector<double> l_aux_layers;
};

void to_json(nlohmann::json& j, const TraceRecord& r);
void from_json(const nlohmann::json& j, TraceRecord& r);
std::string trace_to_jsonl(const std::vector<TraceRecord>& trace);
std::vector<TraceRecord> trace_from_jsonl(std::string_view text);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<TraceRecord> trace;
};

// Deterministic batches of windows drawn from documents long enough to hold one.
class BatchSampler {
 public:
  BatchSampler(const std::vector<corpus::Document>& docs, std::size_t seq_len, std::uint64_t seed);
  std::size_t window() const { return window_; }
  // batch x (window) token ids, row-major.
  std::vector<std::int32_t> next(std::size_t batch);

 private:
  std::vector<std::vector<std::int32_t>> docs_;
  std::size_t window_;
  std::mt19937_64 rng_;
};

std::size_t resolve_steps(const TrainConfig& cfg, const std::vector<corpus::Document>& docs, bool dense_warmup);

// Fine-tunes a dense checkpoint under the causal LM objective.
TrainResult train_dense(const Checkpoint& base, const std::vector<corpus::Document>& docs, const TrainConfig& cfg);

// Same, but only the dense FFN sublayers move; everything else stays
// bitwise equal to base. The result carries no frozen names.
TrainResult train_dense_ffn(const Checkpoint& base, const std::vector<corpus::Document>& docs, const TrainConfig& cfg);

// Joint MoE fine-tuning on CE plus the load-balancing term. NaN losses abort
// with NumericError carrying the offending batch's routing statistics.
TrainResult train_joint(const Checkpoint& moe_ckpt, const std::vector<corpus::Document>& docs, const TrainConfig& cfg);

// ---- assembly ----

enum class Variant { A, B, C, D, E };
enum class SharedInit { MixedCkpt, BaseCkpt, None };
enum class RoutedInit { LanguageCkpts, MixedCkpt };

struct AblationConfig {
  Variant variant = Variant::A;
  SharedInit shared_init = SharedInit::MixedCkpt;
  bool shared_trainable = true;
  RoutedInit routed_init = RoutedInit::LanguageCkpts;

  static AblationConfig of(Variant v);
  void validate() const;
};

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

// MoE architecture implied by a dense donor config and an ablation variant.
ModelConfig moe_config_for(const ModelConfig& dense, const AblationConfig& ablation);

// Builds the MoE checkpoint: routed expert i from language_ckpts[i] (or all
// from mixed for variant E), shared expert per variant, everything else from
// base, router ~ N(0, router_std), shared gate zero (lambda = 0.5).
Checkpoint assemble_moe(const Checkpoint& base, const std::vector<Checkpoint>& language_ckpts,
                        const std::optional<Checkpoint>& mixed_ckpt, const AblationConfig& ablation,
                        const ModelConfig& model_cfg, std::uint64_t seed, double router_std = 0.02);

// ---- end-to-end recipe ----

struct RecipeConfig {
  ModelConfig model;
  std::uint64_t seed = 0;
  std::size_t docs_per_language = 60;
  std::size_t heldout_per_language = 10;
  std::size_t doc_len = 600;
  // Fraction of training documents per language (90/5/5 for skew studies).
  std::array<double, 3> mix{1.0 / 3, 1.0 / 3, 1.0 / 3};
  // Stand-in for the general-purpose base: a short mixed-corpus pre-training.
  std::size_t base_steps = 200;
  TrainConfig dense;
  TrainConfig joint;
  std::vector<Variant> variants{Variant::A};
  // Give the dense mixed baseline the joint-stage steps as well, so it sees
  // as many mixed-data updates as the MoE does.
  bool extend_mixed_baseline = true;
  // Language and mixed warm-ups update only FFN weights, so every donor FFN
  // still fits the base's attention and embeddings after assembly.
  bool warmup_ffn_only = true;
};

struct RecipeResult {
  std::vector<corpus::Document> train_docs;
  std::vector<corpus::Document> heldout_docs;
  Checkpoint base;
  std::vector<Checkpoint> language_ckpts;
  Checkpoint mixed_ckpt;
  std::optional<Checkpoint> mixed_baseline;  // mixed_ckpt trained further when extend_mixed_baseline
  std::map<Variant, Checkpoint> moe;
  std::map<Variant, std::vector<TraceRecord>> traces;
};

RecipeResult run_recipe(const RecipeConfig& cfg);

// Per-language synthetic split for the recipe: train docs drawn with the
// configured mix, held-out docs balanced across languages.
std::pair<std::vector<corpus::Document>, std::vector<corpus::Document>> recipe_corpus(const RecipeConfig& cfg);

}  // namespace fpmoe::pipeline
