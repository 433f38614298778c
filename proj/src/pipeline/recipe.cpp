#include <algorithm>
#include <cmath>
#include <tuple>

#include "fpmoe/errors.hpp"
#include "fpmoe/pipeline.hpp"

namespace fpmoe::pipeline {

namespace {

// splitmix64 finalizer: independent-looking seeds for each stage of one run.
std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Checkpoint warm_up(const Checkpoint& base, const std::vector<corpus::Document>& docs, const TrainConfig& tc,
                   bool only_ffn) {
  return (only_ffn ? train_dense_ffn(base, docs, tc) : train_dense(base, docs, tc)).checkpoint;
}

}  // namespace

TrainResult train_dense_ffn(const Checkpoint& base, const std::vector<corpus::Document>& docs, const TrainConfig& cfg) {
  Checkpoint c = base.clone();
  for (const auto& [name, _] : c.params()) {
    bool ffn = false;
    for (std::size_t l = 0; l < c.config.n_layers && !ffn; ++l) ffn = name.rfind(dense_ffn_prefix(l) + ".", 0) == 0;
    if (!ffn) c.frozen.insert(name);
  }
  TrainResult r = train_dense(c, docs, cfg);
  r.checkpoint.frozen = base.frozen;
  return r;
}

std::pair<std::vector<corpus::Document>, std::vector<corpus::Document>> recipe_corpus(const RecipeConfig& cfg) {
  const auto& langs = cfg.model.languages;
  if (langs.size() != cfg.mix.size()) throw ContractError("recipe: expected exactly 3 languages");
  double mix_total = 0.0;
  for (double m : cfg.mix) {
    if (!(m >= 0.0)) throw ContractError("recipe: mix fractions must be non-negative");
    mix_total += m;
  }
  if (!(mix_total > 0.0)) throw ContractError("recipe: mix fractions sum to zero");

  std::vector<corpus::Document> train, heldout;
  const double total_docs = static_cast<double>(cfg.docs_per_language * langs.size());
  for (std::size_t i = 0; i < langs.size(); ++i) {
    const auto n_train =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(total_docs * cfg.mix[i] / mix_total)));
    auto docs = corpus::generate_synthetic_corpus(derive(cfg.seed, 100 + i), langs[i],
                                                  n_train + cfg.heldout_per_language, cfg.doc_len);
    heldout.insert(heldout.end(), docs.end() - static_cast<std::ptrdiff_t>(cfg.heldout_per_language), docs.end());
    train.insert(train.end(), docs.begin(), docs.begin() + static_cast<std::ptrdiff_t>(n_train));
  }
  auto clean = corpus::decontaminate(train, heldout, 10);
  return {std::move(clean.kept), std::move(heldout)};
}

RecipeResult run_recipe(const RecipeConfig& cfg) {
  const ModelConfig dense_cfg = cfg.model.with_kind(FfnKind::Dense);
  dense_cfg.validate();

  RecipeResult r;
  std::tie(r.train_docs, r.heldout_docs) = recipe_corpus(cfg);

  r.base = init_checkpoint(dense_cfg, derive(cfg.seed, 0));
  if (cfg.base_steps > 0) {
    TrainConfig pre = cfg.dense;
    pre.steps = cfg.base_steps;
    pre.seed = derive(cfg.seed, 1);
    r.base = train_dense(r.base, r.train_docs, pre).checkpoint;
    r.base.provenance = "base:mixed-pretrain;steps=" + std::to_string(cfg.base_steps);
  }

  for (std::size_t i = 0; i < dense_cfg.languages.size(); ++i) {
    std::vector<corpus::Document> own;
    for (const auto& d : r.train_docs) {
      if (d.language == dense_cfg.languages[i]) own.push_back(d);
    }
    TrainConfig tc = cfg.dense;
    tc.seed = derive(cfg.seed, 10 + i);
    r.language_ckpts.push_back(warm_up(r.base, own, tc, cfg.warmup_ffn_only));
  }
  {
    TrainConfig tc = cfg.dense;
    tc.seed = derive(cfg.seed, 20);
    r.mixed_ckpt = warm_up(r.base, r.train_docs, tc, cfg.warmup_ffn_only);
  }
  if (cfg.extend_mixed_baseline) {
    TrainConfig tc = cfg.joint;
    tc.steps = resolve_steps(cfg.joint, r.train_docs, false);
    tc.seed = derive(cfg.seed, 30);
    auto extended = train_dense(r.mixed_ckpt, r.train_docs, tc).checkpoint;
    extended.provenance = "dense-mixed:extended;" + extended.provenance;
    r.mixed_baseline = std::move(extended);
  }

  for (const Variant v : cfg.variants) {
    const auto ablation = AblationConfig::of(v);
    auto moe = assemble_moe(r.base, r.language_ckpts, r.mixed_ckpt, ablation, moe_config_for(dense_cfg, ablation),
                            derive(cfg.seed, 40));
    TrainConfig tc = cfg.joint;
    tc.seed = derive(cfg.seed, 50);
    auto trained = train_joint(moe, r.train_docs, tc);
    r.moe.emplace(v, std::move(trained.checkpoint));
    r.traces.emplace(v, std::move(trained.trace));
  }
  return r;
}

}  // namespace fpmoe::pipeline
