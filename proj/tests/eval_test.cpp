#include <gtest/gtest.h>

#include <cmath>

#include "fpmoe/errors.hpp"
#include "fpmoe/eval.hpp"
#include "fpmoe/pipeline.hpp"

namespace fpmoe::eval {
namespace {

using corpus::Document;

ModelConfig tiny(FfnKind kind = FfnKind::Dense) {
  ModelConfig c;
  c.n_layers = 2;
  c.d_model = 16;
  c.n_q_heads = 4;
  c.n_kv_heads = 2;
  c.d_ff = 24;
  c.context_length = 32;
  c.ffn_kind = kind;
  return c;
}

std::vector<Document> heldout() {
  std::vector<Document> docs;
  for (const auto& l : corpus::default_languages()) {
    auto d = corpus::generate_synthetic_corpus(8, l, 2, 150);
    docs.insert(docs.end(), d.begin(), d.end());
  }
  return docs;
}

TEST(Evaluate, ZeroHeadPerplexityIsVocabularySize) {
  for (FfnKind kind : {FfnKind::Dense, FfnKind::Moe}) {
    const Checkpoint c = init_checkpoint(tiny(kind), 1, {.zero_head = true});
    const auto r = evaluate(c, heldout());
    ASSERT_EQ(r.languages.size(), 3u);
    for (const auto& [lang, s] : r.languages) {
      EXPECT_NEAR(s.perplexity, 256.0, 1e-12) << lang;
      EXPECT_NEAR(s.ce, std::log(256.0), 1e-12);
    }
  }
}

TEST(Evaluate, CountsEveryPredictedPosition) {
  const auto docs = heldout();
  const auto r = evaluate(init_checkpoint(tiny(), 2), docs);
  std::map<std::string, std::size_t> expected;
  for (const auto& d : docs) expected[d.language] += d.text.size() - 1;
  for (const auto& [lang, s] : r.languages) EXPECT_EQ(s.tokens, expected[lang]);
}

TEST(Evaluate, DeterministicAndPerplexityIsExpCe) {
  const Checkpoint c = init_checkpoint(tiny(FfnKind::Moe), 3, {.init_std = 0.1});
  const auto a = evaluate(c, heldout(), {.seed = 4});
  const auto b = evaluate(c, heldout(), {.seed = 4});
  EXPECT_EQ(nlohmann::json(a).dump(), nlohmann::json(b).dump());
  for (const auto& [lang, s] : a.languages) EXPECT_EQ(s.perplexity, std::exp(s.ce));
  EXPECT_EQ(a.label, c.provenance);
  EXPECT_EQ(a.corpus_hash, corpus::corpus_hash(heldout()));
}

TEST(Evaluate, DenseCheckpointsCarryNoRouting) {
  const auto r = evaluate(init_checkpoint(tiny(), 5), heldout(), {.routing = true});
  EXPECT_FALSE(r.routing.has_value());
  EXPECT_TRUE(nlohmann::json(r).at("routing").is_null());
  EXPECT_FALSE(evaluate(init_checkpoint(tiny(FfnKind::Moe), 5), heldout(), {.routing = false}).routing);
}

TEST(Evaluate, RoutingReportInvariants) {
  const Checkpoint c = init_checkpoint(tiny(FfnKind::Moe), 6, {.init_std = 0.3});
  const auto r = evaluate(c, heldout());
  ASSERT_TRUE(r.routing);
  const auto& rr = *r.routing;
  ASSERT_EQ(rr.layers.size(), 2u);
  std::size_t positions = 0;
  for (const auto& [_, s] : r.languages) positions += s.tokens;
  EXPECT_EQ(rr.layers[0].tokens(), positions);
  EXPECT_EQ(rr.aggregate.tokens(), 2 * positions);
  for (double h : {rr.unconditional_entropy, rr.conditional_entropy}) {
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, std::log(3.0) + 1e-12);
  }
  for (const auto& [lang, h] : rr.language_entropy) {
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, std::log(3.0) + 1e-12);
    EXPECT_TRUE(rr.majority_expert.at(lang).has_value());
  }
  ASSERT_TRUE(rr.mean_lambda);
  // Gate starts at zero: lambda = 0.5 everywhere.
  for (double l : *rr.mean_lambda) EXPECT_NEAR(l, 0.5, 1e-12);
}

TEST(Evaluate, UnknownLanguageTagIsATagError) {
  const Checkpoint c = init_checkpoint(tiny(FfnKind::Moe), 7);
  const std::vector<Document> docs{{"x", "cobol", "some text here"}};
  EXPECT_THROW(evaluate(c, docs), TagError);
  EXPECT_NO_THROW(evaluate(init_checkpoint(tiny(), 7), docs));
}

TEST(Evaluate, NoSharedExpertMeansNoSharedStats) {
  ModelConfig cfg = tiny(FfnKind::Moe);
  cfg.has_shared_expert = false;
  const auto r = evaluate(init_checkpoint(cfg, 8), heldout());
  ASSERT_TRUE(r.routing);
  EXPECT_FALSE(r.routing->mean_lambda);
  EXPECT_TRUE(nlohmann::json(r).at("routing").at("shared_expert").is_null());
}

TEST(Report, JsonRoundTripIsLossless) {
  const Checkpoint c = init_checkpoint(tiny(FfnKind::Moe), 9, {.init_std = 0.2});
  const auto r = evaluate(c, heldout(), {.seed = 3, .label = "moe"});
  const auto j = nlohmann::json(r);
  const EvalReport back = j.get<EvalReport>();
  EXPECT_EQ(nlohmann::json(back).dump(), j.dump());
  EXPECT_EQ(back.routing->aggregate.topk_counts(), r.routing->aggregate.topk_counts());
  EXPECT_THROW(nlohmann::json::parse("{}").get<EvalReport>(), ContractError);
}

EvalReport fake(const std::string& label, std::map<std::string, double> ppl, const std::string& hash = "h") {
  EvalReport r;
  r.label = label;
  r.corpus_hash = hash;
  for (const auto& [l, p] : ppl) r.languages[l] = {10, std::log(p), p};
  return r;
}

TEST(Compare, SingleReportHasZeroDeltas) {
  const auto t = compare({fake("a", {{"x", 3.0}, {"y", 5.0}})});
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.baseline, "a");
  EXPECT_EQ(t.rows[0].average, 4.0);
  EXPECT_EQ(t.rows[0].average_delta, 0.0);
  for (const auto& [_, d] : t.rows[0].delta) EXPECT_EQ(d, 0.0);
}

TEST(Compare, DeltasAgainstNamedBaseline) {
  const auto t = compare({fake("moe", {{"x", 3.0}, {"y", 5.0}}), fake("dense", {{"x", 4.0}, {"y", 4.5}}),
                          fake("same", {{"x", 3.0}, {"y", 5.0}})},
                         "dense");
  EXPECT_EQ(t.rows[0].delta.at("x"), -1.0);
  EXPECT_EQ(t.rows[0].delta.at("y"), 0.5);
  EXPECT_EQ(t.rows[0].average_delta, -0.25);
  EXPECT_EQ(t.rows[0].perplexity, t.rows[2].perplexity);
  const std::string text = format_table(t);
  EXPECT_NE(text.find("(baseline)"), std::string::npos);
  EXPECT_NE(text.find("moe"), std::string::npos);
  EXPECT_EQ(nlohmann::json(t).at("rows").size(), 3u);
}

TEST(Compare, ContractErrors) {
  EXPECT_THROW(compare({}), ContractError);
  EXPECT_THROW(compare({fake("a", {{"x", 1.0}}), fake("b", {{"x", 1.0}}, "other")}), ContractError);
  EXPECT_THROW(compare({fake("a", {{"x", 1.0}}), fake("b", {{"y", 1.0}})}), ContractError);
  EXPECT_THROW(compare({fake("a", {{"x", 1.0}})}, "nope"), ContractError);
}

TEST(Compare, SharedStatsFollowTheVariant) {
  pipeline::RecipeConfig cfg;
  cfg.model = tiny();
  cfg.docs_per_language = 3;
  cfg.heldout_per_language = 1;
  cfg.doc_len = 150;
  cfg.base_steps = 2;
  cfg.dense.steps = 2;
  cfg.dense.batch_size = 2;
  cfg.dense.seq_len = 32;
  cfg.joint = cfg.dense;
  cfg.variants = {pipeline::Variant::A, pipeline::Variant::D};
  const auto run = pipeline::run_recipe(cfg);
  const auto a = evaluate(run.moe.at(pipeline::Variant::A), run.heldout_docs, {.label = "A"});
  const auto d = evaluate(run.moe.at(pipeline::Variant::D), run.heldout_docs, {.label = "D"});
  ASSERT_TRUE(a.routing && d.routing);
  EXPECT_TRUE(a.routing->mean_lambda);
  EXPECT_FALSE(d.routing->mean_lambda);
  const auto t = compare({a, d}, "A");
  EXPECT_EQ(t.rows.size(), 2u);
}

}  // namespace
}  // namespace fpmoe::eval
