#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "fpmoe/errors.hpp"
#include "fpmoe/ops.hpp"
#include "fpmoe/pipeline.hpp"
#include "fpmoe/transformer.hpp"

namespace fpmoe::pipeline {

using nlohmann::json;

void to_json(json& j, const TraceRecord& r) {
  j = json{{"step", r.step}, {"l_ce", r.l_ce},        {"l_aux", r.l_aux},
           {"lr", r.lr},     {"f", r.f},              {"p", r.p},
           {"l_aux_layers", r.l_aux_layers}};
}

void from_json(const json& j, TraceRecord& r) {
  r.step = j.at("step").get<std::size_t>();
  r.l_ce = j.at("l_ce").get<double>();
  r.l_aux = j.at("l_aux").get<double>();
  r.lr = j.at("lr").get<double>();
  r.f = j.at("f").get<std::vector<std::vector<double>>>();
  r.p = j.at("p").get<std::vector<std::vector<double>>>();
  r.l_aux_layers = j.at("l_aux_layers").get<std::vector<double>>();
}

std::string trace_to_jsonl(const std::vector<TraceRecord>& trace) {
  std::string out;
  for (const auto& r : trace) {
    out += json(r).dump();
    out.push_back('\n');
  }
  return out;
}

std::vector<TraceRecord> trace_from_jsonl(std::string_view text) {
  std::vector<TraceRecord> out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line).get<TraceRecord>());
    } catch (const json::exception& e) {
      throw ContractError(std::string("trace record: ") + e.what());
    }
  }
  return out;
}

BatchSampler::BatchSampler(const std::vector<corpus::Document>& docs, std::size_t seq_len, std::uint64_t seed)
    : rng_(seed) {
  if (docs.empty()) throw ContractError("batch sampler: empty corpus");
  std::size_t longest = 0;
  for (const auto& d : docs) longest = std::max(longest, d.text.size());
  if (longest < 2) throw ContractError("batch sampler: no document has two or more tokens");
  window_ = std::min(seq_len + 1, longest);
  for (const auto& d : docs) {
    if (d.text.size() >= window_) docs_.push_back(corpus::tokenize(d.text));
  }
}

std::vector<std::int32_t> BatchSampler::next(std::size_t batch) {
  std::vector<std::int32_t> out;
  out.reserve(batch * window_);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto& doc = docs_[std::uniform_int_distribution<std::size_t>(0, docs_.size() - 1)(rng_)];
    const auto offset = std::uniform_int_distribution<std::size_t>(0, doc.size() - window_)(rng_);
    out.insert(out.end(), doc.begin() + static_cast<std::ptrdiff_t>(offset),
               doc.begin() + static_cast<std::ptrdiff_t>(offset + window_));
  }
  return out;
}

std::size_t resolve_steps(const TrainConfig& cfg, const std::vector<corpus::Document>& docs, bool dense_warmup) {
  if (cfg.steps) return *cfg.steps;
  if (dense_warmup && cfg.warmup_steps > 0) return cfg.warmup_steps;
  std::size_t tokens = 0;
  for (const auto& d : docs) tokens += d.text.size();
  const double per_step = static_cast<double>(cfg.batch_size * cfg.seq_len);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(cfg.epochs * static_cast<double>(tokens) / per_step)));
}

namespace {

std::string routing_dump(const ForwardResult& fwd) {
  json layers = json::array();
  for (const auto& layer : fwd.moe_layers) {
    NoGradGuard ng;
    const auto p = column_mean(layer.routing.full_probs);
    layers.push_back({{"f", moe::dispatch_fractions(layer.routing)},
                      {"p", std::vector<double>(p.data().begin(), p.data().end())}});
  }
  return layers.dump();
}

TrainResult run_training(const Checkpoint& start, const std::vector<corpus::Document>& docs, const TrainConfig& cfg,
                         bool joint, std::size_t steps) {
  cfg.validate();
  TrainResult result{start.clone(), {}};
  Checkpoint& model = result.checkpoint;
  for (auto& [name, t] : model.params()) t.set_requires_grad(!model.is_frozen(name));

  const std::size_t seq = std::min(cfg.seq_len, model.config.context_length);
  BatchSampler sampler(docs, seq, cfg.seed);
  const std::size_t window = sampler.window();
  const std::size_t T = window - 1;
  const std::size_t B = cfg.batch_size;
  const double alpha = cfg.alpha.value_or(model.config.alpha);
  AdamW opt(cfg);

  std::vector<std::int32_t> inputs(B * T), targets(B * T);
  for (std::size_t step = 0; step < steps; ++step) {
    const auto rows = sampler.next(B);
    for (std::size_t b = 0; b < B; ++b) {
      std::copy_n(rows.begin() + static_cast<std::ptrdiff_t>(b * window), T, inputs.begin() + static_cast<std::ptrdiff_t>(b * T));
      std::copy_n(rows.begin() + static_cast<std::ptrdiff_t>(b * window + 1), T, targets.begin() + static_cast<std::ptrdiff_t>(b * T));
    }
    for (auto& [name, t] : model.params()) {
      if (!model.is_frozen(name)) std::fill(t.mutable_grad().begin(), t.mutable_grad().end(), 0.0);
    }

    const ForwardResult fwd = forward(model, inputs, B, T);
    const Tensor ce = cross_entropy(fwd.logits, targets);
    Tensor loss = ce;
    TraceRecord rec;
    rec.step = step;
    rec.lr = cfg.learning_rate;
    rec.l_ce = ce.item();
    if (joint) {
      Tensor aux_total;
      for (const auto& layer : fwd.moe_layers) {
        const Tensor aux = moe::load_balance_loss(layer.routing, alpha);
        aux_total = aux_total.defined() ? add(aux_total, aux) : aux;
        rec.l_aux_layers.push_back(aux.item());
        rec.f.push_back(moe::dispatch_fractions(layer.routing));
        NoGradGuard ng;
        const Tensor p = column_mean(layer.routing.full_probs);
        rec.p.emplace_back(p.data().begin(), p.data().end());
      }
      const Tensor aux_mean = scale(aux_total, 1.0 / static_cast<double>(fwd.moe_layers.size()));
      rec.l_aux = aux_mean.item();
      loss = add(ce, aux_mean);
    }
    if (!std::isfinite(loss.item())) {
      throw NumericError("non-finite loss at step " + std::to_string(step) + " (l_ce=" + std::to_string(rec.l_ce) +
                         "); routing stats per layer: " + routing_dump(fwd));
    }
    backward(loss);
    opt.step(model, cfg.learning_rate);
    result.trace.push_back(std::move(rec));
  }

  for (auto& [name, t] : model.params()) {
    t.clear_grad();
    t.set_requires_grad(false);
  }
  return result;
}

std::string language_set(const std::vector<corpus::Document>& docs) {
  std::set<std::string> langs;
  for (const auto& d : docs) langs.insert(d.language);
  std::string s;
  for (const auto& l : langs) s += (s.empty() ? "" : "+") + l;
  return s;
}

}  // namespace

TrainResult train_dense(const Checkpoint& base, const std::vector<corpus::Document>& docs, const TrainConfig& cfg) {
  if (base.kind() != FfnKind::Dense) throw ContractError("train_dense requires a dense checkpoint");
  if (docs.empty()) throw ContractError("train_dense: empty corpus");
  const std::size_t steps = resolve_steps(cfg, docs, true);
  auto result = run_training(base, docs, cfg, false, steps);
  result.checkpoint.provenance = "warmup:" + language_set(docs) + ";steps=" + std::to_string(steps) +
                                 ";seed=" + std::to_string(cfg.seed);
  return result;
}

TrainResult train_joint(const Checkpoint& moe_ckpt, const std::vector<corpus::Document>& docs, const TrainConfig& cfg) {
  if (moe_ckpt.kind() != FfnKind::Moe) throw ContractError("train_joint requires an MoE checkpoint");
  if (docs.empty()) throw ContractError("train_joint: empty corpus");
  const std::size_t steps = resolve_steps(cfg, docs, false);
  auto result = run_training(moe_ckpt, docs, cfg, true, steps);
  result.checkpoint.provenance = moe_ckpt.provenance + "|joint:steps=" + std::to_string(steps) +
                                 ";seed=" + std::to_string(cfg.seed);
  return result;
}

}  // namespace fpmoe::pipeline
