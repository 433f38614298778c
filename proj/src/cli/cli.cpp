#include "fpmoe/cli.hpp"

#include <functional>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "fpmoe/checkpoint.hpp"
#include "fpmoe/corpus.hpp"
#include "fpmoe/errors.hpp"
#include "fpmoe/eval.hpp"
#include "fpmoe/io.hpp"

namespace fpmoe::cli {

namespace fs = std::filesystem;
using nlohmann::json;

void to_json(json& j, const CorpusSettings& c) {
  j = json{{"languages", c.languages},       {"n_docs", c.n_docs},
           {"doc_len", c.doc_len},           {"files_per_repo", c.files_per_repo},
           {"max_avg_line", c.max_avg_line}, {"max_line", c.max_line},
           {"dedup_threshold", c.dedup_threshold}, {"ngram", c.ngram},
           {"separator", c.separator}};
}

void from_json(const json& j, CorpusSettings& c) {
  static const std::set<std::string> known{"languages", "n_docs",          "doc_len", "files_per_repo", "max_avg_line",
                                           "max_line",  "dedup_threshold", "ngram",   "separator"};
  if (!j.is_object()) throw ContractError("corpus settings must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ContractError("unknown corpus settings key '" + key + "'");
  }
  c.languages = j.value("languages", c.languages);
  c.n_docs = j.value("n_docs", c.n_docs);
  c.doc_len = j.value("doc_len", c.doc_len);
  c.files_per_repo = j.value("files_per_repo", c.files_per_repo);
  c.max_avg_line = j.value("max_avg_line", c.max_avg_line);
  c.max_line = j.value("max_line", c.max_line);
  c.dedup_threshold = j.value("dedup_threshold", c.dedup_threshold);
  c.ngram = j.value("ngram", c.ngram);
  c.separator = j.value("separator", c.separator);
}

void to_json(json& j, const Settings& s) {
  j = json{{"model", s.model}, {"train", s.train}, {"corpus", s.corpus}};
  j["seed"] = s.seed ? json(*s.seed) : json(nullptr);
}

void from_json(const json& j, Settings& s) {
  static const std::set<std::string> known{"seed", "model", "train", "corpus"};
  if (!j.is_object()) throw ContractError("config file must hold a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ContractError("unknown config file key '" + key + "'");
  }
  try {
    if (j.contains("seed") && !j["seed"].is_null()) s.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("model")) s.model = j["model"].get<ModelConfig>();
    if (j.contains("train")) s.train = j["train"].get<pipeline::TrainConfig>();
    if (j.contains("corpus")) s.corpus = j["corpus"].get<CorpusSettings>();
  } catch (const json::exception& e) {
    throw ContractError(std::string("config file: ") + e.what());
  }
}

Settings load_settings(const fs::path& path) {
  const std::string text = io::read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ContractError("config file " + path.string() + ": " + e.what());
  }
  return j.get<Settings>();
}

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  std::vector<std::string> config;
  std::string out;
};

struct TrainFlags {
  std::optional<std::size_t> steps, batch_size, seq_len, warmup_steps;
  std::optional<double> lr, epochs, alpha;
  std::string trace;
};

void add_common(CLI::App* sub, Common& c, bool out_required = true) {
  sub->add_option("--seed", c.seed, "Random seed");
  sub->add_option("--config", c.config, "Config file (JSON)")->expected(1)->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  auto* o = sub->add_option("--out", c.out, "Output path");
  if (out_required) o->required();
}

void add_train_flags(CLI::App* sub, TrainFlags& t, bool joint) {
  sub->add_option("--steps", t.steps, "Optimizer steps (overrides epochs)");
  sub->add_option("--lr", t.lr, "Learning rate");
  sub->add_option("--batch-size", t.batch_size, "Sequences per step");
  sub->add_option("--seq-len", t.seq_len, "Tokens per sequence");
  sub->add_option("--epochs", t.epochs, "Passes over the corpus when --steps is unset");
  sub->add_option("--trace", t.trace, "Write the per-step loss trace (JSON lines) here");
  if (joint) {
    sub->add_option("--alpha", t.alpha, "Load-balancing coefficient");
  } else {
    sub->add_option("--warmup-steps", t.warmup_steps, "Dense warm-up step budget");
  }
}

// Resolves --config values: files are loaded in order; single letters A-E are
// returned as variant names for `moe assemble`.
Settings resolve_settings(const Common& c, std::vector<std::string>* variants) {
  Settings s;
  for (const auto& v : c.config) {
    if (variants && v.size() == 1 && v[0] >= 'A' && v[0] <= 'E') {
      variants->push_back(v);
    } else {
      s = load_settings(v);
    }
  }
  if (c.seed) s.seed = c.seed;
  if (!s.seed) s.seed = s.train.seed;
  s.train.seed = *s.seed;
  return s;
}

pipeline::TrainConfig apply(pipeline::TrainConfig cfg, const TrainFlags& t) {
  if (t.steps) cfg.steps = t.steps;
  if (t.lr) cfg.learning_rate = *t.lr;
  if (t.batch_size) cfg.batch_size = *t.batch_size;
  if (t.seq_len) cfg.seq_len = *t.seq_len;
  if (t.warmup_steps) cfg.warmup_steps = *t.warmup_steps;
  if (t.epochs) cfg.epochs = *t.epochs;
  if (t.alpha) cfg.alpha = t.alpha;
  cfg.validate();
  return cfg;
}

fs::path manifest_path(const std::string& flag, const fs::path& out, bool out_is_dir) {
  if (!flag.empty()) return flag;
  if (out_is_dir) return out / "manifest.json";
  fs::path p = out;
  p += ".manifest.json";
  return p;
}

void write_json(const fs::path& path, const json& j) { io::write_file_atomic(path, j.dump(2) + "\n"); }

void write_tree(const fs::path& out, const std::vector<corpus::Repository>& repos, const json& manifest) {
  io::write_directory_atomic(out, [&](const fs::path& staging) {
    corpus::write_repositories(staging, repos);
    write_json(staging / "manifest.json", manifest);
  });
}

CLI::App* deepest(CLI::App* app) {
  for (auto* sub : app->get_subcommands()) return deepest(sub);
  return app;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"fpmoe: sparse mixture-of-experts training toolkit", "fpmoe"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  Common common;
  TrainFlags train_flags;
  std::function<int()> action;

  // ---- corpus ----
  auto* corpus_cmd = app.add_subcommand("corpus", "Corpus construction and curation");
  corpus_cmd->require_subcommand(1);

  std::string in_path, test_path, format = "repos", manifest_flag;
  std::vector<std::string> languages;
  std::optional<std::size_t> n_docs, doc_len, files_per_repo, max_line, ngram;
  std::optional<double> max_avg_line, threshold;

  auto* synth = corpus_cmd->add_subcommand("synth", "Generate synthetic repositories");
  add_common(synth, common);
  synth->add_option("--languages", languages, "Languages to generate")->delimiter(',');
  synth->add_option("--n-docs", n_docs, "Repositories per language");
  synth->add_option("--doc-len", doc_len, "Approximate bytes per repository");
  synth->add_option("--files-per-repo", files_per_repo, "Files per repository");
  synth->add_option("--format", format, "repos (directory tree) or jsonl (documents)")
      ->check(CLI::IsMember({"repos", "jsonl"}));
  synth->callback([&] {
    action = [&] {
      const Settings s = resolve_settings(common, nullptr);
      const auto langs = languages.empty() ? s.corpus.languages : languages;
      const corpus::SyntheticOptions opts{files_per_repo.value_or(s.corpus.files_per_repo)};
      std::vector<corpus::Repository> repos;
      for (const auto& lang : langs) {
        auto r = corpus::generate_synthetic_repositories(*s.seed, lang, n_docs.value_or(s.corpus.n_docs),
                                                         doc_len.value_or(s.corpus.doc_len), opts);
        repos.insert(repos.end(), r.begin(), r.end());
      }
      if (format == "jsonl") {
        corpus::write_documents(common.out, corpus::concat_repositories(repos, s.corpus.separator));
      } else {
        write_tree(common.out, repos, json(corpus::describe(repos)));
      }
      out << "wrote " << repos.size() << " repositories to " << common.out << "\n";
      return 0;
    };
  });

  auto* filter = corpus_cmd->add_subcommand("filter", "Drop files by line-length heuristics");
  add_common(filter, common);
  filter->add_option("--in", in_path, "Repository tree")->required();
  filter->add_option("--max-avg-line", max_avg_line, "Drop when average line length exceeds this");
  filter->add_option("--max-line", max_line, "Drop when any line exceeds this");
  filter->add_option("--manifest", manifest_flag, "Manifest path (default <out>/manifest.json)");
  filter->callback([&] {
    action = [&] {
      const Settings s = resolve_settings(common, nullptr);
      const corpus::FilterThresholds th{max_avg_line.value_or(s.corpus.max_avg_line),
                                        max_line.value_or(s.corpus.max_line)};
      const auto result = corpus::filter_repositories(corpus::read_repositories(in_path), th);
      auto manifest = corpus::describe(result.kept);
      manifest.stages["filter"] = {result.files_in, result.files_kept, result.dropped.size()};
      manifest.dropped_files = result.dropped;
      if (manifest_flag.empty()) {
        write_tree(common.out, result.kept, json(manifest));
      } else {
        write_tree(common.out, result.kept, json(corpus::describe(result.kept)));
        write_json(manifest_flag, json(manifest));
      }
      out << "kept " << result.files_kept << " of " << result.files_in << " files\n";
      return 0;
    };
  });

  auto* dedup = corpus_cmd->add_subcommand("dedup", "Repository-level deduplication, then concatenation");
  add_common(dedup, common);
  dedup->add_option("--in", in_path, "Repository tree")->required();
  dedup->add_option("--threshold", threshold, "Jaccard threshold for near duplicates");
  std::string dedup_format = "jsonl";
  dedup->add_option("--format", dedup_format, "jsonl (documents, default) or repos (directory tree)")
      ->check(CLI::IsMember({"repos", "jsonl"}));
  dedup->add_option("--manifest", manifest_flag, "Manifest path");
  dedup->callback([&] {
    action = [&] {
      const Settings s = resolve_settings(common, nullptr);
      const auto repos = corpus::read_repositories(in_path);
      const auto result = corpus::dedup_repositories(repos, threshold.value_or(s.corpus.dedup_threshold));
      auto manifest = corpus::describe(result.kept);
      manifest.stages["dedup"] = {repos.size(), result.kept.size(), result.removed.size()};
      manifest.dedup_removed = result.removed;
      const fs::path out_path(common.out);
      if (dedup_format == "repos") {
        write_tree(out_path, result.kept, json(manifest));
        if (!manifest_flag.empty()) write_json(manifest_flag, json(manifest));
      } else {
        corpus::write_documents(out_path, corpus::concat_repositories(result.kept, s.corpus.separator));
        write_json(manifest_path(manifest_flag, out_path, false), json(manifest));
      }
      out << "kept " << result.kept.size() << " of " << repos.size() << " repositories\n";
      return 0;
    };
  });

  auto* decon = corpus_cmd->add_subcommand("decontaminate", "Remove documents sharing an n-gram with a test set");
  add_common(decon, common);
  decon->add_option("--in", in_path, "Documents (JSON lines)")->required();
  decon->add_option("--test", test_path, "Test documents (JSON lines)")->required();
  decon->add_option("--ngram", ngram, "n-gram length in whitespace tokens");
  decon->add_option("--manifest", manifest_flag, "Manifest path (default <out>.manifest.json)");
  decon->callback([&] {
    action = [&] {
      const Settings s = resolve_settings(common, nullptr);
      const auto docs = corpus::read_documents(in_path);
      const auto result = corpus::decontaminate(docs, corpus::read_documents(test_path), ngram.value_or(s.corpus.ngram));
      auto manifest = corpus::describe(result.kept);
      manifest.stages["decontaminate"] = {docs.size(), result.kept.size(), result.removed.size()};
      manifest.decontam_removed = result.removed;
      corpus::write_documents(common.out, result.kept);
      write_json(manifest_path(manifest_flag, common.out, false), json(manifest));
      out << "kept " << result.kept.size() << " of " << docs.size() << " documents\n";
      return 0;
    };
  });

  auto* stats = corpus_cmd->add_subcommand("stats", "Per-language counts of a corpus");
  add_common(stats, common, false);
  stats->add_option("--in", in_path, "Repository tree or documents (JSON lines)")->required();
  stats->callback([&] {
    action = [&] {
      resolve_settings(common, nullptr);
      json j;
      std::error_code ec;
      if (fs::is_directory(in_path, ec)) {
        j = json(corpus::describe(corpus::read_repositories(in_path)));
      } else {
        const auto docs = corpus::read_documents(in_path);
        j = json(corpus::describe(docs));
        j["corpus_hash"] = corpus::corpus_hash(docs);
      }
      if (common.out.empty()) {
        out << j.dump(2) << "\n";
      } else {
        write_json(common.out, j);
      }
      return 0;
    };
  });

  // ---- train ----
  auto* train_cmd = app.add_subcommand("train", "Dense training");
  train_cmd->require_subcommand(1);
  std::string base_path, data_path, ckpt_path;
  std::vector<std::string> train_languages;
  bool ffn_only = false;
  auto* dense = train_cmd->add_subcommand("dense", "Train a dense checkpoint on a corpus");
  add_common(dense, common);
  dense->add_option("--base", base_path, "Starting checkpoint (fresh init from the model config when omitted)");
  dense->add_option("--in", data_path, "Training documents (JSON lines)")->required();
  dense->add_option("--language", train_languages, "Keep only documents in these languages")->delimiter(',');
  dense->add_flag("--ffn-only", ffn_only, "Update only the FFN sublayers (warm-ups feeding assembly)");
  add_train_flags(dense, train_flags, false);
  dense->callback([&] {
    action = [&] {
      const Settings s = resolve_settings(common, nullptr);
      const auto cfg = apply(s.train, train_flags);
      Checkpoint base = base_path.empty() ? init_checkpoint(s.model.with_kind(FfnKind::Dense), *s.seed)
                                          : load_checkpoint(base_path, FfnKind::Dense);
      auto docs = corpus::read_documents(data_path);
      if (!train_languages.empty()) {
        std::erase_if(docs, [&](const corpus::Document& d) {
          return std::find(train_languages.begin(), train_languages.end(), d.language) == train_languages.end();
        });
      }
      const auto result = ffn_only ? pipeline::train_dense_ffn(base, docs, cfg) : pipeline::train_dense(base, docs, cfg);
      save_checkpoint(result.checkpoint, common.out);
      if (!train_flags.trace.empty()) io::write_file_atomic(train_flags.trace, pipeline::trace_to_jsonl(result.trace));
      out << "trained " << result.trace.size() << " steps";
      if (!result.trace.empty()) out << ", final l_ce " << result.trace.back().l_ce;
      out << "\n";
      return 0;
    };
  });

  // ---- moe ----
  auto* moe_cmd = app.add_subcommand("moe", "MoE assembly and joint training");
  moe_cmd->require_subcommand(1);
  std::vector<std::string> lang_ckpts;
  std::string mixed_path;
  double router_std = 0.02;
  auto* assemble = moe_cmd->add_subcommand("assemble", "Build an MoE checkpoint from dense donors");
  add_common(assemble, common);
  assemble->get_option("--config")->description("Ablation variant A-E, and/or a config file");
  assemble->add_option("--base", base_path, "Base dense checkpoint")->required();
  assemble->add_option("--lang-ckpt", lang_ckpts, "Per-language dense checkpoints, in expert order");
  assemble->add_option("--mixed", mixed_path, "Mixed-corpus dense checkpoint");
  assemble->add_option("--router-std", router_std, "Router initialization std");
  assemble->callback([&] {
    action = [&] {
      std::vector<std::string> variants;
      const Settings s = resolve_settings(common, &variants);
      if (variants.size() != 1) throw ContractError("moe assemble needs exactly one --config A|B|C|D|E");
      const auto ablation = pipeline::AblationConfig::of(pipeline::variant_from_string(variants.front()));
      const Checkpoint base = load_checkpoint(base_path, FfnKind::Dense);
      std::vector<Checkpoint> langs;
      for (const auto& p : lang_ckpts) langs.push_back(load_checkpoint(p, FfnKind::Dense));
      std::optional<Checkpoint> mixed;
      if (!mixed_path.empty()) mixed = load_checkpoint(mixed_path, FfnKind::Dense);
      const auto target = pipeline::moe_config_for(base.config, ablation);
      const auto moe = pipeline::assemble_moe(base, langs, mixed, ablation, target, *s.seed, router_std);
      save_checkpoint(moe, common.out);
      out << "assembled variant " << variants.front() << " (" << parameter_count(target) << " parameters)\n";
      return 0;
    };
  });

  auto* joint = moe_cmd->add_subcommand("train", "Joint MoE fine-tuning with the load-balancing loss");
  add_common(joint, common);
  joint->add_option("--in", ckpt_path, "Assembled MoE checkpoint")->required();
  joint->add_option("--data", data_path, "Training documents (JSON lines)")->required();
  add_train_flags(joint, train_flags, true);
  joint->callback([&] {
    action = [&] {
      const Settings s = resolve_settings(common, nullptr);
      const auto cfg = apply(s.train, train_flags);
      const auto result =
          pipeline::train_joint(load_checkpoint(ckpt_path, FfnKind::Moe), corpus::read_documents(data_path), cfg);
      save_checkpoint(result.checkpoint, common.out);
      if (!train_flags.trace.empty()) io::write_file_atomic(train_flags.trace, pipeline::trace_to_jsonl(result.trace));
      out << "trained " << result.trace.size() << " steps";
      if (!result.trace.empty()) {
        out << ", final l_ce " << result.trace.back().l_ce << ", l_aux " << result.trace.back().l_aux;
      }
      out << "\n";
      return 0;
    };
  });

  // ---- eval ----
  auto* eval_cmd = app.add_subcommand("eval", "Evaluation and comparison");
  eval_cmd->require_subcommand(1);
  std::string label, baseline;
  std::vector<std::string> reports;
  auto add_eval = [&](const char* name, const char* desc, bool routing) {
    auto* sub = eval_cmd->add_subcommand(name, desc);
    add_common(sub, common);
    sub->add_option("--ckpt", ckpt_path, "Checkpoint to evaluate")->required();
    sub->add_option("--data", data_path, "Held-out documents (JSON lines)")->required();
    sub->add_option("--label", label, "Row label for comparison tables (default: provenance)");
    sub->callback([&, routing] {
      action = [&, routing] {
        const Settings s = resolve_settings(common, nullptr);
        const eval::EvalOptions opts{routing, *s.seed, label};
        const auto report = eval::evaluate(load_checkpoint(ckpt_path), corpus::read_documents(data_path), opts);
        write_json(common.out, json(report));
        for (const auto& [lang, score] : report.languages) {
          out << lang << ": ce " << score.ce << ", perplexity " << score.perplexity << "\n";
        }
        if (routing && !report.routing) out << "dense checkpoint: no routing statistics\n";
        if (report.routing) {
          out << "routing entropy: unconditional " << report.routing->unconditional_entropy << ", conditional "
              << report.routing->conditional_entropy << "\n";
        }
        return 0;
      };
    });
  };
  add_eval("ppl", "Per-language cross-entropy and perplexity", false);
  add_eval("routing", "Perplexity plus routing statistics and entropies", true);

  auto* cmp = eval_cmd->add_subcommand("compare", "Tabulate reports against a baseline row");
  add_common(cmp, common, false);
  cmp->add_option("--report", reports, "Report files (repeatable)")->required();
  cmp->add_option("--baseline", baseline, "Baseline row label (default: first report)");
  cmp->callback([&] {
    action = [&] {
      resolve_settings(common, nullptr);
      std::vector<eval::EvalReport> parsed;
      for (const auto& p : reports) {
        try {
          parsed.push_back(json::parse(io::read_file(p)).get<eval::EvalReport>());
        } catch (const json::parse_error& e) {
          throw ContractError("report " + p + ": " + e.what());
        }
      }
      const auto table = eval::compare(parsed, baseline);
      if (!common.out.empty()) write_json(common.out, json(table));
      out << eval::format_table(table);
      return 0;
    };
  });

  std::vector<const char*> argv{"fpmoe"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << deepest(&app)->help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << deepest(&app)->help();
    return 1;
  }

  try {
    return action ? action() : 1;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "io error: " << e.what() << "\n";
    return 2;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << "\n";
    return e.code() == CheckpointError::Code::KindMismatch ? 1 : 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace fpmoe::cli
