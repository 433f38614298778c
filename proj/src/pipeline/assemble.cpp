#include <cstdio>
#include <random>

#include "fpmoe/errors.hpp"
#include "fpmoe/pipeline.hpp"

namespace fpmoe::pipeline {

AblationConfig AblationConfig::of(Variant v) {
  AblationConfig a;
  a.variant = v;
  switch (v) {
    case Variant::A: break;
    case Variant::B: a.shared_init = SharedInit::BaseCkpt; break;
    case Variant::C:
      a.shared_init = SharedInit::BaseCkpt;
      a.shared_trainable = false;
      break;
    case Variant::D: a.shared_init = SharedInit::None; break;
    case Variant::E: a.routed_init = RoutedInit::MixedCkpt; break;
  }
  return a;
}

void AblationConfig::validate() const {
  if (variant == Variant::D && shared_init != SharedInit::None) {
    throw ContractError("ablation D requires shared_init none");
  }
  if (variant == Variant::C && shared_trainable) throw ContractError("ablation C requires a frozen shared expert");
  if (variant == Variant::E && routed_init != RoutedInit::MixedCkpt) {
    throw ContractError("ablation E requires routed_init mixed_ckpt");
  }
}

std::string to_string(Variant v) { return std::string(1, static_cast<char>('A' + static_cast<int>(v))); }

Variant variant_from_string(const std::string& s) {
  if (s.size() == 1 && s[0] >= 'A' && s[0] <= 'E') return static_cast<Variant>(s[0] - 'A');
  throw ContractError("unknown ablation variant '" + s + "' (expected A, B, C, D or E)");
}

ModelConfig moe_config_for(const ModelConfig& dense, const AblationConfig& ablation) {
  ModelConfig c = dense.with_kind(FfnKind::Moe);
  c.has_shared_expert = ablation.shared_init != SharedInit::None;
  return c;
}

namespace {

constexpr const char* kProj[] = {".gate_proj", ".up_proj", ".down_proj"};

const Checkpoint& require_dense(const Checkpoint& c, const std::string& role) {
  if (c.kind() != FfnKind::Dense) throw AssemblyError(role + " checkpoint must be dense");
  return c;
}

Tensor donor_copy(const Checkpoint& donor, const std::string& role, const std::string& donor_name, std::size_t layer,
                  const std::string& slot, const Shape& shape) {
  if (!donor.has(donor_name)) {
    throw AssemblyError("layer " + std::to_string(layer) + ", parameter " + slot + ": " + role + " checkpoint has no '" +
                        donor_name + "'");
  }
  const Tensor& src = donor.get(donor_name);
  if (src.shape() != shape) {
    throw AssemblyError("layer " + std::to_string(layer) + ", parameter " + slot + ": " + role + " '" + donor_name +
                        "' is " + shape_str(src.shape()) + ", slot expects " + shape_str(shape));
  }
  return src.clone();
}

}  // namespace

Checkpoint assemble_moe(const Checkpoint& base, const std::vector<Checkpoint>& language_ckpts,
                        const std::optional<Checkpoint>& mixed_ckpt, const AblationConfig& ablation,
                        const ModelConfig& model_cfg, std::uint64_t seed, double router_std) {
  ablation.validate();
  model_cfg.validate();
  if (model_cfg.ffn_kind != FfnKind::Moe) throw ContractError("assembly target config must be an MoE config");
  if (model_cfg.has_shared_expert != (ablation.shared_init != SharedInit::None)) {
    throw ContractError("assembly target config disagrees with variant " + to_string(ablation.variant) +
                        " about the shared expert");
  }
  require_dense(base, "base");
  const bool need_mixed =
      ablation.routed_init == RoutedInit::MixedCkpt || ablation.shared_init == SharedInit::MixedCkpt;
  if (need_mixed && !mixed_ckpt) {
    throw ContractError("variant " + to_string(ablation.variant) + " requires a mixed checkpoint");
  }
  if (mixed_ckpt) require_dense(*mixed_ckpt, "mixed");
  if (ablation.routed_init == RoutedInit::LanguageCkpts) {
    if (language_ckpts.size() != model_cfg.n_routed_experts) {
      throw ContractError("variant " + to_string(ablation.variant) + " needs " +
                          std::to_string(model_cfg.n_routed_experts) + " language checkpoints, got " +
                          std::to_string(language_ckpts.size()));
    }
    for (std::size_t i = 0; i < language_ckpts.size(); ++i) {
      require_dense(language_ckpts[i], "language " + std::to_string(i));
    }
  }

  Checkpoint out(model_cfg);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, router_std);

  for (const auto& [name, shape] : parameter_manifest(model_cfg)) {
    std::size_t layer = 0;
    std::size_t expert = 0;
    char rest[64] = {0};
    if (std::sscanf(name.c_str(), "layers.%zu.moe.%63s", &layer, rest) != 2) {
      if (!base.has(name)) throw AssemblyError("base checkpoint has no '" + name + "'");
      const Tensor& src = base.get(name);
      if (src.shape() != shape) {
        throw AssemblyError("parameter " + name + ": base is " + shape_str(src.shape()) + ", target expects " +
                            shape_str(shape));
      }
      out.set(name, src.clone());
      continue;
    }
    const std::string tail(rest);
    const std::string dense_prefix = dense_ffn_prefix(layer);
    if (tail == "router") {
      Tensor t = Tensor::zeros(shape);
      for (auto& v : t.mutable_data()) v = round_to_storage(normal(rng));
      out.set(name, std::move(t));
    } else if (tail.rfind("shared_gate", 0) == 0) {
      out.set(name, Tensor::zeros(shape));
    } else if (std::sscanf(tail.c_str(), "experts.%zu", &expert) == 1) {
      const std::string proj = tail.substr(tail.rfind('.'));
      if (ablation.routed_init == RoutedInit::LanguageCkpts) {
        out.set(name, donor_copy(language_ckpts[expert], "language " + std::to_string(expert), dense_prefix + proj,
                                 layer, name, shape));
      } else {
        out.set(name, donor_copy(*mixed_ckpt, "mixed", dense_prefix + proj, layer, name, shape));
      }
    } else if (tail.rfind("shared.", 0) == 0) {
      const std::string proj = tail.substr(tail.rfind('.'));
      if (ablation.shared_init == SharedInit::MixedCkpt) {
        out.set(name, donor_copy(*mixed_ckpt, "mixed", dense_prefix + proj, layer, name, shape));
      } else {
        out.set(name, donor_copy(base, "base", dense_prefix + proj, layer, name, shape));
      }
    } else {
      throw AssemblyError("unexpected MoE parameter '" + name + "'");
    }
  }

  if (!ablation.shared_trainable && model_cfg.has_shared_expert) {
    for (std::size_t l = 0; l < model_cfg.n_layers; ++l) {
      for (const char* p : kProj) out.frozen.insert(shared_expert_prefix(l) + p);
    }
  }

  std::string mapping;
  for (std::size_t i = 0; i < model_cfg.n_routed_experts; ++i) {
    const std::string lang = i < model_cfg.languages.size() ? model_cfg.languages[i] : "?";
    mapping += (i ? "," : "") + std::to_string(i) + ":" + lang;
  }
  out.provenance = "assembled:config" + to_string(ablation.variant) + ";experts=" + mapping +
                   ";seed=" + std::to_string(seed);
  out.validate();
  return out;
}

}  // namespace fpmoe::pipeline
