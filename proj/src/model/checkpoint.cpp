#include "fpmoe/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <random>

#include "fpmoe/errors.hpp"
#include "fpmoe/io.hpp"

namespace fpmoe {

using nlohmann::json;

double round_to_storage(double v) { return static_cast<double>(static_cast<float>(v)); }

void round_to_storage(Tensor& t) {
  for (auto& v : t.mutable_data()) v = round_to_storage(v);
}

const Tensor& Checkpoint::get(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("checkpoint has no parameter '" + name + "'");
  return params_[it->second].second;
}

Tensor& Checkpoint::get(const std::string& name) {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("checkpoint has no parameter '" + name + "'");
  return params_[it->second].second;
}

void Checkpoint::set(const std::string& name, Tensor value) {
  const auto it = index_.find(name);
  if (it != index_.end()) {
    params_[it->second].second = std::move(value);
    return;
  }
  index_.emplace(name, params_.size());
  params_.emplace_back(name, std::move(value));
}

Checkpoint Checkpoint::clone() const {
  Checkpoint c(config);
  c.provenance = provenance;
  c.frozen = frozen;
  for (const auto& [name, t] : params_) c.set(name, t.clone());
  return c;
}

void Checkpoint::validate() const {
  const auto manifest = parameter_manifest(config);
  if (manifest.size() != params_.size()) {
    throw CheckpointError(CheckpointError::Code::ShapeMismatch,
                          "checkpoint holds " + std::to_string(params_.size()) + " parameters, config expects " +
                              std::to_string(manifest.size()));
  }
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto& [name, shape] = manifest[i];
    if (params_[i].first != name || params_[i].second.shape() != shape) {
      throw CheckpointError(CheckpointError::Code::ShapeMismatch,
                            "parameter #" + std::to_string(i) + " is '" + params_[i].first + "' " +
                                shape_str(params_[i].second.shape()) + ", config expects '" + name + "' " +
                                shape_str(shape));
    }
  }
  for (const auto& f : frozen) {
    if (!has(f)) throw CheckpointError(CheckpointError::Code::BadMetadata, "frozen name '" + f + "' is not a parameter");
  }
}

Checkpoint init_checkpoint(const ModelConfig& config, std::uint64_t seed, const InitOptions& options) {
  config.validate();
  Checkpoint ckpt(config);
  ckpt.provenance = "init:seed=" + std::to_string(seed);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, options.init_std);
  auto ends_with = [](const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  for (const auto& [name, shape] : parameter_manifest(config)) {
    Tensor t = Tensor::zeros(shape);
    auto data = t.mutable_data();
    if (ends_with(name, "_norm") || name == "final_norm") {
      std::fill(data.begin(), data.end(), 1.0);
    } else if (name.find("shared_gate") != std::string::npos) {
      // lambda starts at sigmoid(0) = 0.5
    } else if (name == "lm_head" && options.zero_head) {
      // uniform next-token distribution
    } else {
      for (auto& v : data) v = round_to_storage(normal(rng));
    }
    ckpt.set(name, std::move(t));
  }
  return ckpt;
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_le(std::string_view bytes, std::size_t offset, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  }
  return v;
}

json metadata_of(const Checkpoint& ckpt) {
  json manifest = json::array();
  for (const auto& [name, t] : ckpt.params()) {
    manifest.push_back({{"name", name}, {"shape", t.shape()}, {"dtype", "float32"}});
  }
  return json{{"config", ckpt.config},
              {"kind", to_string(ckpt.kind())},
              {"provenance", ckpt.provenance},
              {"frozen", std::vector<std::string>(ckpt.frozen.begin(), ckpt.frozen.end())},
              {"params", manifest}};
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const std::string meta = metadata_of(ckpt).dump();
  std::size_t total = 0;
  for (const auto& [name, t] : ckpt.params()) total += t.numel();

  std::string out;
  out.reserve(16 + meta.size() + 4 * total);
  out.append(kCheckpointMagic);
  put_u32(out, kCheckpointVersion);
  put_u64(out, meta.size());
  out.append(meta);
  for (const auto& [name, t] : ckpt.params()) {
    for (double v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

Checkpoint deserialize_checkpoint(std::string_view bytes, std::optional<FfnKind> expected_kind) {
  using Code = CheckpointError::Code;
  if (bytes.size() < 4 || bytes.substr(0, 4) != kCheckpointMagic) throw CheckpointError(Code::BadMagic, "bad magic");
  if (bytes.size() < 16) throw CheckpointError(Code::Truncated, "truncated header");
  const auto version = static_cast<std::uint32_t>(get_le(bytes, 4, 4));
  if (version != kCheckpointVersion) {
    throw CheckpointError(Code::VersionMismatch, "unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint64_t meta_len = get_le(bytes, 8, 8);
  if (meta_len > bytes.size() - 16) throw CheckpointError(Code::Truncated, "truncated metadata");

  json meta;
  Checkpoint ckpt;
  std::vector<std::pair<std::string, Shape>> manifest;
  try {
    meta = json::parse(bytes.substr(16, meta_len));
    ckpt.config = meta.at("config").get<ModelConfig>();
    ckpt.provenance = meta.at("provenance").get<std::string>();
    for (const auto& f : meta.at("frozen")) ckpt.frozen.insert(f.get<std::string>());
    for (const auto& p : meta.at("params")) {
      if (p.at("dtype").get<std::string>() != "float32") {
        throw CheckpointError(Code::BadMetadata, "unsupported dtype for '" + p.at("name").get<std::string>() + "'");
      }
      manifest.emplace_back(p.at("name").get<std::string>(), p.at("shape").get<Shape>());
    }
    if (ffn_kind_from_string(meta.at("kind").get<std::string>()) != ckpt.config.ffn_kind) {
      throw CheckpointError(Code::BadMetadata, "metadata kind disagrees with config");
    }
  } catch (const json::exception& e) {
    throw CheckpointError(Code::BadMetadata, std::string("malformed metadata: ") + e.what());
  } catch (const ContractError& e) {
    throw CheckpointError(Code::BadMetadata, std::string("malformed metadata: ") + e.what());
  }

  if (expected_kind && *expected_kind != ckpt.kind()) {
    throw CheckpointError(Code::KindMismatch, "expected a " + to_string(*expected_kind) + " checkpoint, found " +
                                                  to_string(ckpt.kind()));
  }

  std::size_t offset = 16 + meta_len;
  for (const auto& [name, shape] : manifest) {
    for (auto d : shape) {
      if (d == 0) throw CheckpointError(Code::ShapeMismatch, "parameter '" + name + "' has a zero dimension");
    }
    const std::size_t n = shape_numel(shape);
    if (bytes.size() - offset < 4 * n) throw CheckpointError(Code::Truncated, "truncated payload at '" + name + "'");
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) {
      values[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(bytes, offset + 4 * i, 4)));
    }
    offset += 4 * n;
    ckpt.set(name, Tensor::from(shape, std::move(values)));
  }
  if (offset != bytes.size()) {
    throw CheckpointError(Code::BadMetadata, std::to_string(bytes.size() - offset) + " trailing bytes after payload");
  }
  ckpt.validate();
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  ckpt.validate();
  io::write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<FfnKind> expected_kind) {
  return deserialize_checkpoint(io::read_file(path), expected_kind);
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  const auto x = a.data(), y = b.data();
  return std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
}

bool bitwise_equal(const Checkpoint& a, const Checkpoint& b) {
  if (!(a.config == b.config) || a.provenance != b.provenance || a.frozen != b.frozen) return false;
  if (a.params().size() != b.params().size()) return false;
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    if (a.params()[i].first != b.params()[i].first) return false;
    if (!bitwise_equal(a.params()[i].second, b.params()[i].second)) return false;
  }
  return true;
}

}  // namespace fpmoe
