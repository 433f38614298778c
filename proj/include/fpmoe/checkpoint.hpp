#pragma once
// Named-parameter store and its binary wire format.
//
// Layout (all integers little-endian, no padding):
//   "FPM1" | u32 version (=1) | u64 metadata length | metadata (UTF-8 JSON) |
//   float32 LE arrays concatenated in manifest order.
// The metadata carries the model config, the ordered parameter manifest
// (name, shape, dtype), the checkpoint kind, provenance, and frozen names.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "fpmoe/config.hpp"
#include "fpmoe/tensor.hpp"

namespace fpmoe {

inline constexpr std::string_view kCheckpointMagic = "FPM1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Parameters are held in float64 for arithmetic but always carry values that
// are exactly representable in float32, the storage precision.
double round_to_storage(double v);
void round_to_storage(Tensor& t);

class Checkpoint {
 public:
  ModelConfig config;
  std::string provenance;
  std::set<std::string> frozen;

  Checkpoint() = default;
  explicit Checkpoint(ModelConfig cfg) : config(std::move(cfg)) {}

  FfnKind kind() const { return config.ffn_kind; }

  bool has(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  // Inserts or replaces; new names append to the manifest order.
  void set(const std::string& name, Tensor value);

  const std::vector<std::pair<std::string, Tensor>>& params() const { return params_; }
  std::vector<std::pair<std::string, Tensor>>& params() { return params_; }

  bool is_frozen(const std::string& name) const { return frozen.count(name) != 0; }

  // Deep copy: no tensor storage is shared with the source.
  Checkpoint clone() const;

  // Checks that names/shapes/order match parameter_manifest(config) exactly.
  void validate() const;

 private:
  std::vector<std::pair<std::string, Tensor>> params_;
  std::map<std::string, std::size_t> index_;
};

// Fresh parameters: N(0, init_std) matrices, unit norm weights, zero shared
// gate. `zero_head` zeroes lm_head (uniform next-token distribution).
struct InitOptions {
  double init_std = 0.02;
  bool zero_head = false;
};
Checkpoint init_checkpoint(const ModelConfig& config, std::uint64_t seed, const InitOptions& options = {});

std::string serialize_checkpoint(const Checkpoint& ckpt);
// Throws CheckpointError with a distinct code per failure.
Checkpoint deserialize_checkpoint(std::string_view bytes, std::optional<FfnKind> expected_kind = std::nullopt);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<FfnKind> expected_kind = std::nullopt);

// Bitwise equality of config, kind, provenance, frozen set and every array.
bool bitwise_equal(const Checkpoint& a, const Checkpoint& b);
bool bitwise_equal(const Tensor& a, const Tensor& b);

}  // namespace fpmoe
