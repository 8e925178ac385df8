#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ldn/nn/layers.h"

namespace ldn {

inline constexpr int kCheckpointSchemaVersion = 1;

struct CheckpointMeta {
  int schema_version = kCheckpointSchemaVersion;
  std::string kind;         // "inpainter", "glyphnet", "ornanet", "pipeline"
  std::string config_hash;  // digest of the model-defining config
  std::uint64_t seed = 0;
  long step = 0;
  // Model-specific fields (input_size, latent_dim, char_set, ...).
  nlohmann::json extra = nlohmann::json::object();
};

struct NamedTensor {
  std::string name;
  nn::Tensor value;
};

struct Checkpoint {
  CheckpointMeta meta;
  std::vector<NamedTensor> params;
  std::string blob_sha256;

  // Short identifier for audits: kind plus blob digest prefix.
  std::string id() const;

  // Copies values into `params` by name; every parameter must be present
  // with the same shape.
  void apply_to(const nn::ParameterList& params) const;
};

// Writes <dir>/params.bin and <dir>/meta.json. params.bin layout:
//   "LDNP" u32 version u32 count, then per tensor:
//   u32 name_len, name bytes, i32 n c h w, n*c*h*w little-endian float64.
// meta.json records the blob length and SHA-256 for integrity checks.
Checkpoint save_checkpoint(const std::filesystem::path& dir,
                           const nn::ParameterList& params,
                           const CheckpointMeta& meta);

// Throws IoError when missing, SchemaError on version or kind mismatch or
// when `expected_config_hash` differs (both hashes in the message), and
// IntegrityError when the blob length or digest does not match.
Checkpoint load_checkpoint(
    const std::filesystem::path& dir,
    const std::optional<std::string>& expected_kind = std::nullopt,
    const std::optional<std::string>& expected_config_hash = std::nullopt);

}  // namespace ldn
