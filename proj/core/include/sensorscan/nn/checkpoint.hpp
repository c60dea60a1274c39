#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sensorscan/nn/optim.hpp"

namespace sensorscan::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Mat value;
};

// Versioned binary container: magic "SSCANCKP", version, kind, config JSON, config fingerprint,
// named tensors and an optional optimizer state. Values are stored as little-endian float64.
struct Checkpoint {
  std::string kind;
  std::string config_json;
  std::string fingerprint;
  std::vector<NamedTensor> tensors;
  std::optional<AdamState> optimizer;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& source = "<memory>");

std::vector<NamedTensor> snapshot(const ParamRefs& params);
// Copies tensors into params by name. Every param must be present with an identical shape.
void restore(const std::vector<NamedTensor>& tensors, const ParamRefs& params);

}  // namespace sensorscan::nn
