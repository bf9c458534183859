#pragma once

#include <filesystem>
#include <string>

#include "sfot/tinynet.hpp"

namespace sfot::nn {

/// Checkpoint file: one line of JSON header ({"format", "metadata",
/// "tensors": [{"name", "rows", "cols"}], "payload_bytes"}) followed by the
/// parameter values as little-endian IEEE-754 binary64 in store order.
struct Checkpoint {
  std::string metadata_json = "{}";
  ParamStore params;
};

inline constexpr const char* kCheckpointFormat = "sfot-checkpoint-v1";

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sfot::nn
