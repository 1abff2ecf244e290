#pragma once

#include <filesystem>
#include <optional>

#include <nlohmann/json.hpp>

#include "simulrl/model.hpp"
#include "simulrl/optim.hpp"

namespace simulrl {

// Binary layout: "SIMULRL\0", u32 version, u64 header length, JSON header
// (model config, tensor table, meta, optimizer flag), f64 parameter values,
// optional Adam m and v, then an FNV-1a 64 checksum of everything before it.
struct Checkpoint {
  ModelParams params;
  std::optional<AdamState> optimizer;
  nlohmann::json meta = nlohmann::json::object();
};

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);  // throws ConfigError

// Writes atomically (temp file + rename).
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws DataError on a bad magic, version, checksum or tensor table.
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t hash = 0xcbf29ce484222325ULL);

}  // namespace simulrl
