#pragma once

// Single-file checkpoint:
//
//   "CUDANET-CKPT-v1\n"
//   uint64 little-endian header length
//   JSON header (stage, dims, flags, RNG state, config echo, tensor directory)
//   raw tensor bytes referenced by offset from the header
//
// Saving a loaded checkpoint reproduces the original bytes.

#include <filesystem>
#include <optional>
#include <string_view>

#include <nlohmann/json.hpp>

#include "cudanet/state.hpp"

namespace cudanet {

inline constexpr std::string_view kCheckpointMagic = "CUDANET-CKPT-v1";

struct LoadedCheckpoint {
  NetworkState state;
  nlohmann::json config;
};

void save_checkpoint(const std::filesystem::path& path, const NetworkState& state, const nlohmann::json& config_echo);

// Throws PrerequisiteError when the file is missing, DataError when it is corrupt,
// and ConfigError when `expected_dims` disagrees with the stored model.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 const std::optional<ModelDims>& expected_dims = std::nullopt);

}  // namespace cudanet
