#pragma once

// Experiment configuration: one JSON document drives every command.
//
//   {
//     "seed": 7,
//     "output_dir": "runs/default",
//     "data_dir": "",            (empty: <output_dir>/data)
//     "dataset": { ...DatasetConfig... },
//     "model": {"content_dim": 32, "private_dim": 8},
//     "loss": {"rec": 0.5, "trans": 0.1, "seg": 1.0, "segadv": 1.0},
//     "train": {"source_warmup": true, "source": {...}, "s2m": {...}, "m2t": {...}, "s2t": {...}},
//     "cycle": {"cycles": 3, "lambda_cum": 0.25, "metric": "l2", "step": {...}}
//   }
//
// Missing keys take defaults; unknown keys are rejected with their dotted path.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cudanet/cumulative.hpp"
#include "cudanet/decomposition.hpp"
#include "cudanet/losses.hpp"
#include "cudanet/nets.hpp"
#include "cudanet/synth.hpp"

namespace cudanet {

struct ExperimentConfig {
  std::uint64_t seed = 7;
  std::string output_dir = "runs/default";
  std::string data_dir;
  DatasetConfig dataset;
  int content_dim = 32;
  int private_dim = 8;
  DecompositionConfig train;  // includes the loss weights
  CycleConfig cycle;

  [[nodiscard]] ModelDims dims() const { return {dataset.num_classes, content_dim, private_dim}; }
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& c);
ExperimentConfig experiment_from_json(const nlohmann::json& j);

// Layers `overlay` onto `base`; every overlay key must already exist in `base`.
void merge_strict(nlohmann::json& base, const nlohmann::json& overlay, const std::string& prefix = "");

// "a.b.c=value"; value is parsed as JSON when possible, otherwise taken as a string.
void apply_override(nlohmann::json& config, const std::string& assignment);

// Defaults <- file (optional) <- overrides <- CUDANET_SEED. Throws ConfigError on any bad key or value.
ExperimentConfig load_experiment_config(const std::optional<std::filesystem::path>& file,
                                        const std::vector<std::string>& overrides = {});

// FNV-1a of the canonical JSON dump without the two location keys, as 16 hex digits.
std::string config_hash(const ExperimentConfig& c);
// Short id derived from the config hash: the first 12 hex digits.
std::string run_id(const ExperimentConfig& c);

}  // namespace cudanet
