#pragma once

// Shared training-loop machinery: stage configuration, logging and checkpoint
// hooks, the freeze audit, and the generic optimizer loop used by every stage.

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "cudanet/state.hpp"

namespace cudanet {

struct StageConfig {
  int steps = 2000;
  int batch_size = 4;
  double lr = 2.5e-4;       // shared parts and private encoders
  double disc_lr = 1e-4;    // discriminator
  double poly_power = 0.9;  // lr * (1 - step / steps)^power
  AdamConfig adam;
  std::optional<double> pseudo_label_threshold;  // none: plain argmax
  int log_every = 10;

  void validate(std::string_view name) const;
};

void to_json(nlohmann::json& j, const StageConfig& c);
void from_json(const nlohmann::json& j, StageConfig& c);

// One frozen-group comparison made by the freeze audit.
struct FreezeAuditRecord {
  std::string phase;  // e.g. "cycle1/style"
  int step = 0;
  std::string group;
  std::uint64_t hash_before = 0;
  std::uint64_t hash_after = 0;
};

struct TrainingHooks {
  std::function<void(const nlohmann::json&)> log;                    // one record per logged step
  std::function<void(const std::string& tag, NetworkState&)> on_checkpoint;  // after each stage / cycle step
  std::function<void(const FreezeAuditRecord&)> on_freeze_audit;
  int freeze_audit_every = 50;  // plus the first and the last step
};

// What one optimizer step minimizes.
struct StepLoss {
  torch::Tensor objective;      // reaches every trainable group except the discriminator
  torch::Tensor discriminator;  // optional; reaches only the discriminator
  std::map<std::string, double> breakdown;
};

// Runs `cfg.steps` optimizer steps. Trainable groups are those not frozen in `state`.
// Non-finite objectives throw NumericalError carrying the breakdown.
// Frozen groups are hash-checked at sampled steps; a change throws PipelineError.
void run_training_loop(NetworkState& state, const std::string& phase, const StageConfig& cfg,
                       const std::function<StepLoss(int step)>& compute, const TrainingHooks& hooks);

// Uniform sampling with replacement driven by the state RNG.
torch::Tensor sample_indices(NetworkState& state, std::int64_t population, int count);

}  // namespace cudanet
