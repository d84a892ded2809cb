#pragma once

// Triangle-consistency loss over private codes and the cyclical,
// freeze-scheduled training that uses it.

#include <array>
#include <optional>
#include <string_view>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "cudanet/data.hpp"
#include "cudanet/decomposition.hpp"
#include "cudanet/losses.hpp"
#include "cudanet/state.hpp"
#include "cudanet/training.hpp"

namespace cudanet {

enum class DistanceMetric { kL1, kL2, kCosine };

std::string_view metric_name(DistanceMetric m);  // l1, l2, cosine
DistanceMetric parse_metric(std::string_view name);

// Per-sample distance between rows of [N, D] codes, then the batch mean.
// Cosine distance of a zero vector throws NumericalError.
torch::Tensor private_distance(const torch::Tensor& a, const torch::Tensor& b, DistanceMetric metric);

// (d_style + d_fog - d_dual)^2
double cumulative_residual(double d_style, double d_fog, double d_dual);

struct CodePair {
  torch::Tensor first;
  torch::Tensor second;
};

// z_style = (z_m^1, z_s^1), z_fog = (z_t^2, z_m^2), z_dual = (z_t^3, z_s^3).
torch::Tensor cumulative_loss(const CodePair& z_style, const CodePair& z_fog, const CodePair& z_dual, DistanceMetric metric);

enum class CycleStep { kStyle, kFog, kDual };

std::string_view cycle_step_name(CycleStep s);  // style, fog, dual
Stage pair_stage_of(CycleStep s);

struct CycleConfig {
  int cycles = 3;
  double lambda_cum = 0.25;
  DistanceMetric metric = DistanceMetric::kL2;
  StageConfig step;  // each style/fog/dual step

  void validate() const;
};

void to_json(nlohmann::json& j, const CycleConfig& c);
void from_json(const nlohmann::json& j, CycleConfig& c);

// One aligned sample of every domain.
struct TripletBatch {
  torch::Tensor x_s;
  torch::Tensor y_s;
  torch::Tensor x_m;
  torch::Tensor y_m;  // pseudo labels; needed by the fog step only
  torch::Tensor x_t;
};

struct FinalLoss {
  FdnLoss pair;
  torch::Tensor cumulative;  // L_cum over all six codes of the batch
  std::array<torch::Tensor, 3> distances;  // style, fog, dual
  torch::Tensor total;  // pair.total + lambda * cumulative
};

FinalLoss final_loss(CycleStep kind, const TripletBatch& batch, NetworkState& state, const LossWeights& weights,
                     const PerceptualExtractor& extractor, double lambda_cum, DistanceMetric metric);

// T cycles of (style, fog, dual) steps. Each step trains the shared parts and its
// own private pair; the other two pairs stay frozen. Pseudo labels for m are
// refreshed at the start of every fog step. Resumes from state.cycle_steps_done.
// Reports "cycle_<t>_<step>" after each step and "final" at the end via hooks.on_checkpoint.
NetworkState run_cyclic_training(NetworkState state, const TrainingContext& ctx, const CycleConfig& cfg);

}  // namespace cudanet
