#pragma once

// Stage-wise training of the three sub-networks (style s->m, fog m->t, dual s->t)
// with shared-part hand-off and pseudo labels for the intermediate domain.

#include <optional>
#include <span>
#include <vector>

#include <torch/torch.h>

#include "cudanet/data.hpp"
#include "cudanet/image.hpp"
#include "cudanet/losses.hpp"
#include "cudanet/state.hpp"
#include "cudanet/training.hpp"

namespace cudanet {

struct DecompositionConfig {
  bool source_warmup = true;  // segmentation-only training on s before s->m
  StageConfig source;
  StageConfig s2m;
  StageConfig m2t;
  StageConfig s2t;
  LossWeights weights;
};

// Everything a stage needs besides the state.
struct TrainingContext {
  const TrainingData& data;
  const PerceptualExtractor& extractor;
  LossWeights weights;
  TrainingHooks hooks;
};

// Content encoder + seg head (main and auxiliary) on labeled s images only.
void train_source_only(NetworkState& state, const DomainSplit& source, const StageConfig& cfg, const TrainingHooks& hooks);

// Optimizes the pair loss for `pair_stage` (s2m, m2t or s2t). Shared parts and the
// stage's private pair are trainable; every other private encoder is frozen.
// `labels_a` are true or pseudo labels for `images_a`; undefined labels throw PipelineError.
void train_stage(NetworkState& state, Stage pair_stage, const torch::Tensor& images_a, const torch::Tensor& labels_a,
                 const torch::Tensor& images_b, const StageConfig& cfg, const LossWeights& weights,
                 const PerceptualExtractor& extractor, const TrainingHooks& hooks);

// Copy of `from` ready for `to_stage`: shared parts and earlier private encoders kept,
// the new pair freshly initialized. Out-of-order transitions throw PipelineError.
NetworkState transfer_shared(const NetworkState& from, Stage to_stage);

// Per pixel: argmax class when its probability reaches `threshold`, else the ignore id.
// `probabilities` is [N, C, H, W]; returns int64 [N, H, W].
torch::Tensor pseudo_labels_from_heatmap(const torch::Tensor& probabilities, std::optional<double> threshold);

// Batched inference through the content encoder and seg head.
torch::Tensor predict_probabilities(NetworkState& state, const torch::Tensor& images, int batch_size = 16);
torch::Tensor generate_pseudo_labels(NetworkState& state, const torch::Tensor& images, std::optional<double> threshold);
std::vector<LabelMap> generate_pseudo_labels(NetworkState& state, std::span<const Image> images,
                                             std::optional<double> threshold);

// Runs the remaining stages of source -> s2m -> m2t -> s2t starting from `state`
// (a fresh state starts at the beginning; a loaded checkpoint resumes after its stage).
// Each finished stage is reported through hooks.on_checkpoint as "stage_<name>".
NetworkState run_decomposition(NetworkState state, const TrainingContext& ctx, const DecompositionConfig& cfg);

}  // namespace cudanet
