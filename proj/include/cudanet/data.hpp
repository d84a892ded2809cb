#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <torch/torch.h>

#include "cudanet/image.hpp"
#include "cudanet/synth.hpp"

namespace cudanet {

// Who is asking for labels. Training may only see labels that are not hidden;
// evaluation may read hidden ground truth.
enum class LabelAccess { kTraining, kEvaluation };

struct DomainSplit {
  Domain domain = Domain::kSource;
  torch::Tensor images;  // [N, 3, H, W] float32 in [0, 1]
  torch::Tensor labels;  // [N, H, W] int64, undefined when not visible to the caller
  std::vector<std::uint64_t> seeds;

  [[nodiscard]] std::int64_t size() const { return images.defined() ? images.size(0) : 0; }
  [[nodiscard]] bool has_labels() const { return labels.defined(); }
};

struct TrainingData {
  DomainSplit s;
  DomainSplit m;
  DomainSplit t;
};

DomainSplit load_split(const DatasetManifest& manifest, Domain domain, LabelAccess access);
// s with labels, m and t without.
TrainingData load_training_data(const DatasetManifest& manifest);

torch::Tensor images_to_tensor(std::span<const Image> images);
torch::Tensor labels_to_tensor(std::span<const LabelMap> labels);
Image tensor_to_image(const torch::Tensor& chw);
LabelMap tensor_to_labels(const torch::Tensor& hw);

}  // namespace cudanet
