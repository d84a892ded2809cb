#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "cudanet/image.hpp"
#include "cudanet/state.hpp"
#include "cudanet/synth.hpp"

namespace cudanet {

// Rows are ground truth, columns are predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  // Pixels whose ground truth is the ignore id are skipped. Other ids >= C throw DataError.
  void accumulate(const LabelMap& pred, const LabelMap& gt);
  // Same for int64 tensors of equal shape.
  void accumulate(const torch::Tensor& pred, const torch::Tensor& gt);
  void merge(const ConfusionMatrix& other);

  [[nodiscard]] int num_classes() const { return num_classes_; }
  [[nodiscard]] std::int64_t at(int gt, int pred) const { return counts_[static_cast<size_t>(gt * num_classes_ + pred)]; }
  std::int64_t& at(int gt, int pred) { return counts_[static_cast<size_t>(gt * num_classes_ + pred)]; }
  [[nodiscard]] std::int64_t total() const;

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  int num_classes_;
  std::vector<std::int64_t> counts_;
};

struct MiouResult {
  std::vector<std::optional<double>> per_class;  // empty when the class never occurs in gt or pred
  double mean = 0.0;
};

// IoU_c = TP / (TP + FP + FN); empty classes are left out of the mean.
// Throws NumericalError when every class is empty.
MiouResult miou(const ConfusionMatrix& cm);

struct EvalReport {
  std::string split;
  std::vector<std::string> class_names;
  MiouResult result;
  std::int64_t pixel_count = 0;
};

nlohmann::json to_json(const EvalReport& r);

// Maps a batch of images [N, 3, H, W] to label predictions [N, H, W].
using Predictor = std::function<torch::Tensor(const torch::Tensor&)>;

Predictor network_predictor(NetworkState& state);

// Ground truth of `domain` (hidden labels included) against `predict`.
EvalReport evaluate(const Predictor& predict, const DatasetManifest& manifest, Domain domain, int num_classes);
EvalReport evaluate(NetworkState& state, const DatasetManifest& manifest, Domain domain);

}  // namespace cudanet
