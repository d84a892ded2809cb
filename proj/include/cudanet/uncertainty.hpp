#pragma once

// Uncertainty probe: disagreement between the main and auxiliary seg heads,
// averaged per image (variance value) and per dataset (MVV), and the
// style/fog/dual gap report built from the three domain MVVs.

#include <filesystem>
#include <span>
#include <string>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "cudanet/data.hpp"
#include "cudanet/image.hpp"
#include "cudanet/state.hpp"
#include "cudanet/synth.hpp"

namespace cudanet {

// Mean over pixels and classes of (main - aux)^2, one value per image.
// Both heatmaps are [N, C, H, W]; an undefined `aux` throws ConfigError.
torch::Tensor variance_values(const torch::Tensor& main, const torch::Tensor& aux);
torch::Tensor variance_values(NetworkState& state, const torch::Tensor& images);
double variance_value(NetworkState& state, const Image& image);

// Arithmetic mean, independent of the order of `values`. Empty input throws DataError.
double mvv(std::span<const double> values);
double mvv(NetworkState& state, const DomainSplit& split);

struct GapReport {
  std::string model;
  std::string dataset;
  double mvv_s = 0.0;
  double mvv_m = 0.0;
  double mvv_t = 0.0;

  [[nodiscard]] double gap_style() const { return mvv_m - mvv_s; }
  [[nodiscard]] double gap_fog() const { return mvv_t - mvv_m; }
  // Defined as style + fog, so the two parts always sum to it exactly.
  [[nodiscard]] double gap_dual() const { return gap_style() + gap_fog(); }

  bool operator==(const GapReport&) const = default;
};

void to_json(nlohmann::json& j, const GapReport& r);
void from_json(const nlohmann::json& j, GapReport& r);

// MVV of every split of the manifest. A missing or empty split throws DataError naming it.
GapReport gap_report(NetworkState& state, const DatasetManifest& manifest, const std::string& model_tag);

}  // namespace cudanet
