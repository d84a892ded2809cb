#include "cudanet/uncertainty.hpp"

#include <algorithm>
#include <vector>

#include "cudanet/errors.hpp"

namespace cudanet {

torch::Tensor variance_values(const torch::Tensor& main, const torch::Tensor& aux) {
  if (!aux.defined()) throw ConfigError("variance value needs an auxiliary seg head");
  if (!main.defined() || main.sizes() != aux.sizes() || main.dim() != 4) {
    throw ShapeError("variance value expects two [N, C, H, W] heatmaps of equal shape");
  }
  return (main - aux).square().mean({1, 2, 3});
}

torch::Tensor variance_values(NetworkState& state, const torch::Tensor& images) {
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> out;
  constexpr int64_t kChunk = 16;
  for (int64_t i = 0; i < images.size(0); i += kChunk) {
    const auto x = images.narrow(0, i, std::min(kChunk, images.size(0) - i)).to(state.dtype());
    const auto levels = state.content_encoder->forward_levels(x);
    out.push_back(variance_values(state.seg_head(levels.features), state.seg_head->forward_aux(levels.shallow)));
  }
  if (out.empty()) return torch::empty({0}, torch::TensorOptions().dtype(state.dtype()));
  return torch::cat(out, 0);
}

double variance_value(NetworkState& state, const Image& image) {
  const std::vector<Image> one{image};
  return variance_values(state, images_to_tensor(one))[0].item<double>();
}

double mvv(std::span<const double> values) {
  if (values.empty()) throw DataError("MVV of an empty dataset is undefined");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  // Neumaier summation in sorted order.
  double sum = 0.0;
  double comp = 0.0;
  for (const double v : sorted) {
    const double t = sum + v;
    comp += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
    sum = t;
  }
  return (sum + comp) / static_cast<double>(sorted.size());
}

double mvv(NetworkState& state, const DomainSplit& split) {
  if (split.size() == 0) throw DataError("split " + std::string(domain_tag(split.domain)) + " is empty");
  const auto v = variance_values(state, split.images).to(torch::kFloat64).contiguous();
  return mvv(std::span<const double>(v.data_ptr<double>(), static_cast<size_t>(v.numel())));
}

void to_json(nlohmann::json& j, const GapReport& r) {
  j = {{"model", r.model},
       {"dataset", r.dataset},
       {"mvv", {{"s", r.mvv_s}, {"m", r.mvv_m}, {"t", r.mvv_t}}},
       {"gaps", {{"style", r.gap_style()}, {"fog", r.gap_fog()}, {"dual", r.gap_dual()}}}};
}

void from_json(const nlohmann::json& j, GapReport& r) {
  try {
    r.model = j.at("model").get<std::string>();
    r.dataset = j.at("dataset").get<std::string>();
    r.mvv_s = j.at("mvv").at("s").get<double>();
    r.mvv_m = j.at("mvv").at("m").get<double>();
    r.mvv_t = j.at("mvv").at("t").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed gap report: ") + e.what());
  }
}

GapReport gap_report(NetworkState& state, const DatasetManifest& manifest, const std::string& model_tag) {
  GapReport r;
  r.model = model_tag;
  r.dataset = manifest.root.string();
  double* slots[] = {&r.mvv_s, &r.mvv_m, &r.mvv_t};
  for (size_t i = 0; i < kAllDomains.size(); ++i) {
    const auto d = kAllDomains[i];
    if (manifest.count(d) == 0) throw DataError("gap report needs split " + std::string(domain_tag(d)) + ", which is missing");
    *slots[i] = mvv(state, load_split(manifest, d, LabelAccess::kTraining));
  }
  return r;
}

}  // namespace cudanet
