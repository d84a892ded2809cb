#include "cudanet/eval.hpp"

#include <numeric>

#include "cudanet/data.hpp"
#include "cudanet/decomposition.hpp"
#include "cudanet/errors.hpp"

namespace cudanet {

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : num_classes_(num_classes), counts_(static_cast<size_t>(num_classes) * static_cast<size_t>(num_classes), 0) {
  if (num_classes < 1) throw ConfigError("confusion matrix needs at least one class");
}

void ConfusionMatrix::accumulate(const LabelMap& pred, const LabelMap& gt) {
  if (pred.height != gt.height || pred.width != gt.width) throw ShapeError("prediction and ground truth differ in size");
  for (int y = 0; y < gt.height; ++y) {
    for (int x = 0; x < gt.width; ++x) {
      const auto i = static_cast<size_t>(y * gt.width + x);
      const int g = gt.ids[i];
      if (g == LabelMap::kIgnore) continue;
      const int p = pred.ids[i];
      if (g >= num_classes_ || p >= num_classes_) {
        throw DataError("class id " + std::to_string(g >= num_classes_ ? g : p) + " at pixel (" + std::to_string(y) + ", " +
                        std::to_string(x) + ") is outside [0, " + std::to_string(num_classes_) + ")");
      }
      ++at(g, p);
    }
  }
}

void ConfusionMatrix::accumulate(const torch::Tensor& pred, const torch::Tensor& gt) {
  if (pred.sizes() != gt.sizes()) throw ShapeError("prediction and ground truth differ in shape");
  const auto g = gt.reshape({-1}).to(torch::kLong);
  const auto p = pred.reshape({-1}).to(torch::kLong);
  const auto keep = g != LabelMap::kIgnore;
  const auto gk = g.masked_select(keep);
  const auto pk = p.masked_select(keep);
  const auto bad = (gk < 0) | (gk >= num_classes_) | (pk < 0) | (pk >= num_classes_);
  if (bad.any().item<bool>()) {
    const auto flat = keep.nonzero().reshape({-1})[bad.nonzero()[0][0]].item<int64_t>();
    throw DataError("class id outside [0, " + std::to_string(num_classes_) + ") at flat pixel index " + std::to_string(flat));
  }
  const auto counts = torch::bincount(gk * num_classes_ + pk, {}, static_cast<int64_t>(num_classes_) * num_classes_);
  const auto acc = counts.accessor<int64_t, 1>();
  for (size_t i = 0; i < counts_.size(); ++i) counts_[i] += acc[static_cast<int64_t>(i)];
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.num_classes_ != num_classes_) throw ShapeError("cannot merge confusion matrices of different sizes");
  for (size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::int64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0}); }

MiouResult miou(const ConfusionMatrix& cm) {
  const int c = cm.num_classes();
  MiouResult out;
  out.per_class.resize(static_cast<size_t>(c));
  double sum = 0.0;
  int present = 0;
  for (int k = 0; k < c; ++k) {
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    for (int j = 0; j < c; ++j) {
      if (j == k) continue;
      fp += cm.at(j, k);
      fn += cm.at(k, j);
    }
    const auto tp = cm.at(k, k);
    const auto denom = tp + fp + fn;
    if (denom == 0) continue;
    const double iou = static_cast<double>(tp) / static_cast<double>(denom);
    out.per_class[static_cast<size_t>(k)] = iou;
    sum += iou;
    ++present;
  }
  if (present == 0) throw NumericalError("mIoU is undefined: no class occurs in ground truth or prediction");
  out.mean = sum / present;
  return out;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json per_class = nlohmann::json::object();
  for (size_t k = 0; k < r.result.per_class.size(); ++k) {
    const auto name = k < r.class_names.size() ? r.class_names[k] : "class" + std::to_string(k);
    per_class[name] = r.result.per_class[k] ? nlohmann::json(*r.result.per_class[k]) : nlohmann::json(nullptr);
  }
  return {{"split", r.split}, {"per_class", per_class}, {"miou", r.result.mean}, {"pixel_count", r.pixel_count}};
}

Predictor network_predictor(NetworkState& state) {
  return [&state](const torch::Tensor& images) { return predict_probabilities(state, images).argmax(1); };
}

EvalReport evaluate(const Predictor& predict, const DatasetManifest& manifest, Domain domain, int num_classes) {
  const auto split = load_split(manifest, domain, LabelAccess::kEvaluation);
  if (!split.has_labels()) throw DataError("split " + std::string(domain_tag(domain)) + " has no ground truth");
  if (split.size() == 0) throw DataError("split " + std::string(domain_tag(domain)) + " is empty");
  ConfusionMatrix cm(num_classes);
  constexpr int64_t kChunk = 16;
  for (int64_t i = 0; i < split.size(); i += kChunk) {
    const auto n = std::min(kChunk, split.size() - i);
    cm.accumulate(predict(split.images.narrow(0, i, n)), split.labels.narrow(0, i, n));
  }
  EvalReport report;
  report.split = std::string(domain_tag(domain));
  for (int k = 0; k < num_classes; ++k) report.class_names.emplace_back(class_name(k));
  report.result = miou(cm);
  report.pixel_count = cm.total();
  return report;
}

EvalReport evaluate(NetworkState& state, const DatasetManifest& manifest, Domain domain) {
  return evaluate(network_predictor(state), manifest, domain, state.dims.num_classes);
}

}  // namespace cudanet
