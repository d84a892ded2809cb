#include "cudanet/data.hpp"

#include <string>

#include "cudanet/errors.hpp"

namespace cudanet {

torch::Tensor images_to_tensor(std::span<const Image> images) {
  if (images.empty()) return torch::empty({0, 3, 0, 0});
  const int h = images.front().height;
  const int w = images.front().width;
  auto out = torch::empty({static_cast<int64_t>(images.size()), 3, h, w}, torch::kFloat32);
  auto acc = out.accessor<float, 4>();
  for (size_t n = 0; n < images.size(); ++n) {
    const Image& img = images[n];
    if (img.height != h || img.width != w) throw ShapeError("images in a split must share one size");
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < 3; ++c) acc[static_cast<int64_t>(n)][c][y][x] = img.at(y, x, c);
      }
    }
  }
  return out;
}

torch::Tensor labels_to_tensor(std::span<const LabelMap> labels) {
  if (labels.empty()) return torch::empty({0, 0, 0}, torch::kLong);
  const int h = labels.front().height;
  const int w = labels.front().width;
  auto out = torch::empty({static_cast<int64_t>(labels.size()), h, w}, torch::kLong);
  auto acc = out.accessor<int64_t, 3>();
  for (size_t n = 0; n < labels.size(); ++n) {
    if (labels[n].height != h || labels[n].width != w) throw ShapeError("label maps in a split must share one size");
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) acc[static_cast<int64_t>(n)][y][x] = labels[n].at(y, x);
    }
  }
  return out;
}

Image tensor_to_image(const torch::Tensor& chw) {
  const auto t = chw.detach().to(torch::kFloat32).contiguous();
  if (t.dim() != 3 || t.size(0) != 3) throw ShapeError("expected a [3, H, W] tensor");
  Image img(static_cast<int>(t.size(1)), static_cast<int>(t.size(2)));
  auto acc = t.accessor<float, 3>();
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = acc[c][y][x];
    }
  }
  return img;
}

LabelMap tensor_to_labels(const torch::Tensor& hw) {
  const auto t = hw.detach().to(torch::kLong).contiguous();
  if (t.dim() != 2) throw ShapeError("expected a [H, W] label tensor");
  LabelMap lm(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)));
  auto acc = t.accessor<int64_t, 2>();
  for (int y = 0; y < lm.height; ++y) {
    for (int x = 0; x < lm.width; ++x) {
      const auto v = acc[y][x];
      if (v < 0 || v > 255) throw DataError("label id out of 8-bit range");
      lm.at(y, x) = static_cast<std::uint8_t>(v);
    }
  }
  return lm;
}

DomainSplit load_split(const DatasetManifest& manifest, Domain domain, LabelAccess access) {
  const auto entries = manifest.split(domain);
  if (entries.empty()) throw PrerequisiteError("dataset has no entries for split " + std::string(domain_tag(domain)));
  std::vector<Image> images;
  std::vector<LabelMap> labels;
  DomainSplit split;
  split.domain = domain;
  bool want_labels = true;
  for (const auto* e : entries) {
    if (e->label.empty() || (e->label_hidden && access == LabelAccess::kTraining)) want_labels = false;
  }
  for (const auto* e : entries) {
    images.push_back(read_png_rgb(manifest.root / e->image));
    if (want_labels) labels.push_back(read_png_labels(manifest.root / e->label));
    split.seeds.push_back(e->seed);
  }
  split.images = images_to_tensor(images);
  if (want_labels) split.labels = labels_to_tensor(labels);
  return split;
}

TrainingData load_training_data(const DatasetManifest& manifest) {
  TrainingData data;
  data.s = load_split(manifest, Domain::kSource, LabelAccess::kTraining);
  if (!data.s.has_labels()) throw PrerequisiteError("source split has no labels");
  data.m = load_split(manifest, Domain::kIntermediate, LabelAccess::kTraining);
  data.t = load_split(manifest, Domain::kTarget, LabelAccess::kTraining);
  return data;
}

}  // namespace cudanet
