#include "cudanet/nets.hpp"

#include <cmath>
#include <random>
#include <string>

#include "cudanet/errors.hpp"

namespace cudanet {
namespace {

constexpr double kLeak = 0.2;

torch::nn::Conv2d conv(int in, int out, int kernel, int stride, int padding) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, kernel).stride(stride).padding(padding));
}

torch::Tensor lrelu(const torch::Tensor& x) { return torch::leaky_relu(x, kLeak); }

torch::Tensor upsample2(const torch::Tensor& x) {
  return torch::nn::functional::interpolate(
      x, torch::nn::functional::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest));
}

torch::Tensor instance_norm(const torch::Tensor& x) {
  const auto mean = x.mean({2, 3}, true);
  const auto var = (x - mean).pow(2).mean({2, 3}, true);
  return (x - mean) / torch::sqrt(var + 1e-5);
}

double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

torch::Tensor seeded_uniform(std::mt19937_64& rng, at::IntArrayRef shape, double bound, torch::Dtype dtype) {
  int64_t n = 1;
  for (const auto s : shape) n *= s;
  std::vector<double> values(static_cast<size_t>(n));
  for (auto& v : values) v = (2.0 * unit_uniform(rng) - 1.0) * bound;
  return torch::from_blob(values.data(), shape, torch::kFloat64).clone().to(dtype);
}

double kaiming_bound(const torch::Tensor& weight) {
  const int64_t fan_in = weight.numel() / weight.size(0);
  return std::sqrt(6.0 / ((1.0 + kLeak * kLeak) * static_cast<double>(fan_in)));
}

}  // namespace

std::string_view encoder_name(PrivateEncoderId id) {
  switch (id) {
    case PrivateEncoderId::kStyleS:
      return "sty_s";
    case PrivateEncoderId::kStyleM:
      return "sty_m";
    case PrivateEncoderId::kFogM:
      return "fog_m";
    case PrivateEncoderId::kFogT:
      return "fog_t";
    case PrivateEncoderId::kDualS:
      return "dual_s";
    case PrivateEncoderId::kDualT:
      return "dual_t";
  }
  return "?";
}

PrivateEncoderId parse_encoder_id(std::string_view name) {
  for (const auto id : kAllPrivateEncoders) {
    if (encoder_name(id) == name) return id;
  }
  throw ConfigError("unknown private encoder id '" + std::string(name) + "'");
}

void init_parameters(torch::nn::Module& module, std::uint64_t seed) {
  torch::NoGradGuard no_grad;
  std::mt19937_64 rng(seed);
  for (auto& item : module.named_parameters(/*recurse=*/true)) {
    torch::Tensor& p = item.value();
    if (p.dim() > 1) {
      p.copy_(seeded_uniform(rng, p.sizes(), kaiming_bound(p), p.scalar_type()));
    } else {
      p.zero_();
    }
  }
}

ContentEncoderImpl::ContentEncoderImpl(int content_dim) {
  block1_ = register_module("block1", conv(3, 16, 3, 2, 1));
  block2_ = register_module("block2", conv(16, content_dim, 3, 2, 1));
  block3_ = register_module("block3", conv(content_dim, content_dim, 3, 1, 1));
  block4_ = register_module("block4", conv(content_dim, content_dim, 3, 1, 1));
}

ContentOutput ContentEncoderImpl::forward_levels(const torch::Tensor& image) {
  if (image.dim() != 4 || image.size(1) != 3) throw ShapeError("content encoder expects [N, 3, H, W]");
  if (image.size(2) % kContentDownsample != 0 || image.size(3) % kContentDownsample != 0) {
    throw ShapeError("image dimensions must be divisible by " + std::to_string(kContentDownsample));
  }
  auto x = lrelu(block1_(image));
  auto shallow = lrelu(block2_(x));
  x = lrelu(block3_(shallow));
  x = lrelu(block4_(x));
  return {shallow, x};
}

PrivateEncoderImpl::PrivateEncoderImpl(int private_dim) {
  block1_ = register_module("block1", conv(3, 16, 3, 2, 1));
  block2_ = register_module("block2", conv(16, 32, 3, 2, 1));
  block3_ = register_module("block3", conv(32, 32, 3, 2, 1));
  project_ = register_module("project", torch::nn::Linear(32, private_dim));
}

torch::Tensor PrivateEncoderImpl::forward(const torch::Tensor& image) {
  if (image.dim() != 4 || image.size(1) != 3) throw ShapeError("private encoder expects [N, 3, H, W]");
  auto x = lrelu(block1_(image));
  x = lrelu(block2_(x));
  x = lrelu(block3_(x));
  return project_(x.mean({2, 3}));
}

AdaptiveNormImpl::AdaptiveNormImpl(int channels, int private_dim) : channels_(channels) {
  affine_ = register_module("affine", torch::nn::Linear(private_dim, 2 * channels));
}

torch::Tensor AdaptiveNormImpl::forward(const torch::Tensor& x, const torch::Tensor& z) {
  const auto params = affine_(z).view({z.size(0), 2 * channels_, 1, 1});
  const auto scale = params.narrow(1, 0, channels_);
  const auto shift = params.narrow(1, channels_, channels_);
  return instance_norm(x) * (1.0 + scale) + shift;
}

DecoderImpl::DecoderImpl(int content_dim, int private_dim) {
  conv1_ = register_module("conv1", conv(content_dim, content_dim, 3, 1, 1));
  norm1_ = register_module("norm1", AdaptiveNorm(content_dim, private_dim));
  conv2_ = register_module("conv2", conv(content_dim, content_dim, 3, 1, 1));
  norm2_ = register_module("norm2", AdaptiveNorm(content_dim, private_dim));
  conv3_ = register_module("conv3", conv(content_dim, 16, 3, 1, 1));
  norm3_ = register_module("norm3", AdaptiveNorm(16, private_dim));
  conv4_ = register_module("conv4", conv(16, 16, 3, 1, 1));
  to_rgb_ = register_module("to_rgb", conv(16, 3, 3, 1, 1));
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& content, const torch::Tensor& code) {
  if (content.dim() != 4 || code.dim() != 2 || content.size(0) != code.size(0)) {
    throw ShapeError("decoder expects content [N, D_c, h, w] and code [N, D_z]");
  }
  auto x = torch::relu(norm1_(conv1_(content), code));
  x = torch::relu(norm2_(conv2_(x), code));
  x = torch::relu(norm3_(conv3_(upsample2(x)), code));
  x = torch::relu(conv4_(upsample2(x)));
  return torch::sigmoid(to_rgb_(x));
}

SegHeadImpl::SegHeadImpl(int content_dim, int num_classes) {
  hidden_ = register_module("hidden", conv(content_dim, content_dim, 3, 1, 1));
  classify_ = register_module("classify", conv(content_dim, num_classes, 1, 1, 0));
  aux_classify_ = register_module("aux_classify", conv(content_dim, num_classes, 3, 1, 1));
}

namespace {
torch::Tensor upsample_softmax(const torch::Tensor& logits) {
  const auto up = torch::nn::functional::interpolate(
      logits, torch::nn::functional::InterpolateFuncOptions()
                  .scale_factor(std::vector<double>{kContentDownsample, kContentDownsample})
                  .mode(torch::kBilinear)
                  .align_corners(false));
  return torch::softmax(up, 1);
}
}  // namespace

torch::Tensor SegHeadImpl::forward(const torch::Tensor& content) {
  if (content.dim() != 4) throw ShapeError("segmentation head expects [N, D_c, h, w]");
  return upsample_softmax(classify_(lrelu(hidden_(content))));
}

torch::Tensor SegHeadImpl::forward_aux(const torch::Tensor& shallow) {
  if (shallow.dim() != 4) throw ShapeError("auxiliary head expects [N, D_c, h, w]");
  return upsample_softmax(aux_classify_(shallow));
}

DiscriminatorImpl::DiscriminatorImpl(int num_classes) {
  conv1_ = register_module("conv1", conv(num_classes, 16, 4, 2, 1));
  conv2_ = register_module("conv2", conv(16, 32, 4, 2, 1));
  conv3_ = register_module("conv3", conv(32, 32, 4, 2, 1));
  conv4_ = register_module("conv4", conv(32, 1, 4, 2, 1));
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& probabilities) {
  auto x = lrelu(conv1_(probabilities));
  x = lrelu(conv2_(x));
  x = lrelu(conv3_(x));
  return torch::sigmoid(conv4_(x));
}

PerceptualExtractor PerceptualExtractor::random(std::uint64_t seed, torch::Dtype dtype) {
  struct Shape {
    int in;
    int out;
    int stride;
    bool norm;
  };
  constexpr std::array<Shape, 3> kShapes{{{3, 16, 2, false}, {16, 16, 2, true}, {16, 16, 2, true}}};
  std::mt19937_64 rng(seed);
  PerceptualExtractor ex;
  ex.levels_.push_back(Level{});
  for (const auto& s : kShapes) {
    Level level;
    const double bound = std::sqrt(6.0 / (s.in * 9.0));
    level.weight = seeded_uniform(rng, {s.out, s.in, 3, 3}, bound, dtype);
    level.bias = seeded_uniform(rng, {s.out}, 0.1, dtype);
    level.stride = s.stride;
    level.instance_norm = s.norm;
    ex.levels_.push_back(std::move(level));
  }
  return ex;
}

PerceptualExtractor PerceptualExtractor::identity() {
  PerceptualExtractor ex;
  ex.levels_.push_back(Level{});
  return ex;
}

std::vector<torch::Tensor> PerceptualExtractor::features(const torch::Tensor& image) const {
  std::vector<torch::Tensor> out;
  out.reserve(levels_.size());
  torch::Tensor x = image;
  for (const auto& level : levels_) {
    if (level.weight.defined()) {
      x = torch::conv2d(x, level.weight, level.bias, level.stride, 1);
      if (level.instance_norm) x = instance_norm(x);
      x = torch::relu(x);
    }
    out.push_back(x);
  }
  return out;
}

PerceptualExtractor PerceptualExtractor::to(torch::Dtype dtype) const {
  PerceptualExtractor ex = *this;
  for (auto& level : ex.levels_) {
    if (level.weight.defined()) {
      level.weight = level.weight.to(dtype);
      level.bias = level.bias.to(dtype);
    }
  }
  return ex;
}

}  // namespace cudanet
