#pragma once

// Building blocks of a feature disentanglement network: shared content encoder,
// private (domain-specific) encoders, AdaIN decoder, segmentation head with an
// auxiliary shallow head, output-space discriminator and the frozen perceptual
// feature stack used by the reconstruction and translation losses.
//
// Tensor layout is NCHW throughout. Images are in [0, 1].

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <torch/torch.h>

namespace cudanet {

struct ModelDims {
  int num_classes = 5;
  int content_dim = 32;
  int private_dim = 8;

  bool operator==(const ModelDims&) const = default;
};

// Content features live at 1/4 of the input resolution.
inline constexpr int kContentDownsample = 4;

enum class PrivateEncoderId { kStyleS, kStyleM, kFogM, kFogT, kDualS, kDualT };

inline constexpr std::array<PrivateEncoderId, 6> kAllPrivateEncoders{
    PrivateEncoderId::kStyleS, PrivateEncoderId::kStyleM, PrivateEncoderId::kFogM,
    PrivateEncoderId::kFogT,   PrivateEncoderId::kDualS,  PrivateEncoderId::kDualT};

std::string_view encoder_name(PrivateEncoderId id);  // sty_s, sty_m, fog_m, fog_t, dual_s, dual_t
PrivateEncoderId parse_encoder_id(std::string_view name);

// Fills every parameter of `module` from a seeded generator (Kaiming-uniform weights, zero biases).
void init_parameters(torch::nn::Module& module, std::uint64_t seed);

struct ContentOutput {
  torch::Tensor shallow;   // after block 2, feeds the auxiliary head
  torch::Tensor features;  // after block 4, the content feature c
};

class ContentEncoderImpl : public torch::nn::Module {
 public:
  explicit ContentEncoderImpl(int content_dim);
  ContentOutput forward_levels(const torch::Tensor& image);
  torch::Tensor forward(const torch::Tensor& image) { return forward_levels(image).features; }

 private:
  torch::nn::Conv2d block1_{nullptr};
  torch::nn::Conv2d block2_{nullptr};
  torch::nn::Conv2d block3_{nullptr};
  torch::nn::Conv2d block4_{nullptr};
};
TORCH_MODULE(ContentEncoder);

class PrivateEncoderImpl : public torch::nn::Module {
 public:
  explicit PrivateEncoderImpl(int private_dim);
  torch::Tensor forward(const torch::Tensor& image);  // [N, D_z]

 private:
  torch::nn::Conv2d block1_{nullptr};
  torch::nn::Conv2d block2_{nullptr};
  torch::nn::Conv2d block3_{nullptr};
  torch::nn::Linear project_{nullptr};
};
TORCH_MODULE(PrivateEncoder);

// Instance normalization whose scale and shift are predicted from the private code.
class AdaptiveNormImpl : public torch::nn::Module {
 public:
  AdaptiveNormImpl(int channels, int private_dim);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& z);

 private:
  int channels_;
  torch::nn::Linear affine_{nullptr};
};
TORCH_MODULE(AdaptiveNorm);

class DecoderImpl : public torch::nn::Module {
 public:
  DecoderImpl(int content_dim, int private_dim);
  torch::Tensor forward(const torch::Tensor& content, const torch::Tensor& code);

 private:
  torch::nn::Conv2d conv1_{nullptr};
  AdaptiveNorm norm1_{nullptr};
  torch::nn::Conv2d conv2_{nullptr};
  AdaptiveNorm norm2_{nullptr};
  torch::nn::Conv2d conv3_{nullptr};
  AdaptiveNorm norm3_{nullptr};
  torch::nn::Conv2d conv4_{nullptr};
  torch::nn::Conv2d to_rgb_{nullptr};
};
TORCH_MODULE(Decoder);

class SegHeadImpl : public torch::nn::Module {
 public:
  SegHeadImpl(int content_dim, int num_classes);
  // Softmax probabilities at input resolution, [N, C, H, W].
  torch::Tensor forward(const torch::Tensor& content);
  torch::Tensor forward_aux(const torch::Tensor& shallow);

 private:
  torch::nn::Conv2d hidden_{nullptr};
  torch::nn::Conv2d classify_{nullptr};
  torch::nn::Conv2d aux_classify_{nullptr};
};
TORCH_MODULE(SegHead);

class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(int num_classes);
  // Probability that each output cell comes from the labeled side, [N, 1, H/16, W/16].
  torch::Tensor forward(const torch::Tensor& probabilities);

 private:
  torch::nn::Conv2d conv1_{nullptr};
  torch::nn::Conv2d conv2_{nullptr};
  torch::nn::Conv2d conv3_{nullptr};
  torch::nn::Conv2d conv4_{nullptr};
};
TORCH_MODULE(Discriminator);

// Fixed convolutional feature stack. Never trained; all tensors have requires_grad == false.
class PerceptualExtractor {
 public:
  struct Level {
    torch::Tensor weight;  // undefined for the identity level
    torch::Tensor bias;
    int stride = 1;
    bool instance_norm = false;
  };

  // Four frozen levels: the pixels themselves, one random conv+ReLU level,
  // then two instance-normalized random levels.
  static PerceptualExtractor random(std::uint64_t seed, torch::Dtype dtype = torch::kFloat32);
  // Single level that returns the image itself.
  static PerceptualExtractor identity();

  [[nodiscard]] std::vector<torch::Tensor> features(const torch::Tensor& image) const;
  [[nodiscard]] size_t num_levels() const { return levels_.size(); }
  [[nodiscard]] PerceptualExtractor to(torch::Dtype dtype) const;

 private:
  std::vector<Level> levels_;
};

inline const std::vector<double> kShallowProfile{0.5, 0.3, 0.15, 0.05};
inline const std::vector<double> kDeepProfile{0.05, 0.15, 0.3, 0.5};

}  // namespace cudanet
