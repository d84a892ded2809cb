#pragma once

#include <map>
#include <span>
#include <string>

#include <torch/torch.h>

#include "cudanet/nets.hpp"
#include "cudanet/state.hpp"

namespace cudanet {

// Clamp applied to every probability before a log.
inline constexpr double kProbEpsilon = 1e-7;
inline constexpr std::int64_t kIgnoreIndex = 255;

struct LossWeights {
  double rec = 0.5;
  double trans = 0.1;
  double seg = 1.0;
  double segadv = 1.0;
};

// sum_l w_l * mean((phi_l(a) - phi_l(b))^2)
torch::Tensor perceptual_loss(const torch::Tensor& a, const torch::Tensor& b, const PerceptualExtractor& extractor,
                              std::span<const double> weights);

// L_pixel(x1, x1_hat) + L_pixel(x2, x2_hat) with the shallow-weighted profile.
torch::Tensor reconstruction_loss(const torch::Tensor& x1, const torch::Tensor& x1_rec, const torch::Tensor& x2,
                                  const torch::Tensor& x2_rec, const PerceptualExtractor& extractor);

// L_con(x1, x_{1->2}) + L_con(x2, x_{2->1}) with the deep-weighted profile.
torch::Tensor translation_loss(const torch::Tensor& x1, const torch::Tensor& x1_to_2, const torch::Tensor& x2,
                               const torch::Tensor& x2_to_1, const PerceptualExtractor& extractor);

// Mean cross-entropy over pixels whose label is not kIgnoreIndex.
// `probabilities` is [N, C, H, W]; `labels` is an integer tensor [N, H, W].
torch::Tensor segmentation_loss(const torch::Tensor& probabilities, const torch::Tensor& labels);

// -sum_{h,w} log Dis(h2), averaged over the batch.
torch::Tensor generator_adversarial_loss(const torch::Tensor& dis_on_unlabeled);
// Binary cross-entropy: labeled side -> 1, unlabeled side -> 0, averaged over all cells.
torch::Tensor discriminator_loss(const torch::Tensor& dis_on_labeled, const torch::Tensor& dis_on_unlabeled);

struct AdversarialLosses {
  torch::Tensor generator;      // flows into everything upstream of h2
  torch::Tensor discriminator;  // computed on detached heatmaps, reaches only the discriminator
};

AdversarialLosses adversarial_losses(const torch::Tensor& h2, const torch::Tensor& h1, Discriminator& discriminator);

struct FdnBatch {
  torch::Tensor x1;  // labeled side
  torch::Tensor y1;  // true or pseudo labels for x1 (and for x_{1->2})
  torch::Tensor x2;  // unlabeled side
  EncoderPair encoders;
};

struct FdnLoss {
  torch::Tensor total;  // weighted sum of rec, trans, seg, seg_translated, segadv
  torch::Tensor rec;
  torch::Tensor trans;
  torch::Tensor seg;
  torch::Tensor seg_translated;
  torch::Tensor segadv;
  torch::Tensor discriminator;  // separate objective for the discriminator update
  torch::Tensor aux_seg;        // separate objective for the auxiliary head (detached input)
  torch::Tensor z1;             // private codes of x1 and x2
  torch::Tensor z2;

  [[nodiscard]] std::map<std::string, double> breakdown() const;
};

FdnLoss fdn_loss(const FdnBatch& batch, const LossWeights& weights, const PerceptualExtractor& extractor,
                 NetworkState& state);

}  // namespace cudanet
