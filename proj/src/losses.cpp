#include "cudanet/losses.hpp"

#include <cmath>
#include <numeric>

#include "cudanet/errors.hpp"

namespace cudanet {
namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) throw ShapeError(std::string(what) + ": shape mismatch");
}

double item(const torch::Tensor& t) { return t.defined() ? t.item<double>() : 0.0; }

}  // namespace

torch::Tensor perceptual_loss(const torch::Tensor& a, const torch::Tensor& b, const PerceptualExtractor& extractor,
                              std::span<const double> weights) {
  require_same_shape(a, b, "perceptual_loss");
  if (weights.size() != extractor.num_levels()) throw ConfigError("perceptual_loss: one weight per level required");
  double sum = 0.0;
  for (const double w : weights) {
    if (!(w >= 0.0)) throw ConfigError("perceptual_loss: weights must be nonnegative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw ConfigError("perceptual_loss: weights must sum to 1");

  // One pass over the concatenated pair.
  const auto n = a.size(0);
  const auto feats = extractor.features(torch::cat({a, b}, 0));
  torch::Tensor loss = torch::zeros({}, a.options());
  for (size_t l = 0; l < feats.size(); ++l) {
    if (weights[l] == 0.0) continue;
    const auto fa = feats[l].narrow(0, 0, n);
    const auto fb = feats[l].narrow(0, n, n);
    loss = loss + weights[l] * (fa - fb).pow(2).mean();
  }
  return loss;
}

torch::Tensor reconstruction_loss(const torch::Tensor& x1, const torch::Tensor& x1_rec, const torch::Tensor& x2,
                                  const torch::Tensor& x2_rec, const PerceptualExtractor& extractor) {
  return perceptual_loss(x1, x1_rec, extractor, kShallowProfile) + perceptual_loss(x2, x2_rec, extractor, kShallowProfile);
}

torch::Tensor translation_loss(const torch::Tensor& x1, const torch::Tensor& x1_to_2, const torch::Tensor& x2,
                               const torch::Tensor& x2_to_1, const PerceptualExtractor& extractor) {
  return perceptual_loss(x1, x1_to_2, extractor, kDeepProfile) + perceptual_loss(x2, x2_to_1, extractor, kDeepProfile);
}

torch::Tensor segmentation_loss(const torch::Tensor& probabilities, const torch::Tensor& labels) {
  if (probabilities.dim() != 4 || labels.dim() != 3 || probabilities.size(0) != labels.size(0) ||
      probabilities.size(2) != labels.size(1) || probabilities.size(3) != labels.size(2)) {
    throw ShapeError("segmentation_loss: heatmap [N, C, H, W] and labels [N, H, W] disagree");
  }
  const auto y = labels.to(torch::kLong);
  const auto valid = y != kIgnoreIndex;
  const auto count = valid.sum().item<std::int64_t>();
  if (count == 0) throw NumericalError("segmentation_loss: every pixel is ignored");
  const auto classes = probabilities.size(1);
  if ((y.masked_select(valid) >= classes).any().item<bool>() || (y.masked_select(valid) < 0).any().item<bool>()) {
    throw DataError("segmentation_loss: label id out of range");
  }
  const auto safe = y.masked_fill(~valid, 0);
  const auto p = probabilities.gather(1, safe.unsqueeze(1)).squeeze(1).clamp(kProbEpsilon, 1.0);
  const auto nll = -torch::log(p) * valid.to(probabilities.scalar_type());
  return nll.sum() / static_cast<double>(count);
}

torch::Tensor generator_adversarial_loss(const torch::Tensor& dis_on_unlabeled) {
  if (!torch::isfinite(dis_on_unlabeled).all().item<bool>()) throw NumericalError("discriminator output is not finite");
  const auto p = dis_on_unlabeled.clamp(kProbEpsilon, 1.0 - kProbEpsilon);
  const auto per_sample = -torch::log(p).flatten(1).sum(1);
  return per_sample.mean();
}

torch::Tensor discriminator_loss(const torch::Tensor& dis_on_labeled, const torch::Tensor& dis_on_unlabeled) {
  if (!torch::isfinite(dis_on_labeled).all().item<bool>() || !torch::isfinite(dis_on_unlabeled).all().item<bool>()) {
    throw NumericalError("discriminator output is not finite");
  }
  const auto p_src = dis_on_labeled.clamp(kProbEpsilon, 1.0 - kProbEpsilon);
  const auto p_tgt = dis_on_unlabeled.clamp(kProbEpsilon, 1.0 - kProbEpsilon);
  const auto total = -torch::log(p_src).sum() - torch::log(1.0 - p_tgt).sum();
  return total / static_cast<double>(p_src.numel() + p_tgt.numel());
}

AdversarialLosses adversarial_losses(const torch::Tensor& h2, const torch::Tensor& h1, Discriminator& discriminator) {
  require_same_shape(h1, h2, "adversarial_losses");
  AdversarialLosses out;
  out.generator = generator_adversarial_loss(discriminator(h2));
  const auto n = h1.size(0);
  const auto d = discriminator(torch::cat({h1.detach(), h2.detach()}, 0));
  out.discriminator = discriminator_loss(d.narrow(0, 0, n), d.narrow(0, n, n));
  return out;
}

std::map<std::string, double> FdnLoss::breakdown() const {
  return {{"total", item(total)},   {"rec", item(rec)},
          {"trans", item(trans)},   {"seg", item(seg)},
          {"seg_translated", item(seg_translated)},
          {"segadv", item(segadv)}, {"disc", item(discriminator)},
          {"aux_seg", item(aux_seg)}};
}

FdnLoss fdn_loss(const FdnBatch& batch, const LossWeights& weights, const PerceptualExtractor& extractor,
                 NetworkState& state) {
  require_same_shape(batch.x1, batch.x2, "fdn_loss");
  const auto n = batch.x1.size(0);
  auto narrow = [](const torch::Tensor& t, int64_t k, int64_t n) { return t.narrow(0, k * n, n); };

  // Shared parts run once over concatenated batches; no layer mixes samples.
  const auto levels = state.content_encoder->forward_levels(torch::cat({batch.x1, batch.x2}, 0));
  const auto c1 = narrow(levels.features, 0, n);
  const auto c2 = narrow(levels.features, 1, n);
  const auto z1 = state.private_encoder(batch.encoders.first)(batch.x1);
  const auto z2 = state.private_encoder(batch.encoders.second)(batch.x2);

  const auto decoded = state.decoder(torch::cat({c1, c2, c1, c2}, 0), torch::cat({z1, z2, z2, z1}, 0));
  const auto x1_rec = narrow(decoded, 0, n);
  const auto x2_rec = narrow(decoded, 1, n);
  const auto x1_to_2 = narrow(decoded, 2, n);
  const auto x2_to_1 = narrow(decoded, 3, n);

  FdnLoss out;
  out.z1 = z1;
  out.z2 = z2;
  out.rec = reconstruction_loss(batch.x1, x1_rec, batch.x2, x2_rec, extractor);
  out.trans = translation_loss(batch.x1, x1_to_2, batch.x2, x2_to_1, extractor);

  const auto levels12 = state.content_encoder->forward_levels(x1_to_2);
  const auto c12 = levels12.features;
  const auto heat = state.seg_head(torch::cat({c1, c12, c2}, 0));
  const auto h1 = narrow(heat, 0, n);
  const auto h12 = narrow(heat, 1, n);
  const auto h2 = narrow(heat, 2, n);

  const bool has_labels = (batch.y1 != kIgnoreIndex).any().item<bool>();
  if (has_labels) {
    out.seg = segmentation_loss(h1, batch.y1);
    // x_{1->2} keeps x1's content, so it is supervised with y1.
    out.seg_translated = segmentation_loss(h12, batch.y1);
    // The auxiliary head sees the same supervised inputs as the main head.
    const auto aux = state.seg_head->forward_aux(torch::cat({narrow(levels.shallow, 0, n), levels12.shallow}, 0).detach());
    out.aux_seg = segmentation_loss(aux, torch::cat({batch.y1, batch.y1}, 0));
  } else {
    out.seg = torch::zeros({}, batch.x1.options());
    out.seg_translated = torch::zeros({}, batch.x1.options());
    out.aux_seg = torch::zeros({}, batch.x1.options());
  }

  auto adv = adversarial_losses(h2, h1, state.discriminator);
  out.segadv = adv.generator;
  out.discriminator = adv.discriminator;

  out.total = weights.rec * out.rec + weights.trans * out.trans + weights.seg * (out.seg + out.seg_translated) +
              weights.segadv * out.segadv;
  return out;
}

}  // namespace cudanet
