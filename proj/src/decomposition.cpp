#include "cudanet/decomposition.hpp"

#include <string>

#include "cudanet/errors.hpp"

namespace cudanet {
namespace {

bool pair_trained(const NetworkState& state, Stage pair_stage) {
  const auto pair = encoders_for(pair_stage);
  return state.private_trained[static_cast<size_t>(pair.first)] && state.private_trained[static_cast<size_t>(pair.second)];
}

std::vector<ParamGroup> stage_groups(Stage pair_stage) {
  const auto pair = encoders_for(pair_stage);
  std::vector<ParamGroup> groups(kSharedGroups.begin(), kSharedGroups.end());
  groups.push_back(group_of(pair.first));
  groups.push_back(group_of(pair.second));
  return groups;
}

std::string stage_tag(Stage s) { return "stage_" + std::string(stage_name(s)); }

}  // namespace

void train_source_only(NetworkState& state, const DomainSplit& source, const StageConfig& cfg, const TrainingHooks& hooks) {
  if (state.stage != Stage::kInit) {
    throw PipelineError("source-only training must start from a fresh network, not stage " + std::string(stage_name(state.stage)));
  }
  if (!source.has_labels()) throw PipelineError("source-only training needs labels for domain s");
  state.set_trainable_only({ParamGroup::kContentEncoder, ParamGroup::kSegHead});
  const auto dt = state.dtype();
  run_training_loop(
      state, "source", cfg,
      [&](int) {
        const auto idx = sample_indices(state, source.size(), cfg.batch_size);
        const auto x = source.images.index_select(0, idx).to(dt);
        const auto y = source.labels.index_select(0, idx);
        const auto levels = state.content_encoder->forward_levels(x);
        const auto seg = segmentation_loss(state.seg_head(levels.features), y);
        const auto aux = segmentation_loss(state.seg_head->forward_aux(levels.shallow.detach()), y);
        return StepLoss{seg + aux, torch::Tensor(), {{"seg", seg.item<double>()}, {"aux_seg", aux.item<double>()}}};
      },
      hooks);
  state.stage = Stage::kSource;
}

void train_stage(NetworkState& state, Stage pair_stage, const torch::Tensor& images_a, const torch::Tensor& labels_a,
                 const torch::Tensor& images_b, const StageConfig& cfg, const LossWeights& weights,
                 const PerceptualExtractor& extractor, const TrainingHooks& hooks) {
  const auto pair = encoders_for(pair_stage);
  if (state.stage != pair_stage) {
    throw PipelineError("state is at stage " + std::string(stage_name(state.stage)) + ", expected " +
                        std::string(stage_name(pair_stage)) + " (call transfer_shared first)");
  }
  if (!labels_a.defined()) {
    throw PipelineError("stage " + std::string(stage_name(pair_stage)) + " needs labels for its labeled side");
  }
  if (labels_a.size(0) != images_a.size(0)) throw DataError("label count does not match image count");
  state.set_trainable_only(stage_groups(pair_stage));
  const auto dt = state.dtype();
  run_training_loop(
      state, std::string(stage_name(pair_stage)), cfg,
      [&](int) {
        const auto ia = sample_indices(state, images_a.size(0), cfg.batch_size);
        const auto ib = sample_indices(state, images_b.size(0), cfg.batch_size);
        const FdnBatch batch{images_a.index_select(0, ia).to(dt), labels_a.index_select(0, ia),
                             images_b.index_select(0, ib).to(dt), pair};
        const auto loss = fdn_loss(batch, weights, extractor, state);
        return StepLoss{loss.total + loss.aux_seg, loss.discriminator, loss.breakdown()};
      },
      hooks);
  state.private_trained[static_cast<size_t>(pair.first)] = true;
  state.private_trained[static_cast<size_t>(pair.second)] = true;
}

NetworkState transfer_shared(const NetworkState& from, Stage to_stage) {
  auto order_error = [&](const std::string& need) {
    return PipelineError("cannot hand off from stage " + std::string(stage_name(from.stage)) + " to " +
                         std::string(stage_name(to_stage)) + ": " + need);
  };
  switch (to_stage) {
    case Stage::kStyle:
      if (from.stage != Stage::kInit && from.stage != Stage::kSource) throw order_error("s2m must come first");
      break;
    case Stage::kFog:
      if (from.stage != Stage::kStyle || !pair_trained(from, Stage::kStyle)) throw order_error("s2m must be trained first");
      break;
    case Stage::kDual:
      if (from.stage != Stage::kFog || !pair_trained(from, Stage::kFog)) throw order_error("m2t must be trained first");
      break;
    default:
      throw order_error("only s2m, m2t and s2t are hand-off targets");
  }
  auto next = from.clone();
  const auto pair = encoders_for(to_stage);
  const auto salt = 0x100 + static_cast<std::uint64_t>(to_stage);
  for (const auto id : {pair.first, pair.second}) {
    next.reinitialize(group_of(id), salt);
    next.private_trained[static_cast<size_t>(id)] = false;
  }
  next.stage = to_stage;
  next.set_trainable_only(stage_groups(to_stage));
  return next;
}

torch::Tensor pseudo_labels_from_heatmap(const torch::Tensor& probabilities, std::optional<double> threshold) {
  if (probabilities.dim() != 4) throw ShapeError("pseudo labels expect an [N, C, H, W] heatmap");
  const auto [best, arg] = probabilities.max(1);
  if (!threshold) return arg;
  return torch::where(best >= *threshold, arg, torch::full_like(arg, kIgnoreIndex));
}

torch::Tensor predict_probabilities(NetworkState& state, const torch::Tensor& images, int batch_size) {
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> chunks;
  for (int64_t i = 0; i < images.size(0); i += batch_size) {
    const auto x = images.narrow(0, i, std::min<int64_t>(batch_size, images.size(0) - i)).to(state.dtype());
    chunks.push_back(segment(state, encode_content(state, x)));
  }
  return torch::cat(chunks, 0);
}

torch::Tensor generate_pseudo_labels(NetworkState& state, const torch::Tensor& images, std::optional<double> threshold) {
  if (images.size(0) == 0) return torch::empty({0, images.size(2), images.size(3)}, torch::kLong);
  return pseudo_labels_from_heatmap(predict_probabilities(state, images), threshold);
}

std::vector<LabelMap> generate_pseudo_labels(NetworkState& state, std::span<const Image> images,
                                             std::optional<double> threshold) {
  if (images.empty()) return {};
  const auto labels = generate_pseudo_labels(state, images_to_tensor(images), threshold);
  std::vector<LabelMap> out;
  out.reserve(images.size());
  for (int64_t i = 0; i < labels.size(0); ++i) out.push_back(tensor_to_labels(labels[i]));
  return out;
}

NetworkState run_decomposition(NetworkState state, const TrainingContext& ctx, const DecompositionConfig& cfg) {
  const auto& data = ctx.data;
  if (!data.s.has_labels()) throw PipelineError("decomposition needs labels for domain s");
  auto finish = [&](Stage s) {
    if (ctx.hooks.on_checkpoint) ctx.hooks.on_checkpoint(stage_tag(s), state);
  };

  if (state.stage == Stage::kInit && cfg.source_warmup) {
    with_context("stage source", [&] { train_source_only(state, data.s, cfg.source, ctx.hooks); });
    finish(Stage::kSource);
  }
  if (state.stage == Stage::kInit || state.stage == Stage::kSource) {
    with_context("stage s2m", [&] {
      state = transfer_shared(state, Stage::kStyle);
      train_stage(state, Stage::kStyle, data.s.images, data.s.labels, data.m.images, cfg.s2m, ctx.weights, ctx.extractor,
                  ctx.hooks);
    });
    finish(Stage::kStyle);
  }
  if (state.stage == Stage::kStyle) {
    with_context("stage m2t", [&] {
      const auto pseudo_m = generate_pseudo_labels(state, data.m.images, cfg.m2t.pseudo_label_threshold);
      state = transfer_shared(state, Stage::kFog);
      train_stage(state, Stage::kFog, data.m.images, pseudo_m, data.t.images, cfg.m2t, ctx.weights, ctx.extractor,
                  ctx.hooks);
    });
    finish(Stage::kFog);
  }
  if (state.stage == Stage::kFog) {
    with_context("stage s2t", [&] {
      state = transfer_shared(state, Stage::kDual);
      train_stage(state, Stage::kDual, data.s.images, data.s.labels, data.t.images, cfg.s2t, ctx.weights, ctx.extractor,
                  ctx.hooks);
    });
    finish(Stage::kDual);
  }
  if (state.stage != Stage::kDual) {
    throw PipelineError("decomposition cannot continue from stage " + std::string(stage_name(state.stage)));
  }
  return state;
}

}  // namespace cudanet
