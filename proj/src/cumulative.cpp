#include "cudanet/cumulative.hpp"

#include <string>

#include "cudanet/errors.hpp"
#include "cudanet/json_util.hpp"

namespace cudanet {
namespace {

constexpr std::array<CycleStep, 3> kCycleOrder{CycleStep::kStyle, CycleStep::kFog, CycleStep::kDual};

const torch::Tensor& images_for(PrivateEncoderId id, const TripletBatch& b) {
  switch (id) {
    case PrivateEncoderId::kStyleS:
    case PrivateEncoderId::kDualS:
      return b.x_s;
    case PrivateEncoderId::kStyleM:
    case PrivateEncoderId::kFogM:
      return b.x_m;
    default:
      return b.x_t;
  }
}

// (unlabeled-side code, labeled-side code) of a pair stage.
CodePair codes_of(NetworkState& state, Stage pair_stage, const TripletBatch& b) {
  const auto pair = encoders_for(pair_stage);
  return {state.private_encoder(pair.second)(images_for(pair.second, b)),
          state.private_encoder(pair.first)(images_for(pair.first, b))};
}

}  // namespace

std::string_view metric_name(DistanceMetric m) {
  switch (m) {
    case DistanceMetric::kL1:
      return "l1";
    case DistanceMetric::kL2:
      return "l2";
    case DistanceMetric::kCosine:
      return "cosine";
  }
  return "?";
}

DistanceMetric parse_metric(std::string_view name) {
  for (const auto m : {DistanceMetric::kL1, DistanceMetric::kL2, DistanceMetric::kCosine}) {
    if (metric_name(m) == name) return m;
  }
  throw ConfigError("unknown distance metric '" + std::string(name) + "' (expected l1, l2 or cosine)");
}

torch::Tensor private_distance(const torch::Tensor& a, const torch::Tensor& b, DistanceMetric metric) {
  if (a.sizes() != b.sizes()) throw ShapeError("private codes differ in shape");
  const auto a2 = a.dim() == 1 ? a.unsqueeze(0) : a;
  const auto b2 = b.dim() == 1 ? b.unsqueeze(0) : b;
  if (a2.dim() != 2) throw ShapeError("private codes must be [D] or [N, D]");
  torch::Tensor per_sample;
  switch (metric) {
    case DistanceMetric::kL1:
      per_sample = (a2 - b2).abs().sum(1);
      break;
    case DistanceMetric::kL2:
      per_sample = torch::linalg_vector_norm(a2 - b2, 2, {1});
      break;
    case DistanceMetric::kCosine: {
      const auto na = torch::linalg_vector_norm(a2, 2, {1});
      const auto nb = torch::linalg_vector_norm(b2, 2, {1});
      if ((na == 0).any().item<bool>() || (nb == 0).any().item<bool>()) {
        throw NumericalError("cosine distance is undefined for a zero vector");
      }
      per_sample = 1.0 - (a2 * b2).sum(1) / (na * nb);
      break;
    }
  }
  return per_sample.mean();
}

double cumulative_residual(double d_style, double d_fog, double d_dual) {
  const double r = d_style + d_fog - d_dual;
  return r * r;
}

torch::Tensor cumulative_loss(const CodePair& z_style, const CodePair& z_fog, const CodePair& z_dual, DistanceMetric metric) {
  const auto r = private_distance(z_style.first, z_style.second, metric) +
                 private_distance(z_fog.first, z_fog.second, metric) -
                 private_distance(z_dual.first, z_dual.second, metric);
  return r * r;
}

std::string_view cycle_step_name(CycleStep s) {
  switch (s) {
    case CycleStep::kStyle:
      return "style";
    case CycleStep::kFog:
      return "fog";
    case CycleStep::kDual:
      return "dual";
  }
  return "?";
}

Stage pair_stage_of(CycleStep s) {
  switch (s) {
    case CycleStep::kStyle:
      return Stage::kStyle;
    case CycleStep::kFog:
      return Stage::kFog;
    case CycleStep::kDual:
      return Stage::kDual;
  }
  return Stage::kDual;
}

void CycleConfig::validate() const {
  if (cycles < 1) throw ConfigError("cycle.cycles must be >= 1");
  if (!(lambda_cum >= 0.0)) throw ConfigError("cycle.lambda_cum must be >= 0");
  step.validate("cycle.step");
}

void to_json(nlohmann::json& j, const CycleConfig& c) {
  j = {{"cycles", c.cycles}, {"lambda_cum", c.lambda_cum}, {"metric", std::string(metric_name(c.metric))}, {"step", c.step}};
}

void from_json(const nlohmann::json& j, CycleConfig& c) {
  read_optional(j, "cycles", c.cycles);
  read_optional(j, "lambda_cum", c.lambda_cum);
  std::string metric(metric_name(c.metric));
  read_optional(j, "metric", metric);
  c.metric = parse_metric(metric);
  if (j.contains("step")) c.step = j.at("step").get<StageConfig>();
}

FinalLoss final_loss(CycleStep kind, const TripletBatch& batch, NetworkState& state, const LossWeights& weights,
                     const PerceptualExtractor& extractor, double lambda_cum, DistanceMetric metric) {
  const auto active = pair_stage_of(kind);
  const auto pair = encoders_for(active);
  FdnBatch fb;
  fb.encoders = pair;
  switch (kind) {
    case CycleStep::kStyle:
      fb = {batch.x_s, batch.y_s, batch.x_m, pair};
      break;
    case CycleStep::kFog:
      if (!batch.y_m.defined()) throw PipelineError("fog step needs pseudo labels for domain m");
      fb = {batch.x_m, batch.y_m, batch.x_t, pair};
      break;
    case CycleStep::kDual:
      fb = {batch.x_s, batch.y_s, batch.x_t, pair};
      break;
  }
  if (!fb.y1.defined()) throw PipelineError("cyclic step needs labels for domain s");

  FinalLoss out;
  out.pair = fdn_loss(fb, weights, extractor, state);
  std::array<CodePair, 3> codes;
  for (size_t i = 0; i < kCycleOrder.size(); ++i) {
    const auto stage = pair_stage_of(kCycleOrder[i]);
    codes[i] = stage == active ? CodePair{out.pair.z2, out.pair.z1} : codes_of(state, stage, batch);
    out.distances[i] = private_distance(codes[i].first, codes[i].second, metric);
  }
  const auto r = out.distances[0] + out.distances[1] - out.distances[2];
  out.cumulative = r * r;
  out.total = lambda_cum == 0.0 ? out.pair.total : out.pair.total + lambda_cum * out.cumulative;
  return out;
}

NetworkState run_cyclic_training(NetworkState state, const TrainingContext& ctx, const CycleConfig& cfg) {
  cfg.validate();
  const auto& data = ctx.data;
  if (state.stage != Stage::kDual && state.stage != Stage::kCyclic) {
    throw PipelineError("cyclic training needs a finished decomposition (stage s2t), got stage " +
                        std::string(stage_name(state.stage)));
  }
  for (bool trained : state.private_trained) {
    if (!trained) throw PipelineError("cyclic training needs all six private encoders trained by the decomposition");
  }
  if (!data.s.has_labels()) throw PipelineError("cyclic training needs labels for domain s");
  state.stage = Stage::kCyclic;
  const auto dt = state.dtype();
  const int total_steps = cfg.cycles * static_cast<int>(kCycleOrder.size());

  torch::Tensor pseudo_m;
  while (state.cycle_steps_done < total_steps) {
    const int cycle = state.cycle_steps_done / 3 + 1;
    const auto kind = kCycleOrder[static_cast<size_t>(state.cycle_steps_done % 3)];
    const auto phase = "cycle" + std::to_string(cycle) + "/" + std::string(cycle_step_name(kind));
    with_context(phase, [&] {
      if (kind == CycleStep::kFog) pseudo_m = generate_pseudo_labels(state, data.m.images, cfg.step.pseudo_label_threshold);
      const auto pair = encoders_for(pair_stage_of(kind));
      std::vector<ParamGroup> trainable(kSharedGroups.begin(), kSharedGroups.end());
      trainable.push_back(group_of(pair.first));
      trainable.push_back(group_of(pair.second));
      state.set_trainable_only(trainable);
      run_training_loop(
          state, phase, cfg.step,
          [&](int) {
            const auto is = sample_indices(state, data.s.size(), cfg.step.batch_size);
            const auto im = sample_indices(state, data.m.size(), cfg.step.batch_size);
            const auto it = sample_indices(state, data.t.size(), cfg.step.batch_size);
            TripletBatch batch{data.s.images.index_select(0, is).to(dt), data.s.labels.index_select(0, is),
                               data.m.images.index_select(0, im).to(dt), torch::Tensor(),
                               data.t.images.index_select(0, it).to(dt)};
            if (kind == CycleStep::kFog) batch.y_m = pseudo_m.index_select(0, im);
            const auto loss = final_loss(kind, batch, state, ctx.weights, ctx.extractor, cfg.lambda_cum, cfg.metric);
            auto breakdown = loss.pair.breakdown();
            breakdown["cum"] = loss.cumulative.item<double>();
            breakdown["d_style"] = loss.distances[0].item<double>();
            breakdown["d_fog"] = loss.distances[1].item<double>();
            breakdown["d_dual"] = loss.distances[2].item<double>();
            breakdown["final"] = loss.total.item<double>();
            return StepLoss{loss.total + loss.pair.aux_seg, loss.pair.discriminator, std::move(breakdown)};
          },
          ctx.hooks);
    });
    ++state.cycle_steps_done;
    if (ctx.hooks.on_checkpoint) {
      ctx.hooks.on_checkpoint("cycle_" + std::to_string(cycle) + "_" + std::string(cycle_step_name(kind)), state);
    }
  }
  if (ctx.hooks.on_checkpoint) ctx.hooks.on_checkpoint("final", state);
  return state;
}

}  // namespace cudanet
