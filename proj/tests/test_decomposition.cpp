#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "cudanet/checkpoint.hpp"
#include "cudanet/data.hpp"
#include "cudanet/decomposition.hpp"
#include "cudanet/errors.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace cudanet;

namespace {

const ModelDims kDims{5, 8, 4};

DatasetManifest tiny_dataset(const std::filesystem::path& root) {
  DatasetConfig cfg;
  cfg.height = 16;
  cfg.width = 16;
  cfg.n_s = 4;
  cfg.n_m = 3;
  cfg.n_t = 3;
  return build_tridomain_dataset(cfg, root);
}

StageConfig short_stage(int steps) {
  StageConfig c;
  c.steps = steps;
  c.batch_size = 2;
  c.log_every = 1;
  return c;
}

NetworkState trained_through(Stage last, const TrainingData& data, const PerceptualExtractor& ex) {
  NetworkState state(kDims, 5);
  const auto cfg = short_stage(1);
  const LossWeights w;
  state = transfer_shared(state, Stage::kStyle);
  train_stage(state, Stage::kStyle, data.s.images, data.s.labels, data.m.images, cfg, w, ex, {});
  if (last == Stage::kStyle) return state;
  const auto pseudo = generate_pseudo_labels(state, data.m.images, std::nullopt);
  state = transfer_shared(state, Stage::kFog);
  train_stage(state, Stage::kFog, data.m.images, pseudo, data.t.images, cfg, w, ex, {});
  return state;
}

}  // namespace

TEST(Decomposition, HandOffOrderIsEnforced) {
  NetworkState fresh(kDims, 1);
  EXPECT_THROW((void)transfer_shared(fresh, Stage::kFog), PipelineError);
  EXPECT_THROW((void)transfer_shared(fresh, Stage::kDual), PipelineError);
  EXPECT_THROW((void)transfer_shared(fresh, Stage::kCyclic), PipelineError);
  auto s2m = transfer_shared(fresh, Stage::kStyle);
  EXPECT_EQ(s2m.stage, Stage::kStyle);
  EXPECT_THROW((void)transfer_shared(s2m, Stage::kFog), PipelineError);
  EXPECT_THROW((void)transfer_shared(s2m, Stage::kStyle), PipelineError);
}

TEST(Decomposition, TrainStageRequiresItsStageAndLabels) {
  test::TempDir dir("decomp-stage");
  const auto data = load_training_data(tiny_dataset(dir.path()));
  const auto ex = PerceptualExtractor::random(1);
  NetworkState state(kDims, 2);
  EXPECT_THROW(train_stage(state, Stage::kStyle, data.s.images, data.s.labels, data.m.images, short_stage(1), {}, ex, {}),
               PipelineError);
  state = transfer_shared(state, Stage::kStyle);
  EXPECT_THROW(train_stage(state, Stage::kStyle, data.s.images, torch::Tensor(), data.m.images, short_stage(1), {}, ex, {}),
               PipelineError);
  EXPECT_THROW(train_source_only(state, data.m, short_stage(1), {}), PipelineError);
}

TEST(Decomposition, HandOffCopiesSharedPartsAndFreshensTheNewPair) {
  test::TempDir dir("decomp-handoff");
  const auto data = load_training_data(tiny_dataset(dir.path()));
  const auto ex = PerceptualExtractor::random(1);
  auto style = trained_through(Stage::kStyle, data, ex);
  const auto fog = transfer_shared(style, Stage::kFog);
  for (const auto g : kSharedGroups) EXPECT_EQ(fog.parameter_hash(g), style.parameter_hash(g)) << group_name(g);
  EXPECT_EQ(fog.parameter_hash(ParamGroup::kStyS), style.parameter_hash(ParamGroup::kStyS));
  EXPECT_EQ(fog.parameter_hash(ParamGroup::kStyM), style.parameter_hash(ParamGroup::kStyM));
  EXPECT_NE(fog.parameter_hash(ParamGroup::kFogM), style.parameter_hash(ParamGroup::kFogM));
  EXPECT_NE(fog.parameter_hash(ParamGroup::kFogT), style.parameter_hash(ParamGroup::kFogT));
  EXPECT_FALSE(fog.private_trained[static_cast<size_t>(PrivateEncoderId::kFogM)]);
  EXPECT_TRUE(fog.private_trained[static_cast<size_t>(PrivateEncoderId::kStyleS)]);

  const auto before = style.parameter_hash(ParamGroup::kDecoder);
  {
    torch::NoGradGuard ng;
    fog.parameters(ParamGroup::kDecoder).front().add_(1.0);
  }
  EXPECT_EQ(style.parameter_hash(ParamGroup::kDecoder), before);
  EXPECT_NE(fog.parameter_hash(ParamGroup::kDecoder), before);
}

TEST(Decomposition, StageTrainingLeavesOtherPrivateEncodersUntouched) {
  test::TempDir dir("decomp-freeze");
  const auto data = load_training_data(tiny_dataset(dir.path()));
  const auto ex = PerceptualExtractor::random(1);
  auto state = trained_through(Stage::kStyle, data, ex);
  const auto pseudo = generate_pseudo_labels(state, data.m.images, std::nullopt);
  state = transfer_shared(state, Stage::kFog);
  std::map<ParamGroup, std::uint64_t> before;
  for (const auto g : kAllGroups) before[g] = state.parameter_hash(g);

  std::vector<FreezeAuditRecord> audits;
  TrainingHooks hooks;
  hooks.freeze_audit_every = 2;
  hooks.on_freeze_audit = [&](const FreezeAuditRecord& r) { audits.push_back(r); };
  train_stage(state, Stage::kFog, data.m.images, pseudo, data.t.images, short_stage(5), {}, ex, hooks);

  for (const auto g : {ParamGroup::kStyS, ParamGroup::kStyM, ParamGroup::kDualS, ParamGroup::kDualT}) {
    EXPECT_EQ(state.parameter_hash(g), before[g]) << group_name(g);
  }
  for (const auto g : {ParamGroup::kContentEncoder, ParamGroup::kDecoder, ParamGroup::kFogM, ParamGroup::kFogT}) {
    EXPECT_NE(state.parameter_hash(g), before[g]) << group_name(g);
  }
  std::set<int> audited_steps;
  for (const auto& r : audits) {
    audited_steps.insert(r.step);
    EXPECT_EQ(r.hash_before, r.hash_after);
  }
  EXPECT_EQ(audited_steps, (std::set<int>{0, 2, 4}));
  EXPECT_EQ(audits.size(), 3U * 4U);
}

TEST(Decomposition, FreezeAuditCatchesAChangedFrozenGroup) {
  NetworkState state(kDims, 3);
  state.set_trainable_only({ParamGroup::kContentEncoder});
  const auto x = torch::rand({1, 3, 16, 16});
  auto compute = [&](int) {
    {
      torch::NoGradGuard ng;
      state.parameters(ParamGroup::kFogT).front().add_(0.5);
    }
    return StepLoss{encode_content(state, x).square().mean(), torch::Tensor(), {}};
  };
  EXPECT_THROW(run_training_loop(state, "tamper", short_stage(2), compute, {}), PipelineError);
}

TEST(Decomposition, PseudoLabelsMatchPerPixelLoop) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto heat = oracle::random_heatmap(seed, 2, 5, 6, 7);
    for (const auto thr : {std::optional<double>{}, std::optional<double>{0.5}, std::optional<double>{0.9}}) {
      EXPECT_TRUE(torch::equal(pseudo_labels_from_heatmap(heat, thr), oracle::pseudo_label_loop(heat, thr))) << seed;
    }
  }
}

TEST(Decomposition, PseudoLabelThresholdBoundaryIsInclusive) {
  auto heat = torch::zeros({1, 2, 1, 2});
  heat[0][0][0][0] = 0.75F;
  heat[0][1][0][0] = 0.25F;
  heat[0][0][0][1] = 0.4F;
  heat[0][1][0][1] = 0.6F;
  const auto out = pseudo_labels_from_heatmap(heat, 0.75);
  EXPECT_EQ(out[0][0][0].item<int64_t>(), 0);
  EXPECT_EQ(out[0][0][1].item<int64_t>(), kIgnoreIndex);
  EXPECT_THROW((void)pseudo_labels_from_heatmap(torch::zeros({2, 2}), std::nullopt), ShapeError);
}

TEST(Decomposition, PseudoLabelOverloadsAgree) {
  test::TempDir dir("decomp-pseudo");
  const auto manifest = tiny_dataset(dir.path());
  const auto m = load_split(manifest, Domain::kIntermediate, LabelAccess::kTraining);
  NetworkState state(kDims, 4);
  const auto tensor_labels = generate_pseudo_labels(state, m.images, 0.3);
  std::vector<Image> images;
  for (int64_t i = 0; i < m.size(); ++i) images.push_back(tensor_to_image(m.images[i]));
  const auto maps = generate_pseudo_labels(state, std::span<const Image>(images), 0.3);
  ASSERT_EQ(maps.size(), static_cast<size_t>(m.size()));
  EXPECT_TRUE(torch::equal(labels_to_tensor(maps), tensor_labels));
}

TEST(Decomposition, CheckpointRoundTripIsBitStable) {
  test::TempDir dir("decomp-ckpt");
  const auto data = load_training_data(tiny_dataset(dir.path() / "data"));
  const auto ex = PerceptualExtractor::random(1);
  auto state = trained_through(Stage::kFog, data, ex);
  const nlohmann::json echo{{"note", "fixture"}};
  save_checkpoint(dir.path() / "a.ckpt", state, echo);
  auto loaded = load_checkpoint(dir.path() / "a.ckpt", kDims);
  save_checkpoint(dir.path() / "b.ckpt", loaded.state, loaded.config);
  EXPECT_EQ(test::read_bytes(dir.path() / "a.ckpt"), test::read_bytes(dir.path() / "b.ckpt"));
  EXPECT_EQ(loaded.config, echo);
  EXPECT_EQ(loaded.state.stage, Stage::kFog);
  EXPECT_EQ(loaded.state.private_trained, state.private_trained);
  for (const auto g : kAllGroups) EXPECT_EQ(loaded.state.parameter_hash(g), state.parameter_hash(g));
  EXPECT_EQ(loaded.state.rng(), state.rng());
  EXPECT_TRUE(test::read_bytes(dir.path() / "a.ckpt").starts_with(std::string(kCheckpointMagic) + "\n"));
}

TEST(Decomposition, CheckpointErrors) {
  test::TempDir dir("decomp-ckpt-err");
  EXPECT_THROW((void)load_checkpoint(dir.path() / "missing.ckpt"), PrerequisiteError);
  {
    std::ofstream out(dir.path() / "bad.ckpt");
    out << "NOT-A-CHECKPOINT\n";
  }
  EXPECT_THROW((void)load_checkpoint(dir.path() / "bad.ckpt"), DataError);
  NetworkState state(kDims, 1);
  save_checkpoint(dir.path() / "ok.ckpt", state, {});
  EXPECT_THROW((void)load_checkpoint(dir.path() / "ok.ckpt", ModelDims{5, 16, 4}), ConfigError);
  const auto bytes = test::read_bytes(dir.path() / "ok.ckpt");
  {
    std::ofstream out(dir.path() / "cut.ckpt", std::ios::binary);
    out << bytes.substr(0, bytes.size() / 2);
  }
  EXPECT_THROW((void)load_checkpoint(dir.path() / "cut.ckpt"), DataError);
}

TEST(Decomposition, RunsAllStagesWithoutHiddenLabels) {
  test::TempDir dir("decomp-firewall");
  const auto manifest = tiny_dataset(dir.path());
  std::filesystem::remove_all(dir.path() / "t/lbl_hidden");
  std::filesystem::remove_all(dir.path() / "m/lbl");
  EXPECT_THROW((void)load_split(manifest, Domain::kTarget, LabelAccess::kEvaluation), Error);

  const auto data = load_training_data(manifest);
  const auto ex = PerceptualExtractor::random(1);
  DecompositionConfig cfg;
  for (auto* st : {&cfg.source, &cfg.s2m, &cfg.m2t, &cfg.s2t}) *st = short_stage(2);
  std::vector<std::string> tags;
  TrainingHooks hooks;
  hooks.on_checkpoint = [&](const std::string& tag, NetworkState&) { tags.push_back(tag); };
  const TrainingContext ctx{data, ex, cfg.weights, hooks};
  const auto state = run_decomposition(NetworkState(kDims, 6), ctx, cfg);
  EXPECT_EQ(state.stage, Stage::kDual);
  EXPECT_EQ(tags, (std::vector<std::string>{"stage_source", "stage_s2m", "stage_m2t", "stage_s2t"}));
  for (bool t : state.private_trained) EXPECT_TRUE(t);
}

TEST(Decomposition, StyleStageLearnsOnToyData) {
  test::TempDir dir("decomp-s2m");
  DatasetConfig dcfg;
  const auto manifest = build_tridomain_dataset(dcfg, dir.path());
  const auto data = load_training_data(manifest);
  const auto ex = PerceptualExtractor::random(0x70657263);
  auto state = transfer_shared(NetworkState({5, 32, 8}, 7), Stage::kStyle);
  StageConfig cfg;
  cfg.steps = 2000;
  cfg.lr = 1e-3;
  cfg.log_every = 1;
  std::vector<double> rec;
  TrainingHooks hooks;
  hooks.log = [&](const nlohmann::json& r) { rec.push_back(r.at("rec").get<double>()); };
  train_stage(state, Stage::kStyle, data.s.images, data.s.labels, data.m.images, cfg, {}, ex, hooks);
  ASSERT_EQ(rec.size(), 2000U);
  const double first = std::accumulate(rec.begin(), rec.begin() + 100, 0.0) / 100.0;
  const double last = std::accumulate(rec.end() - 100, rec.end(), 0.0) / 100.0;
  EXPECT_LE(last, 0.5 * first) << "first 100: " << first << " last 100: " << last;

  // Matched scenes: the style codes of s and m separate beyond the within-domain spread.
  std::vector<Image> s_imgs;
  std::vector<Image> m_imgs;
  for (std::uint64_t seed = 5000; seed < 5032; ++seed) {
    s_imgs.push_back(render_domain_scene(dcfg, Domain::kSource, seed).image);
    m_imgs.push_back(render_domain_scene(dcfg, Domain::kIntermediate, seed).image);
  }
  torch::NoGradGuard ng;
  const auto zs = encode_private(state, images_to_tensor(s_imgs), PrivateEncoderId::kStyleS);
  const auto zm = encode_private(state, images_to_tensor(m_imgs), PrivateEncoderId::kStyleM);
  const double cross = torch::linalg_vector_norm(zs - zm, 2, {1}).mean().item<double>();
  const double spread_s = torch::linalg_vector_norm(zs - zs.mean(0, true), 2, {1}).mean().item<double>();
  const double spread_m = torch::linalg_vector_norm(zm - zm.mean(0, true), 2, {1}).mean().item<double>();
  EXPECT_GT(cross, 0.5 * (spread_s + spread_m)) << "spread s " << spread_s << " m " << spread_m;
}
