#include <cmath>

#include <gtest/gtest.h>

#include "cudanet/errors.hpp"
#include "cudanet/losses.hpp"
#include "cudanet/nets.hpp"
#include "cudanet/state.hpp"
#include "test_support.hpp"

using namespace cudanet;

namespace {

const ModelDims kDims{5, 8, 4};

torch::Tensor random_images(int n, int h, int w, std::uint64_t seed, torch::Dtype dt = torch::kFloat32) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  return torch::rand({n, 3, h, w}, gen, torch::TensorOptions().dtype(dt));
}

torch::Tensor random_labels(int n, int h, int w, std::uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  return torch::randint(0, 5, {n, h, w}, gen, torch::TensorOptions().dtype(torch::kLong));
}

FdnBatch fixture_batch(torch::Dtype dt) {
  return {random_images(2, 16, 16, 11, dt), random_labels(2, 16, 16, 12), random_images(2, 16, 16, 13, dt),
          encoders_for(Stage::kStyle)};
}

}  // namespace

TEST(Fdn, ContentShapeAndPurity) {
  NetworkState state(kDims, 1);
  const auto x = random_images(2, 32, 32, 1);
  const auto c1 = encode_content(state, x);
  EXPECT_EQ(c1.sizes(), (std::vector<int64_t>{2, 8, 8, 8}));
  EXPECT_TRUE(torch::equal(c1, encode_content(state, x)));
}

TEST(Fdn, PrivateEncodersHaveLengthDzAndDisjointParameters) {
  NetworkState state(kDims, 1);
  const auto x = random_images(3, 16, 16, 2);
  const auto a = encode_private(state, x, PrivateEncoderId::kStyleS);
  const auto b = encode_private(state, x, PrivateEncoderId::kDualS);
  EXPECT_EQ(a.sizes(), (std::vector<int64_t>{3, 4}));
  EXPECT_FALSE(torch::allclose(a, b));
  for (size_t i = 0; i < kAllPrivateEncoders.size(); ++i) {
    for (size_t j = i + 1; j < kAllPrivateEncoders.size(); ++j) {
      const auto pi = state.parameters(group_of(kAllPrivateEncoders[i]));
      const auto pj = state.parameters(group_of(kAllPrivateEncoders[j]));
      for (const auto& p : pi) {
        for (const auto& q : pj) EXPECT_NE(p.data_ptr(), q.data_ptr());
      }
    }
  }
}

TEST(Fdn, UnknownEncoderNameIsConfigError) {
  EXPECT_EQ(parse_encoder_id("fog_t"), PrivateEncoderId::kFogT);
  EXPECT_THROW((void)parse_encoder_id("fog_x"), ConfigError);
}

TEST(Fdn, DecoderOutputInUnitRange) {
  NetworkState state(kDims, 3);
  torch::NoGradGuard ng;
  const auto c = torch::randn({4, 8, 4, 4}) * 10.0;
  const auto z = torch::randn({4, 4}) * 10.0;
  const auto out = decode(state, c, z);
  EXPECT_EQ(out.sizes(), (std::vector<int64_t>{4, 3, 16, 16}));
  EXPECT_GE(out.min().item<double>(), 0.0);
  EXPECT_LE(out.max().item<double>(), 1.0);
}

TEST(Fdn, DecoderRejectsMismatchedBatch) {
  NetworkState state(kDims, 3);
  EXPECT_ANY_THROW((void)decode(state, torch::randn({2, 8, 4, 4}), torch::randn({3, 4})));
}

TEST(Fdn, SegmentationIsSoftmaxAtFourTimesContentResolution) {
  NetworkState state(kDims, 4);
  torch::NoGradGuard ng;
  const auto h = segment(state, torch::randn({2, 8, 8, 8}));
  EXPECT_EQ(h.sizes(), (std::vector<int64_t>{2, 5, 32, 32}));
  EXPECT_LT((h.sum(1) - 1.0).abs().max().item<double>(), 1e-5);
  const auto arg = h.argmax(1);
  EXPECT_LT(arg.max().item<int64_t>(), 5);
}

TEST(Fdn, PerceptualLossIdentityAndSymmetry) {
  const auto ex = PerceptualExtractor::random(9);
  const auto a = random_images(2, 16, 16, 5);
  const auto b = random_images(2, 16, 16, 6);
  EXPECT_EQ(perceptual_loss(a, a, ex, kShallowProfile).item<double>(), 0.0);
  EXPECT_NEAR(perceptual_loss(a, b, ex, kDeepProfile).item<double>(), perceptual_loss(b, a, ex, kDeepProfile).item<double>(),
              1e-6);
  EXPECT_GT(perceptual_loss(a, b, ex, kShallowProfile).item<double>(), 0.0);
}

TEST(Fdn, PerceptualLossRejectsShapeMismatch) {
  const auto ex = PerceptualExtractor::identity();
  const std::vector<double> w{1.0};
  EXPECT_THROW((void)perceptual_loss(torch::zeros({1, 3, 2, 2}), torch::zeros({1, 3, 2, 3}), ex, w), ShapeError);
}

TEST(Fdn, IdentityExtractorIsPixelMse) {
  const auto ex = PerceptualExtractor::identity();
  const std::vector<double> w{1.0};
  const std::vector<float> av{0.1F, 0.2F, 0.3F, 0.4F, 0.5F, 0.6F, 0.7F, 0.8F, 0.9F, 1.0F, 0.0F, 0.5F};
  const std::vector<float> bv{0.0F, 0.2F, 0.5F, 0.4F, 0.1F, 0.6F, 0.7F, 0.0F, 0.9F, 0.5F, 0.0F, 0.5F};
  const auto a = torch::tensor(av).reshape({1, 3, 2, 2});
  const auto b = torch::tensor(bv).reshape({1, 3, 2, 2});
  double sq = 0.0;
  for (size_t i = 0; i < av.size(); ++i) sq += (static_cast<double>(av[i]) - bv[i]) * (static_cast<double>(av[i]) - bv[i]);
  EXPECT_NEAR(perceptual_loss(a, b, ex, w).item<double>(), sq / 12.0, 1e-7);
}

TEST(Fdn, ReconstructionAndTranslationAreSums) {
  const auto ex = PerceptualExtractor::random(9);
  const auto x1 = random_images(2, 16, 16, 1);
  const auto r1 = random_images(2, 16, 16, 2);
  const auto x2 = random_images(2, 16, 16, 3);
  const auto r2 = random_images(2, 16, 16, 4);
  EXPECT_EQ(reconstruction_loss(x1, r1, x2, r2, ex).item<double>(),
            (perceptual_loss(x1, r1, ex, kShallowProfile) + perceptual_loss(x2, r2, ex, kShallowProfile)).item<double>());
  EXPECT_EQ(translation_loss(x1, r1, x2, r2, ex).item<double>(),
            (perceptual_loss(x1, r1, ex, kDeepProfile) + perceptual_loss(x2, r2, ex, kDeepProfile)).item<double>());
  EXPECT_EQ(reconstruction_loss(x1, x1, x2, x2, ex).item<double>(), 0.0);
  EXPECT_EQ(translation_loss(x1, x1, x2, r2, ex).item<double>(), perceptual_loss(x2, r2, ex, kDeepProfile).item<double>());
}

TEST(Fdn, DeepProfileIsLessSensitiveToBrightnessOffset) {
  const auto ex = PerceptualExtractor::random(0x70657263);
  const auto x = random_images(4, 32, 32, 21) * 0.8;
  const auto brighter = x + 0.1;
  const double deep = perceptual_loss(x, brighter, ex, kDeepProfile).item<double>();
  const double shallow = perceptual_loss(x, brighter, ex, kShallowProfile).item<double>();
  EXPECT_LT(deep, shallow);
}

TEST(Fdn, CrossEntropyHandValues) {
  const auto uniform = torch::full({1, 5, 4, 4}, 0.2);
  EXPECT_NEAR(segmentation_loss(uniform, random_labels(1, 4, 4, 3)).item<double>(), std::log(5.0), 1e-6);

  auto probs = torch::zeros({1, 2, 1, 2}, torch::kFloat64);
  probs[0][0][0][0] = 0.7;
  probs[0][1][0][0] = 0.3;
  probs[0][0][0][1] = 0.2;
  probs[0][1][0][1] = 0.8;
  const auto y = torch::zeros({1, 1, 2}, torch::kLong);
  EXPECT_NEAR(segmentation_loss(probs, y).item<double>(), -(std::log(0.7) + std::log(0.2)) / 2.0, 1e-12);
  EXPECT_NEAR(segmentation_loss(probs, y).item<double>(), 0.9831, 1e-4);
}

TEST(Fdn, CrossEntropyOneHotAndIgnore) {
  const auto y = random_labels(2, 4, 4, 8);
  const auto onehot = torch::one_hot(y, 5).permute({0, 3, 1, 2}).to(torch::kFloat64);
  EXPECT_LT(segmentation_loss(onehot, y).item<double>(), 1e-12);

  auto partial = y.clone();
  partial.index_put_({0}, kIgnoreIndex);
  const auto uniform = torch::full({2, 5, 4, 4}, 0.2, torch::kFloat64);
  EXPECT_NEAR(segmentation_loss(uniform, partial).item<double>(), std::log(5.0), 1e-12);

  const auto all_ignored = torch::full({2, 4, 4}, kIgnoreIndex, torch::kLong);
  EXPECT_THROW((void)segmentation_loss(uniform, all_ignored), NumericalError);
  EXPECT_THROW((void)segmentation_loss(uniform, torch::full({2, 4, 4}, 7, torch::kLong)), DataError);
}

TEST(Fdn, AdversarialHandValues) {
  EXPECT_NEAR(generator_adversarial_loss(torch::ones({1, 1, 4, 4}, torch::kFloat64)).item<double>(), 0.0, 1e-5);
  const auto half = torch::full({1, 1, 4, 4}, 0.5, torch::kFloat64);
  EXPECT_NEAR(generator_adversarial_loss(half).item<double>(), -16.0 * std::log(0.5), 1e-12);
  EXPECT_NEAR(generator_adversarial_loss(half).item<double>(), 11.09, 1e-2);
  EXPECT_NEAR(discriminator_loss(half, half).item<double>(), std::log(2.0), 1e-12);
  EXPECT_THROW((void)generator_adversarial_loss(torch::full({1, 1, 2, 2}, NAN)), NumericalError);
}

TEST(Fdn, DiscriminatorLossReachesOnlyTheDiscriminator) {
  NetworkState state(kDims, 5);
  const auto x = random_images(2, 16, 16, 7);
  const auto h1 = segment(state, encode_content(state, x));
  const auto h2 = segment(state, encode_content(state, x.flip(3)));
  auto adv = adversarial_losses(h2, h1, state.discriminator);
  adv.discriminator.backward();
  for (const auto& p : state.parameters(ParamGroup::kContentEncoder)) EXPECT_FALSE(p.grad().defined());
  bool any = false;
  for (const auto& p : state.parameters(ParamGroup::kDiscriminator)) any = any || p.grad().defined();
  EXPECT_TRUE(any);
}

TEST(Fdn, FdnLossIsTheWeightedSum) {
  NetworkState state(kDims, 6);
  const auto ex = PerceptualExtractor::random(9);
  const auto batch = fixture_batch(torch::kFloat32);
  const auto zero = fdn_loss(batch, {0.0, 0.0, 0.0, 0.0}, ex, state);
  EXPECT_EQ(zero.total.item<double>(), 0.0);

  const auto rec_only = fdn_loss(batch, {1.0, 0.0, 0.0, 0.0}, ex, state);
  EXPECT_EQ(rec_only.total.item<double>(), rec_only.rec.item<double>());

  const LossWeights w;
  const auto l = fdn_loss(batch, w, ex, state);
  const auto assembled = w.rec * l.rec + w.trans * l.trans + w.seg * (l.seg + l.seg_translated) + w.segadv * l.segadv;
  EXPECT_EQ(l.total.item<double>(), assembled.item<double>());
  EXPECT_EQ(l.breakdown().at("total"), l.total.item<double>());
}

TEST(Fdn, TranslatedImageIsSupervisedWithLabeledSideLabels) {
  NetworkState state(kDims, 6);
  const auto ex = PerceptualExtractor::random(9);
  auto batch = fixture_batch(torch::kFloat32);
  const auto a = fdn_loss(batch, {}, ex, state);
  torch::Tensor x1_to_2;
  {
    torch::NoGradGuard ng;
    const auto c1 = encode_content(state, batch.x1);
    const auto z2 = encode_private(state, batch.x2, batch.encoders.second);
    x1_to_2 = decode(state, c1, z2);
    const auto h12 = segment(state, encode_content(state, x1_to_2));
    EXPECT_NEAR(segmentation_loss(h12, batch.y1).item<double>(), a.seg_translated.item<double>(), 1e-5);
  }
}

class FdnGradient : public ::testing::Test {
 protected:
  FdnGradient() : state(kDims, 17), ex(PerceptualExtractor::random(9, torch::kFloat64)), batch(fixture_batch(torch::kFloat64)) {
    state.to(torch::kFloat64);
  }
  torch::Tensor component(torch::Tensor FdnLoss::*field) { return fdn_loss(batch, {}, ex, state).*field; }
  torch::Tensor param(ParamGroup g, size_t i) { return state.parameters(g).at(i); }

  NetworkState state;
  PerceptualExtractor ex;
  FdnBatch batch;
};

TEST_F(FdnGradient, Reconstruction) {
  auto f = [&] { return component(&FdnLoss::rec); };
  EXPECT_LT(test::gradient_check(param(ParamGroup::kDecoder, 0), f, 6), 1e-3);
  EXPECT_LT(test::gradient_check(param(ParamGroup::kContentEncoder, 0), f, 6), 1e-3);
  EXPECT_LT(test::gradient_check(param(ParamGroup::kStyS, 0), f, 6), 1e-3);
}

TEST_F(FdnGradient, Translation) {
  auto f = [&] { return component(&FdnLoss::trans); };
  EXPECT_LT(test::gradient_check(param(ParamGroup::kDecoder, 0), f, 6), 1e-3);
  EXPECT_LT(test::gradient_check(param(ParamGroup::kStyM, 0), f, 6), 1e-3);
}

TEST_F(FdnGradient, Segmentation) {
  auto f = [&] { return component(&FdnLoss::seg); };
  EXPECT_LT(test::gradient_check(param(ParamGroup::kSegHead, 0), f, 6), 1e-3);
  EXPECT_LT(test::gradient_check(param(ParamGroup::kContentEncoder, 0), f, 6), 1e-3);
}

TEST_F(FdnGradient, SegmentationAdversarial) {
  auto f = [&] { return component(&FdnLoss::segadv); };
  EXPECT_LT(test::gradient_check(param(ParamGroup::kSegHead, 0), f, 6), 1e-3);
  EXPECT_LT(test::gradient_check(param(ParamGroup::kContentEncoder, 0), f, 6), 1e-3);
}
