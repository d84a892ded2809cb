#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <vector>

#include <torch/torch.h>

#include "cudanet/nets.hpp"

namespace cudanet {

// Pipeline position. Transitions are strictly ordered:
// init -> source -> s2m -> m2t -> s2t -> cyclic (source may be skipped).
enum class Stage { kInit, kSource, kStyle, kFog, kDual, kCyclic };

std::string_view stage_name(Stage s);  // init, source, s2m, m2t, s2t, cyclic
Stage parse_stage(std::string_view name);

enum class ParamGroup {
  kContentEncoder,
  kDecoder,
  kSegHead,
  kDiscriminator,
  kStyS,
  kStyM,
  kFogM,
  kFogT,
  kDualS,
  kDualT,
};

inline constexpr size_t kNumGroups = 10;
inline constexpr std::array<ParamGroup, kNumGroups> kAllGroups{
    ParamGroup::kContentEncoder, ParamGroup::kDecoder, ParamGroup::kSegHead, ParamGroup::kDiscriminator,
    ParamGroup::kStyS,           ParamGroup::kStyM,    ParamGroup::kFogM,    ParamGroup::kFogT,
    ParamGroup::kDualS,          ParamGroup::kDualT};
inline constexpr std::array<ParamGroup, 4> kSharedGroups{ParamGroup::kContentEncoder, ParamGroup::kDecoder,
                                                          ParamGroup::kSegHead, ParamGroup::kDiscriminator};

std::string_view group_name(ParamGroup g);
ParamGroup parse_group(std::string_view name);
ParamGroup group_of(PrivateEncoderId id);

// The private encoder pair (labeled side, unlabeled side) owned by a pair stage.
struct EncoderPair {
  PrivateEncoderId first;
  PrivateEncoderId second;
};
EncoderPair encoders_for(Stage pair_stage);  // s2m, m2t or s2t

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
};

// Adam moments for one parameter group. The learning rate is supplied per step
// so schedules live with the training loop.
class GroupOptimizer {
 public:
  void step(const std::vector<torch::Tensor>& params, double lr, const AdamConfig& cfg);

  std::int64_t steps = 0;
  std::vector<torch::Tensor> exp_avg;
  std::vector<torch::Tensor> exp_avg_sq;
};

// Everything a training run owns: shared parts, the six private encoders,
// freeze flags, per-group optimizer state and the sampling RNG.
// Not copyable; use clone() for an independent deep copy.
class NetworkState {
 public:
  NetworkState(const ModelDims& dims, std::uint64_t seed);
  NetworkState(const NetworkState&) = delete;
  NetworkState& operator=(const NetworkState&) = delete;
  NetworkState(NetworkState&&) = default;
  NetworkState& operator=(NetworkState&&) = default;

  [[nodiscard]] NetworkState clone() const;

  [[nodiscard]] torch::nn::Module& module(ParamGroup g);
  [[nodiscard]] const torch::nn::Module& module(ParamGroup g) const;
  [[nodiscard]] std::vector<torch::Tensor> parameters(ParamGroup g) const;
  [[nodiscard]] PrivateEncoder& private_encoder(PrivateEncoderId id) { return private_encoders[static_cast<size_t>(id)]; }

  [[nodiscard]] bool is_frozen(ParamGroup g) const { return frozen[static_cast<size_t>(g)]; }
  // Freezes every group except those listed.
  void set_trainable_only(std::initializer_list<ParamGroup> groups);
  void set_trainable_only(const std::vector<ParamGroup>& groups);
  // Syncs requires_grad with `frozen`.
  void apply_frozen_flags();

  // Fresh seeded parameters and a reset optimizer for one group.
  void reinitialize(ParamGroup g, std::uint64_t salt);

  // FNV-1a over the raw parameter bytes of a group.
  [[nodiscard]] std::uint64_t parameter_hash(ParamGroup g) const;

  void to(torch::Dtype dtype);
  [[nodiscard]] torch::Dtype dtype() const;

  ModelDims dims;
  std::uint64_t seed = 0;
  ContentEncoder content_encoder{nullptr};
  Decoder decoder{nullptr};
  SegHead seg_head{nullptr};
  Discriminator discriminator{nullptr};
  std::array<PrivateEncoder, 6> private_encoders{PrivateEncoder{nullptr}, PrivateEncoder{nullptr}, PrivateEncoder{nullptr},
                                                 PrivateEncoder{nullptr}, PrivateEncoder{nullptr}, PrivateEncoder{nullptr}};
  std::array<bool, kNumGroups> frozen{};
  std::array<bool, 6> private_trained{};
  Stage stage = Stage::kInit;
  int cycle_steps_done = 0;  // completed style/fog/dual steps of cyclic training
  std::array<GroupOptimizer, kNumGroups> optimizers;
  std::mt19937_64 rng;
};

// Forward helpers used across modules.
torch::Tensor encode_content(NetworkState& state, const torch::Tensor& images);
torch::Tensor encode_private(NetworkState& state, const torch::Tensor& images, PrivateEncoderId id);
torch::Tensor decode(NetworkState& state, const torch::Tensor& content, const torch::Tensor& code);
torch::Tensor segment(NetworkState& state, const torch::Tensor& content);

}  // namespace cudanet
