#include "cudanet/state.hpp"

#include <algorithm>
#include <string>

#include "cudanet/errors.hpp"
#include "cudanet/json_util.hpp"

namespace cudanet {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t group_seed(std::uint64_t seed, ParamGroup g, std::uint64_t salt) {
  return splitmix64(splitmix64(seed) ^ splitmix64(static_cast<std::uint64_t>(g) + 1) ^ (salt * 0x2545f4914f6cdd1dULL));
}

}  // namespace

std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::kInit:
      return "init";
    case Stage::kSource:
      return "source";
    case Stage::kStyle:
      return "s2m";
    case Stage::kFog:
      return "m2t";
    case Stage::kDual:
      return "s2t";
    case Stage::kCyclic:
      return "cyclic";
  }
  return "?";
}

Stage parse_stage(std::string_view name) {
  for (const Stage s : {Stage::kInit, Stage::kSource, Stage::kStyle, Stage::kFog, Stage::kDual, Stage::kCyclic}) {
    if (stage_name(s) == name) return s;
  }
  throw ConfigError("unknown stage '" + std::string(name) + "'");
}

std::string_view group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::kContentEncoder:
      return "content_encoder";
    case ParamGroup::kDecoder:
      return "decoder";
    case ParamGroup::kSegHead:
      return "seg_head";
    case ParamGroup::kDiscriminator:
      return "discriminator";
    case ParamGroup::kStyS:
      return "sty_s";
    case ParamGroup::kStyM:
      return "sty_m";
    case ParamGroup::kFogM:
      return "fog_m";
    case ParamGroup::kFogT:
      return "fog_t";
    case ParamGroup::kDualS:
      return "dual_s";
    case ParamGroup::kDualT:
      return "dual_t";
  }
  return "?";
}

ParamGroup parse_group(std::string_view name) {
  for (const auto g : kAllGroups) {
    if (group_name(g) == name) return g;
  }
  throw ConfigError("unknown parameter group '" + std::string(name) + "'");
}

ParamGroup group_of(PrivateEncoderId id) {
  return static_cast<ParamGroup>(static_cast<int>(ParamGroup::kStyS) + static_cast<int>(id));
}

EncoderPair encoders_for(Stage pair_stage) {
  switch (pair_stage) {
    case Stage::kStyle:
      return {PrivateEncoderId::kStyleS, PrivateEncoderId::kStyleM};
    case Stage::kFog:
      return {PrivateEncoderId::kFogM, PrivateEncoderId::kFogT};
    case Stage::kDual:
      return {PrivateEncoderId::kDualS, PrivateEncoderId::kDualT};
    default:
      throw PipelineError("stage " + std::string(stage_name(pair_stage)) + " has no private encoder pair");
  }
}

void GroupOptimizer::step(const std::vector<torch::Tensor>& params, double lr, const AdamConfig& cfg) {
  torch::NoGradGuard no_grad;
  if (exp_avg.empty()) {
    for (const auto& p : params) {
      exp_avg.push_back(torch::zeros_like(p));
      exp_avg_sq.push_back(torch::zeros_like(p));
    }
  }
  if (exp_avg.size() != params.size()) throw PipelineError("optimizer state does not match its parameter group");
  ++steps;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(steps));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(steps));
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& grad = params[i].grad();
    if (!grad.defined()) continue;
    exp_avg[i].mul_(cfg.beta1).add_(grad, 1.0 - cfg.beta1);
    exp_avg_sq[i].mul_(cfg.beta2).addcmul_(grad, grad, 1.0 - cfg.beta2);
    const auto denom = (exp_avg_sq[i] / bc2).sqrt_().add_(cfg.eps);
    params[i].addcdiv_(exp_avg[i], denom, -lr / bc1);
  }
}

NetworkState::NetworkState(const ModelDims& d, std::uint64_t s) : dims(d), seed(s), rng(splitmix64(s)) {
  if (dims.num_classes < 2 || dims.content_dim < 1 || dims.private_dim < 1) throw ConfigError("invalid model dimensions");
  content_encoder = ContentEncoder(dims.content_dim);
  decoder = Decoder(dims.content_dim, dims.private_dim);
  seg_head = SegHead(dims.content_dim, dims.num_classes);
  discriminator = Discriminator(dims.num_classes);
  for (auto& enc : private_encoders) enc = PrivateEncoder(dims.private_dim);
  for (const auto g : kAllGroups) init_parameters(module(g), group_seed(seed, g, 0));
  for (const auto g : kAllGroups) module(g).eval();
}

torch::nn::Module& NetworkState::module(ParamGroup g) {
  return const_cast<torch::nn::Module&>(std::as_const(*this).module(g));
}

const torch::nn::Module& NetworkState::module(ParamGroup g) const {
  switch (g) {
    case ParamGroup::kContentEncoder:
      return *content_encoder;
    case ParamGroup::kDecoder:
      return *decoder;
    case ParamGroup::kSegHead:
      return *seg_head;
    case ParamGroup::kDiscriminator:
      return *discriminator;
    default:
      return *private_encoders[static_cast<size_t>(g) - static_cast<size_t>(ParamGroup::kStyS)];
  }
}

std::vector<torch::Tensor> NetworkState::parameters(ParamGroup g) const { return module(g).parameters(true); }

NetworkState NetworkState::clone() const {
  NetworkState copy(dims, seed);
  copy.to(dtype());
  {
    torch::NoGradGuard no_grad;
    for (const auto g : kAllGroups) {
      const auto src = parameters(g);
      const auto dst = copy.parameters(g);
      for (size_t i = 0; i < src.size(); ++i) dst[i].copy_(src[i]);
    }
  }
  copy.frozen = frozen;
  copy.apply_frozen_flags();
  copy.private_trained = private_trained;
  copy.stage = stage;
  copy.cycle_steps_done = cycle_steps_done;
  for (size_t g = 0; g < kNumGroups; ++g) {
    auto& dst = copy.optimizers[g];
    dst.steps = optimizers[g].steps;
    dst.exp_avg.clear();
    dst.exp_avg_sq.clear();
    for (const auto& t : optimizers[g].exp_avg) dst.exp_avg.push_back(t.clone());
    for (const auto& t : optimizers[g].exp_avg_sq) dst.exp_avg_sq.push_back(t.clone());
  }
  copy.rng = rng;
  return copy;
}

void NetworkState::set_trainable_only(std::initializer_list<ParamGroup> groups) {
  set_trainable_only(std::vector<ParamGroup>(groups));
}

void NetworkState::set_trainable_only(const std::vector<ParamGroup>& groups) {
  frozen.fill(true);
  for (const auto g : groups) frozen[static_cast<size_t>(g)] = false;
  apply_frozen_flags();
}

void NetworkState::apply_frozen_flags() {
  for (const auto g : kAllGroups) {
    for (auto& p : module(g).parameters(true)) p.set_requires_grad(!is_frozen(g));
  }
}

void NetworkState::reinitialize(ParamGroup g, std::uint64_t salt) {
  init_parameters(module(g), group_seed(seed, g, salt));
  optimizers[static_cast<size_t>(g)] = GroupOptimizer{};
}

std::uint64_t NetworkState::parameter_hash(ParamGroup g) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : parameters(g)) {
    const auto c = p.detach().contiguous().cpu();
    const std::string_view bytes(static_cast<const char*>(c.data_ptr()), static_cast<size_t>(c.nbytes()));
    h = fnv1a(bytes, h);
  }
  return h;
}

void NetworkState::to(torch::Dtype dt) {
  for (const auto g : kAllGroups) module(g).to(dt);
  for (auto& opt : optimizers) {
    for (auto& t : opt.exp_avg) t = t.to(dt);
    for (auto& t : opt.exp_avg_sq) t = t.to(dt);
  }
}

torch::Dtype NetworkState::dtype() const { return parameters(ParamGroup::kContentEncoder).front().scalar_type(); }

torch::Tensor encode_content(NetworkState& state, const torch::Tensor& images) { return state.content_encoder(images); }

torch::Tensor encode_private(NetworkState& state, const torch::Tensor& images, PrivateEncoderId id) {
  return state.private_encoder(id)(images);
}

torch::Tensor decode(NetworkState& state, const torch::Tensor& content, const torch::Tensor& code) {
  if (code.size(1) != state.dims.private_dim || content.size(1) != state.dims.content_dim) {
    throw ShapeError("decode: feature dimensions do not match the model");
  }
  return state.decoder(content, code);
}

torch::Tensor segment(NetworkState& state, const torch::Tensor& content) {
  if (content.size(1) != state.dims.content_dim) throw ShapeError("segment: content dimension mismatch");
  return state.seg_head(content);
}

}  // namespace cudanet
