#include "cudanet/training.hpp"

#include <cmath>
#include <sstream>

#include "cudanet/errors.hpp"
#include "cudanet/json_util.hpp"

namespace cudanet {

void StageConfig::validate(std::string_view name) const {
  const std::string prefix(name);
  if (steps <= 0) throw ConfigError(prefix + ".steps must be > 0");
  if (batch_size <= 0) throw ConfigError(prefix + ".batch_size must be > 0");
  if (!(lr >= 0.0) || !(disc_lr >= 0.0)) throw ConfigError(prefix + " learning rates must be >= 0");
  if (!(poly_power >= 0.0)) throw ConfigError(prefix + ".poly_power must be >= 0");
  if (pseudo_label_threshold && !(*pseudo_label_threshold >= 0.0 && *pseudo_label_threshold <= 1.0)) {
    throw ConfigError(prefix + ".pseudo_label_threshold must lie in [0, 1]");
  }
  if (log_every <= 0) throw ConfigError(prefix + ".log_every must be > 0");
}

void to_json(nlohmann::json& j, const StageConfig& c) {
  j = {{"steps", c.steps},
       {"batch_size", c.batch_size},
       {"lr", c.lr},
       {"disc_lr", c.disc_lr},
       {"poly_power", c.poly_power},
       {"adam_beta1", c.adam.beta1},
       {"adam_beta2", c.adam.beta2},
       {"log_every", c.log_every}};
  j["pseudo_label_threshold"] = c.pseudo_label_threshold ? nlohmann::json(*c.pseudo_label_threshold) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, StageConfig& c) {
  read_optional(j, "steps", c.steps);
  read_optional(j, "batch_size", c.batch_size);
  read_optional(j, "lr", c.lr);
  read_optional(j, "disc_lr", c.disc_lr);
  read_optional(j, "poly_power", c.poly_power);
  read_optional(j, "adam_beta1", c.adam.beta1);
  read_optional(j, "adam_beta2", c.adam.beta2);
  read_optional(j, "log_every", c.log_every);
  if (const auto it = j.find("pseudo_label_threshold"); it != j.end()) {
    if (it->is_null()) {
      c.pseudo_label_threshold.reset();
    } else {
      double v = 0.0;
      read_optional(j, "pseudo_label_threshold", v);
      c.pseudo_label_threshold = v;
    }
  }
}

torch::Tensor sample_indices(NetworkState& state, std::int64_t population, int count) {
  if (population <= 0) throw DataError("cannot sample from an empty split");
  std::vector<std::int64_t> idx(static_cast<size_t>(count));
  for (auto& i : idx) i = static_cast<std::int64_t>(state.rng() % static_cast<std::uint64_t>(population));
  return torch::tensor(idx, torch::kLong);
}

void run_training_loop(NetworkState& state, const std::string& phase, const StageConfig& cfg,
                       const std::function<StepLoss(int step)>& compute, const TrainingHooks& hooks) {
  cfg.validate(phase);
  std::vector<ParamGroup> trainable;
  std::vector<ParamGroup> frozen;
  for (const auto g : kAllGroups) (state.is_frozen(g) ? frozen : trainable).push_back(g);
  state.apply_frozen_flags();

  for (int step = 0; step < cfg.steps; ++step) {
    const double decay = std::pow(1.0 - static_cast<double>(step) / cfg.steps, cfg.poly_power);
    const double lr = cfg.lr * decay;
    const double disc_lr = cfg.disc_lr * decay;
    const bool audit = step == 0 || step == cfg.steps - 1 ||
                       (hooks.freeze_audit_every > 0 && step % hooks.freeze_audit_every == 0);
    std::vector<std::uint64_t> before;
    if (audit) {
      for (const auto g : frozen) before.push_back(state.parameter_hash(g));
    }

    for (const auto g : kAllGroups) {
      for (auto& p : state.parameters(g)) p.mutable_grad() = torch::Tensor();
    }
    StepLoss loss = compute(step);
    const double objective = loss.objective.item<double>();
    if (!std::isfinite(objective)) {
      std::ostringstream dump;
      dump << "non-finite loss in " << phase << " at step " << step << ": " << nlohmann::json(loss.breakdown).dump();
      throw NumericalError(dump.str());
    }
    loss.objective.backward();
    for (const auto g : trainable) {
      if (g == ParamGroup::kDiscriminator) continue;
      state.optimizers[static_cast<size_t>(g)].step(state.parameters(g), lr, cfg.adam);
    }
    if (loss.discriminator.defined() && !state.is_frozen(ParamGroup::kDiscriminator)) {
      for (auto& p : state.parameters(ParamGroup::kDiscriminator)) p.mutable_grad() = torch::Tensor();
      loss.discriminator.backward();
      state.optimizers[static_cast<size_t>(ParamGroup::kDiscriminator)].step(state.parameters(ParamGroup::kDiscriminator),
                                                                             disc_lr, cfg.adam);
    }

    if (audit) {
      for (size_t i = 0; i < frozen.size(); ++i) {
        FreezeAuditRecord rec{phase, step, std::string(group_name(frozen[i])), before[i], state.parameter_hash(frozen[i])};
        if (hooks.on_freeze_audit) hooks.on_freeze_audit(rec);
        if (rec.hash_before != rec.hash_after) {
          throw PipelineError("freeze violation: group " + rec.group + " changed during " + phase + " step " +
                              std::to_string(step));
        }
      }
    }

    if (hooks.log && (step % cfg.log_every == 0 || step == cfg.steps - 1)) {
      nlohmann::json rec = {{"phase", phase}, {"step", step}, {"lr", lr}};
      for (const auto& [k, v] : loss.breakdown) rec[k] = v;
      hooks.log(rec);
    }
  }
  for (const auto g : kAllGroups) {
    for (auto& p : state.parameters(g)) p.mutable_grad() = torch::Tensor();
  }
}

}  // namespace cudanet
