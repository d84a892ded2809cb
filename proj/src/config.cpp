#include "cudanet/config.hpp"

#include <cstdlib>
#include <fstream>

#include "cudanet/errors.hpp"
#include "cudanet/json_util.hpp"

namespace cudanet {
namespace {

nlohmann::json weights_json(const LossWeights& w) {
  return {{"rec", w.rec}, {"trans", w.trans}, {"seg", w.seg}, {"segadv", w.segadv}};
}

}  // namespace

void ExperimentConfig::validate() const {
  dataset.validate();
  if (content_dim < 1 || private_dim < 1) throw ConfigError("model.content_dim and model.private_dim must be >= 1");
  train.source.validate("train.source");
  train.s2m.validate("train.s2m");
  train.m2t.validate("train.m2t");
  train.s2t.validate("train.s2t");
  for (const double w : {train.weights.rec, train.weights.trans, train.weights.seg, train.weights.segadv}) {
    if (!(w >= 0.0)) throw ConfigError("loss weights must be >= 0");
  }
  cycle.validate();
}

nlohmann::json to_json(const ExperimentConfig& c) {
  return {{"seed", c.seed},
          {"output_dir", c.output_dir},
          {"data_dir", c.data_dir},
          {"dataset", c.dataset},
          {"model", {{"content_dim", c.content_dim}, {"private_dim", c.private_dim}}},
          {"loss", weights_json(c.train.weights)},
          {"train",
           {{"source_warmup", c.train.source_warmup},
            {"source", c.train.source},
            {"s2m", c.train.s2m},
            {"m2t", c.train.m2t},
            {"s2t", c.train.s2t}}},
          {"cycle", c.cycle}};
}

ExperimentConfig experiment_from_json(const nlohmann::json& input) {
  auto j = to_json(ExperimentConfig{});
  merge_strict(j, input);
  ExperimentConfig c;
  read_optional(j, "seed", c.seed);
  read_optional(j, "output_dir", c.output_dir);
  read_optional(j, "data_dir", c.data_dir);
  c.dataset = j.at("dataset").get<DatasetConfig>();
  read_optional(j.at("model"), "content_dim", c.content_dim);
  read_optional(j.at("model"), "private_dim", c.private_dim);
  const auto& loss = j.at("loss");
  read_optional(loss, "rec", c.train.weights.rec);
  read_optional(loss, "trans", c.train.weights.trans);
  read_optional(loss, "seg", c.train.weights.seg);
  read_optional(loss, "segadv", c.train.weights.segadv);
  const auto& train = j.at("train");
  read_optional(train, "source_warmup", c.train.source_warmup);
  c.train.source = train.at("source").get<StageConfig>();
  c.train.s2m = train.at("s2m").get<StageConfig>();
  c.train.m2t = train.at("m2t").get<StageConfig>();
  c.train.s2t = train.at("s2t").get<StageConfig>();
  c.cycle = j.at("cycle").get<CycleConfig>();
  c.validate();
  return c;
}

void merge_strict(nlohmann::json& base, const nlohmann::json& overlay, const std::string& prefix) {
  if (!overlay.is_object()) throw ConfigError("configuration " + (prefix.empty() ? "root" : prefix) + " must be an object");
  for (const auto& [key, value] : overlay.items()) {
    const auto path = prefix.empty() ? key : prefix + "." + key;
    const auto it = base.find(key);
    if (it == base.end()) throw ConfigError("unknown configuration key '" + path + "'");
    if (it->is_object()) {
      merge_strict(*it, value, path);
    } else {
      *it = value;
    }
  }
}

void apply_override(nlohmann::json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not of the form key=value");
  const auto path = assignment.substr(0, eq);
  const auto text = assignment.substr(eq + 1);
  auto value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  nlohmann::json overlay = value;
  std::string rest = path;
  std::vector<std::string> parts;
  for (size_t pos = 0;;) {
    const auto dot = rest.find('.', pos);
    parts.push_back(rest.substr(pos, dot - pos));
    if (dot == std::string::npos) break;
    pos = dot + 1;
  }
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    if (it->empty()) throw ConfigError("override key '" + path + "' has an empty component");
    overlay = nlohmann::json{{*it, overlay}};
  }
  // Replacing a whole object via --set would bypass key checks.
  nlohmann::json* target = &config;
  for (const auto& p : parts) {
    const auto found = target->find(p);
    if (!target->is_object() || found == target->end()) throw ConfigError("unknown configuration key '" + path + "'");
    target = &*found;
  }
  if (target->is_object() && !value.is_object()) throw ConfigError("configuration key '" + path + "' is a section");
  merge_strict(config, overlay);
}

ExperimentConfig load_experiment_config(const std::optional<std::filesystem::path>& file,
                                        const std::vector<std::string>& overrides) {
  auto j = to_json(ExperimentConfig{});
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("cannot read config file " + file->string());
    nlohmann::json parsed;
    try {
      parsed = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config file " + file->string() + " is not valid JSON: " + e.what());
    }
    merge_strict(j, parsed);
  }
  for (const auto& o : overrides) apply_override(j, o);
  if (const char* env = std::getenv("CUDANET_SEED"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const auto seed = std::strtoull(env, &end, 10);
    if (end == nullptr || *end != '\0') throw ConfigError(std::string("CUDANET_SEED is not an integer: ") + env);
    j["seed"] = seed;
  }
  return experiment_from_json(j);
}

std::string config_hash(const ExperimentConfig& c) {
  auto j = to_json(c);
  j.erase("output_dir");
  j.erase("data_dir");
  return hex64(fnv1a(j.dump()));
}

std::string run_id(const ExperimentConfig& c) { return config_hash(c).substr(0, 12); }

}  // namespace cudanet
