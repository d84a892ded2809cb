#include "cudanet/pipeline.hpp"

#include <algorithm>
#include <fstream>

#include "cudanet/checkpoint.hpp"
#include "cudanet/cumulative.hpp"
#include "cudanet/data.hpp"
#include "cudanet/decomposition.hpp"
#include "cudanet/errors.hpp"
#include "cudanet/plot.hpp"

namespace fs = std::filesystem;

namespace cudanet {
namespace {

constexpr std::uint64_t kExtractorSalt = 0x70657263;

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) throw DataError("cannot write " + path.string());
}

std::vector<std::string> checkpoint_order(const ExperimentConfig& cfg) {
  std::vector<std::string> tags{"stage_source", "stage_s2m", "stage_m2t", "stage_s2t"};
  for (int c = 1; c <= cfg.cycle.cycles; ++c) {
    for (const auto* k : {"style", "fog", "dual"}) tags.push_back("cycle_" + std::to_string(c) + "_" + k);
  }
  tags.emplace_back("final");
  return tags;
}

// Keeps the first `n` records of the log, creating it when absent.
void truncate_log(const fs::path& path, std::int64_t n) {
  std::vector<std::string> keep;
  if (n > 0) {
    std::ifstream in(path);
    std::string line;
    while (static_cast<std::int64_t>(keep.size()) < n && std::getline(in, line)) keep.push_back(line);
  }
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : keep) out << l << '\n';
}

void remove_checkpoints(const RunLayout& layout, const std::vector<std::string>& tags) {
  for (const auto& t : tags) fs::remove(layout.checkpoint(t));
}

}  // namespace

RunLayout::RunLayout(const ExperimentConfig& cfg)
    : root(cfg.output_dir), data(cfg.data_dir.empty() ? fs::path(cfg.output_dir) / "data" : fs::path(cfg.data_dir)) {}

nlohmann::json provenance(const ExperimentConfig& cfg) {
  return {{"config", to_json(cfg)}, {"config_hash", config_hash(cfg)}, {"run_id", run_id(cfg)}};
}

void write_effective_config(const ExperimentConfig& cfg) { write_json(RunLayout(cfg).root / "config.json", to_json(cfg)); }

DatasetManifest cmd_synth(const ExperimentConfig& cfg) {
  const RunLayout layout(cfg);
  write_effective_config(cfg);
  auto echo = provenance(cfg);
  echo["dataset"] = cfg.dataset;
  return build_tridomain_dataset(cfg.dataset, layout.data, echo);
}

TrainPhase parse_phase(const std::string& name) {
  if (name == "decomp") return TrainPhase::kDecomp;
  if (name == "cyclic") return TrainPhase::kCyclic;
  if (name == "all") return TrainPhase::kAll;
  throw ConfigError("unknown phase '" + name + "' (expected decomp, cyclic or all)");
}

NetworkState cmd_train(const ExperimentConfig& cfg, const TrainOptions& opts) {
  const RunLayout layout(cfg);
  write_effective_config(cfg);
  const auto manifest = load_manifest(layout.data);
  const auto data = load_training_data(manifest);
  const auto extractor = PerceptualExtractor::random(cfg.seed ^ kExtractorSalt);
  const auto order = checkpoint_order(cfg);
  const auto first_cycle_tag = std::find(order.begin(), order.end(), "cycle_1_style");

  std::optional<NetworkState> start;
  std::int64_t log_records = 0;
  auto load_from = [&](const fs::path& path) {
    auto loaded = load_checkpoint(path, cfg.dims());
    log_records = loaded.config.value("log_records", std::int64_t{0});
    start.emplace(std::move(loaded.state));
  };

  if (opts.resume) {
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      if (fs::exists(layout.checkpoint(*it))) {
        load_from(layout.checkpoint(*it));
        break;
      }
    }
  }
  if (!start && opts.phase == TrainPhase::kCyclic) {
    const auto init = opts.init_checkpoint.value_or(layout.checkpoint("stage_s2t"));
    if (!fs::exists(init)) {
      throw PrerequisiteError("cyclic training needs the decomposition checkpoint " + init.string() +
                              " (run `train --phase decomp` first)");
    }
    load_from(init);
    if (opts.init_checkpoint && fs::absolute(init).parent_path() != fs::absolute(layout.checkpoints())) log_records = 0;
    remove_checkpoints(layout, std::vector<std::string>(first_cycle_tag, order.end()));
  }
  if (!start) {
    remove_checkpoints(layout, order);
    start.emplace(cfg.dims(), cfg.seed);
  }
  truncate_log(layout.log(), log_records);

  std::ofstream log(layout.log(), std::ios::app);
  const auto hash = config_hash(cfg);
  TrainingHooks hooks;
  hooks.log = [&](const nlohmann::json& rec) {
    auto line = rec;
    line["config_hash"] = hash;
    log << line.dump() << '\n';
    log.flush();
    ++log_records;
  };
  hooks.on_freeze_audit = opts.on_freeze_audit;
  hooks.on_checkpoint = [&](const std::string& tag, NetworkState& state) {
    auto echo = provenance(cfg);
    echo["log_records"] = log_records;
    save_checkpoint(layout.checkpoint(tag), state, echo);
    if (opts.on_checkpoint) opts.on_checkpoint(tag, state);
    if (opts.stop_after && *opts.stop_after == tag) throw TrainingInterrupted{tag};
  };

  const TrainingContext ctx{data, extractor, cfg.train.weights, hooks};
  auto state = std::move(*start);
  if (opts.phase != TrainPhase::kCyclic && state.stage != Stage::kCyclic) {
    state = run_decomposition(std::move(state), ctx, cfg.train);
  }
  if (opts.phase != TrainPhase::kDecomp) state = run_cyclic_training(std::move(state), ctx, cfg.cycle);
  return state;
}

std::vector<nlohmann::json> read_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw PrerequisiteError("training log not found: " + path.string());
  std::vector<nlohmann::json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed training log line " + std::to_string(out.size() + 1) + ": " + e.what());
    }
  }
  return out;
}

fs::path default_checkpoint(const ExperimentConfig& cfg) { return RunLayout(cfg).checkpoint("final"); }

NetworkState load_state(const ExperimentConfig& cfg, const fs::path& checkpoint) {
  return load_checkpoint(checkpoint, cfg.dims()).state;
}

nlohmann::json eval_report_json(const EvalReport& report, const ExperimentConfig& cfg, const std::string& checkpoint) {
  auto j = to_json(report);
  j.update(provenance(cfg));
  j["checkpoint"] = checkpoint;
  return j;
}

EvalReport cmd_eval(const ExperimentConfig& cfg, const fs::path& checkpoint, Domain split,
                    const std::optional<fs::path>& out) {
  auto state = load_state(cfg, checkpoint);
  const auto manifest = load_manifest(RunLayout(cfg).data);
  const auto report = evaluate(state, manifest, split);
  write_json(out.value_or(RunLayout(cfg).root / "eval_report.json"), eval_report_json(report, cfg, checkpoint.string()));
  return report;
}

nlohmann::json gap_report_json(const GapReport& report, const ExperimentConfig& cfg) {
  nlohmann::json j = report;
  j.update(provenance(cfg));
  return j;
}

GapReport cmd_gap_report(const ExperimentConfig& cfg, const fs::path& checkpoint, const std::optional<fs::path>& out) {
  auto state = load_state(cfg, checkpoint);
  const auto manifest = load_manifest(RunLayout(cfg).data);
  const auto report = gap_report(state, manifest, checkpoint.stem().string());
  const auto path = out.value_or(RunLayout(cfg).root / "gap_report.json");
  write_json(path, gap_report_json(report, cfg));
  auto png = path;
  png.replace_extension(".png");
  write_gap_plot({report}, png);
  return report;
}

torch::Tensor defog(NetworkState& state, const torch::Tensor& m_images, const torch::Tensor& t_images) {
  torch::NoGradGuard no_grad;
  const auto dt = state.dtype();
  const auto code = encode_private(state, m_images.to(dt), PrivateEncoderId::kFogM).mean(0, true);
  const auto content = encode_content(state, t_images.to(dt));
  return decode(state, content, code.expand({t_images.size(0), code.size(1)}));
}

std::vector<fs::path> cmd_defog(const ExperimentConfig& cfg, const fs::path& checkpoint, const std::optional<fs::path>& out) {
  auto state = load_state(cfg, checkpoint);
  const auto manifest = load_manifest(RunLayout(cfg).data);
  const auto m = load_split(manifest, Domain::kIntermediate, LabelAccess::kTraining);
  const auto t = load_split(manifest, Domain::kTarget, LabelAccess::kTraining);
  const auto dir = out.value_or(RunLayout(cfg).root / "defog");
  fs::create_directories(dir);
  const auto clear = defog(state, m.images, t.images);
  const auto entries = manifest.split(Domain::kTarget);
  std::vector<fs::path> written;
  for (int64_t i = 0; i < clear.size(0); ++i) {
    const auto path = dir / fs::path(entries[static_cast<size_t>(i)]->image).filename();
    write_png(path, tensor_to_image(clear[i]));
    written.push_back(path);
  }
  write_json(dir / "defog.json", provenance(cfg));
  return written;
}

fs::path cmd_plot(const ExperimentConfig& cfg, const std::optional<fs::path>& out) {
  const auto records = read_log(RunLayout(cfg).log());
  const auto path = out.value_or(RunLayout(cfg).root / "loss_curves.png");
  write_loss_plot(records, {"total", "rec", "trans", "seg", "segadv", "cum"}, path);
  write_json(fs::path(path).replace_extension(".json"), provenance(cfg));
  return path;
}

}  // namespace cudanet
