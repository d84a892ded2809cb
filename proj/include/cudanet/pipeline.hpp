#pragma once

// Experiment commands behind the command line tool. Every artifact written here
// carries the effective config, its hash and the run id.
//
// Output layout under ExperimentConfig::output_dir:
//   data/                 dataset (unless data_dir is set)
//   config.json           effective configuration
//   train_log.jsonl       one record per logged training step
//   checkpoints/*.ckpt    stage_*, cycle_*_*, final
//   eval_report.json, gap_report.json, gap_report.png, defog/*.png, loss_curves.png

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "cudanet/config.hpp"
#include "cudanet/eval.hpp"
#include "cudanet/state.hpp"
#include "cudanet/training.hpp"
#include "cudanet/uncertainty.hpp"

namespace cudanet {

struct RunLayout {
  std::filesystem::path root;
  std::filesystem::path data;

  explicit RunLayout(const ExperimentConfig& cfg);
  [[nodiscard]] std::filesystem::path checkpoints() const { return root / "checkpoints"; }
  [[nodiscard]] std::filesystem::path checkpoint(const std::string& tag) const { return checkpoints() / (tag + ".ckpt"); }
  [[nodiscard]] std::filesystem::path log() const { return root / "train_log.jsonl"; }
};

// {config, config_hash, run_id} attached to artifacts.
nlohmann::json provenance(const ExperimentConfig& cfg);
void write_effective_config(const ExperimentConfig& cfg);

DatasetManifest cmd_synth(const ExperimentConfig& cfg);

enum class TrainPhase { kDecomp, kCyclic, kAll };
TrainPhase parse_phase(const std::string& name);  // decomp, cyclic, all

struct TrainOptions {
  TrainPhase phase = TrainPhase::kAll;
  bool resume = false;  // continue from the latest checkpoint in the run directory
  // Starting point for the cyclic phase; defaults to checkpoints/stage_s2t.ckpt.
  std::optional<std::filesystem::path> init_checkpoint;
  std::function<void(const std::string& tag, NetworkState&)> on_checkpoint;
  std::function<void(const FreezeAuditRecord&)> on_freeze_audit;
  // Stop right after the checkpoint with this tag has been written (simulated interruption).
  std::optional<std::string> stop_after;
};

// Thrown by cmd_train when TrainOptions::stop_after fires.
struct TrainingInterrupted {
  std::string tag;
};

NetworkState cmd_train(const ExperimentConfig& cfg, const TrainOptions& opts);

std::vector<nlohmann::json> read_log(const std::filesystem::path& path);

std::filesystem::path default_checkpoint(const ExperimentConfig& cfg);
NetworkState load_state(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint);

nlohmann::json eval_report_json(const EvalReport& report, const ExperimentConfig& cfg, const std::string& checkpoint);
EvalReport cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint, Domain split,
                    const std::optional<std::filesystem::path>& out = std::nullopt);

nlohmann::json gap_report_json(const GapReport& report, const ExperimentConfig& cfg);
GapReport cmd_gap_report(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                         const std::optional<std::filesystem::path>& out = std::nullopt);

// decode(content of x_t, mean fog code of the m images).
torch::Tensor defog(NetworkState& state, const torch::Tensor& m_images, const torch::Tensor& t_images);
std::vector<std::filesystem::path> cmd_defog(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                                             const std::optional<std::filesystem::path>& out = std::nullopt);

std::filesystem::path cmd_plot(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& out = std::nullopt);

}  // namespace cudanet
