// Command line front end: synth, train, eval, gap-report, defog, plot.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <torch/torch.h>

#include "cudanet/errors.hpp"
#include "cudanet/pipeline.hpp"

namespace fs = std::filesystem;
using namespace cudanet;

namespace {

struct CommonArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "experiment config (JSON)");
  cmd->add_option("--set", args.overrides, "override a config key, e.g. --set cycle.lambda_cum=0");
  cmd->add_option("--out", args.out, "output file or directory");
}

ExperimentConfig load(const CommonArgs& args, std::vector<std::string> extra = {}) {
  auto overrides = args.overrides;
  overrides.insert(overrides.end(), extra.begin(), extra.end());
  return load_experiment_config(args.config.empty() ? std::nullopt : std::optional<fs::path>(args.config), overrides);
}

std::optional<fs::path> out_path(const CommonArgs& args) {
  return args.out.empty() ? std::nullopt : std::optional<fs::path>(args.out);
}

fs::path checkpoint_or_default(const std::string& ckpt, const ExperimentConfig& cfg) {
  return ckpt.empty() ? default_checkpoint(cfg) : fs::path(ckpt);
}

}  // namespace

int main(int argc, char** argv) {
  torch::set_num_threads(1);
  CLI::App app{"cudanet: cumulative style/fog domain adaptation on a synthetic tri-domain dataset"};
  app.require_subcommand(1);

  CommonArgs synth_args;
  auto* synth = app.add_subcommand("synth", "generate the s/m/t dataset");
  add_common(synth, synth_args);

  CommonArgs train_args;
  std::string phase = "all";
  bool resume = false;
  std::optional<double> lambda_cum;
  std::string init_ckpt;
  auto* train = app.add_subcommand("train", "run the decomposition and/or cyclic training");
  add_common(train, train_args);
  train->add_option("--phase", phase, "decomp, cyclic or all")->check(CLI::IsMember({"decomp", "cyclic", "all"}));
  train->add_flag("--resume", resume, "continue from the latest checkpoint in the run directory");
  train->add_option("--lambda-cum", lambda_cum, "weight of the cumulative loss in cyclic training");
  train->add_option("--checkpoint", init_ckpt, "starting checkpoint for --phase cyclic");

  CommonArgs eval_args;
  std::string eval_ckpt;
  std::string split = "t";
  auto* eval = app.add_subcommand("eval", "mIoU of a checkpoint on one split");
  add_common(eval, eval_args);
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint (default: final.ckpt of the run)");
  eval->add_option("--split", split, "s, m or t")->check(CLI::IsMember({"s", "m", "t"}));

  CommonArgs gap_args;
  std::string gap_ckpt;
  auto* gap = app.add_subcommand("gap-report", "MVV per domain and the style/fog/dual gaps");
  add_common(gap, gap_args);
  gap->add_option("--checkpoint", gap_ckpt, "checkpoint (default: final.ckpt of the run)");

  CommonArgs defog_args;
  std::string defog_ckpt;
  auto* defog_cmd = app.add_subcommand("defog", "translate every t image with the mean fog-free m code");
  add_common(defog_cmd, defog_args);
  defog_cmd->add_option("--checkpoint", defog_ckpt, "checkpoint (default: final.ckpt of the run)");

  CommonArgs plot_args;
  auto* plot = app.add_subcommand("plot", "loss curves from the training log");
  add_common(plot, plot_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }

  try {
    if (synth->parsed()) {
      const auto cfg = load(synth_args);
      auto c = cfg;
      if (!synth_args.out.empty()) c.data_dir = synth_args.out;
      const auto manifest = cmd_synth(c);
      std::cout << "wrote " << manifest.entries.size() << " images to " << manifest.root.string() << '\n';
    } else if (train->parsed()) {
      std::vector<std::string> extra;
      if (lambda_cum) extra.push_back("cycle.lambda_cum=" + std::to_string(*lambda_cum));
      auto cfg = load(train_args, extra);
      if (!train_args.out.empty()) cfg.output_dir = train_args.out;
      TrainOptions opts;
      opts.phase = parse_phase(phase);
      opts.resume = resume;
      if (!init_ckpt.empty()) opts.init_checkpoint = fs::path(init_ckpt);
      opts.on_checkpoint = [&](const std::string& tag, NetworkState&) {
        std::cout << "checkpoint " << RunLayout(cfg).checkpoint(tag).string() << std::endl;
      };
      const auto state = cmd_train(cfg, opts);
      std::cout << "finished at stage " << stage_name(state.stage) << '\n';
    } else if (eval->parsed()) {
      const auto cfg = load(eval_args);
      const auto report = cmd_eval(cfg, checkpoint_or_default(eval_ckpt, cfg), parse_domain(split), out_path(eval_args));
      std::cout << "mIoU(" << report.split << ") = " << report.result.mean << " over " << report.pixel_count << " pixels\n";
    } else if (gap->parsed()) {
      const auto cfg = load(gap_args);
      const auto r = cmd_gap_report(cfg, checkpoint_or_default(gap_ckpt, cfg), out_path(gap_args));
      std::cout << "mvv s=" << r.mvv_s << " m=" << r.mvv_m << " t=" << r.mvv_t << "  gaps style=" << r.gap_style()
                << " fog=" << r.gap_fog() << " dual=" << r.gap_dual() << '\n';
    } else if (defog_cmd->parsed()) {
      const auto cfg = load(defog_args);
      const auto written = cmd_defog(cfg, checkpoint_or_default(defog_ckpt, cfg), out_path(defog_args));
      std::cout << "wrote " << written.size() << " defogged images\n";
    } else if (plot->parsed()) {
      const auto cfg = load(plot_args);
      std::cout << "wrote " << cmd_plot(cfg, out_path(plot_args)).string() << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kData);
  }
  return 0;
}
