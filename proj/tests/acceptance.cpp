// Acceptance run: prints one PASS/FAIL line per criterion.
//
//   cudanet_acceptance [--config FILE] [--work DIR] [--report FILE] [--strict]
//
// Criteria 4-8 share one training run of the fixture config. --strict makes any
// FAIL line turn into a nonzero exit status.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <torch/torch.h>

#include "cudanet/checkpoint.hpp"
#include "cudanet/cumulative.hpp"
#include "cudanet/data.hpp"
#include "cudanet/decomposition.hpp"
#include "cudanet/errors.hpp"
#include "cudanet/eval.hpp"
#include "cudanet/losses.hpp"
#include "cudanet/pipeline.hpp"
#include "cudanet/plot.hpp"
#include "cudanet/uncertainty.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace cudanet;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;
std::ofstream report_file;

void report(int id, const std::string& name, const Verdict& v) {
  if (!v.pass) ++failures;
  std::ostringstream line;
  line << "criterion " << id << " " << (v.pass ? "PASS" : "FAIL") << "  " << name << ": " << v.detail;
  std::cout << line.str() << std::endl;
  report_file << line.str() << std::endl;
}

template <class F>
void run_criterion(int id, const std::string& name, F&& fn) {
  try {
    report(id, name, fn());
  } catch (const std::exception& e) {
    report(id, name, {false, std::string("error: ") + e.what()});
  }
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(precision);
  s << v;
  return s.str();
}

std::string sci(double v) {
  std::ostringstream s;
  s.setf(std::ios::scientific);
  s.precision(2);
  s << v;
  return s.str();
}

int run_cli(const std::string& args, const fs::path& capture) {
  const auto cmd = std::string(CUDANET_CLI_PATH) + " " + args + " > " + capture.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// 1: mIoU against a brute-force intersection/union oracle.
Verdict metric_oracle() {
  std::mt19937_64 rng(20240501);
  int exact = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto gt = oracle::random_label_map(rng, 8, 8, 5, 0.05);
    const auto pred = oracle::random_label_map(rng, 8, 8, 5);
    ConfusionMatrix cm(5);
    cm.accumulate(pred, gt);
    if (miou(cm).mean == oracle::brute_force_miou({pred}, {gt}, 5)) ++exact;
  }
  ConfusionMatrix fixture(2);
  fixture.at(0, 0) = 3;
  fixture.at(0, 1) = 1;
  fixture.at(1, 0) = 2;
  fixture.at(1, 1) = 4;
  const double m = miou(fixture).mean;
  return {exact == 100 && std::abs(m - 0.5357) <= 1e-4,
          std::to_string(exact) + "/100 random pairs exact; fixture mIoU " + fmt(m, 6) + " (target 0.5357 +- 1e-4)"};
}

// 2: closed-form loss values.
Verdict loss_analytics() {
  const auto uniform = torch::full({1, 5, 8, 8}, 0.2, torch::kFloat64);
  const auto labels = torch::randint(0, 5, {1, 8, 8}, torch::TensorOptions().dtype(torch::kLong));
  const double ce = segmentation_loss(uniform, labels).item<double>();
  const double ce_err = std::abs(ce - std::log(5.0));
  const double zero = cumulative_residual(0.3, 0.5, 0.8);
  const double r = 0.3 + 0.5 - 0.6;
  const double hand = r * r;
  const double four = cumulative_residual(0.3, 0.5, 0.6);
  // Same residual through the tensor path with scalar "distances".
  auto as_code = [](double d) { return CodePair{torch::full({1, 1}, d, torch::kFloat64), torch::zeros({1, 1}, torch::kFloat64)}; };
  const double tensor_four =
      cumulative_loss(as_code(0.3), as_code(0.5), as_code(0.6), DistanceMetric::kL1).item<double>();
  const bool pass = ce_err <= 1e-6 && zero == 0.0 && four == hand && tensor_four == hand && std::abs(four - 0.04) <= 1e-15;
  return {pass, "CE(uniform) - ln 5 = " + fmt(ce_err, 9) + "; residual(0.3,0.5,0.8) = " + fmt(zero, 17) +
                    "; residual(0.3,0.5,0.6) = " + fmt(four, 17) + " (double arithmetic of (0.3+0.5-0.6)^2)"};
}

// 3: finite-difference gradient checks in float64.
Verdict gradient_checks() {
  const auto t0 = Clock::now();
  NetworkState state({5, 8, 4}, 17);
  state.to(torch::kFloat64);
  const auto ex = PerceptualExtractor::random(9, torch::kFloat64);
  auto gen = at::make_generator<at::CPUGeneratorImpl>(5);
  const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  const FdnBatch batch{torch::rand({2, 3, 16, 16}, gen, opts),
                       torch::randint(0, 5, {2, 16, 16}, gen, torch::TensorOptions().dtype(torch::kLong)),
                       torch::rand({2, 3, 16, 16}, gen, opts), encoders_for(Stage::kStyle)};
  auto component = [&](torch::Tensor FdnLoss::*field) {
    return [&, field] { return fdn_loss(batch, {}, ex, state).*field; };
  };
  std::map<std::string, double> worst;
  auto check = [&](const std::string& name, torch::Tensor param, const std::function<torch::Tensor()>& loss) {
    worst[name] = std::max(worst[name], test::gradient_check(param, loss, 6));
  };
  auto p = [&](ParamGroup g, size_t i) { return state.parameters(g).at(i); };
  check("L_rec", p(ParamGroup::kDecoder, 0), component(&FdnLoss::rec));
  check("L_rec", p(ParamGroup::kStyS, 0), component(&FdnLoss::rec));
  check("L_trans", p(ParamGroup::kDecoder, 0), component(&FdnLoss::trans));
  check("L_trans", p(ParamGroup::kContentEncoder, 0), component(&FdnLoss::trans));
  check("L_seg", p(ParamGroup::kSegHead, 0), component(&FdnLoss::seg));
  check("L_seg", p(ParamGroup::kContentEncoder, 0), component(&FdnLoss::seg));
  check("L_segadv", p(ParamGroup::kSegHead, 0), component(&FdnLoss::segadv));
  check("L_segadv", p(ParamGroup::kContentEncoder, 0), component(&FdnLoss::segadv));

  state.stage = Stage::kDual;
  state.private_trained.fill(true);
  const TripletBatch triplet{batch.x1, batch.y1, batch.x2, batch.y1, torch::rand({2, 3, 16, 16}, gen, opts)};
  auto cum = [&] { return final_loss(CycleStep::kStyle, triplet, state, {}, ex, 0.25, DistanceMetric::kL2).cumulative; };
  check("L_cum", p(ParamGroup::kStyS, 0), cum);
  check("L_cum", p(ParamGroup::kFogT, 0), cum);
  const double elapsed = seconds_since(t0);

  bool pass = elapsed < 60.0;
  std::string detail;
  for (const auto& [name, err] : worst) {
    pass = pass && err < 1e-3;
    detail += name + " " + sci(err) + "; ";
  }
  return {pass, "worst relative error " + detail + "runtime " + fmt(elapsed, 1) + " s (limits 1e-3, 60 s)"};
}

struct FixtureRun {
  ExperimentConfig cfg;
  ExperimentConfig cfg_lambda0;
  std::vector<FreezeAuditRecord> audits;
  std::map<std::string, double> stage_seconds;  // checkpoint tag -> seconds since the previous one
  double train_seconds = 0.0;
  double lambda0_seconds = 0.0;
  std::string error;
};

FixtureRun run_fixture(const ExperimentConfig& base, const fs::path& work) {
  FixtureRun run;
  run.cfg = base;
  run.cfg.output_dir = (work / "run_a").string();
  run.cfg.data_dir = (work / "data").string();
  std::cout << "synthesizing the fixture dataset" << std::endl;
  (void)cmd_synth(run.cfg);

  std::cout << "training run A (phase all, lambda_cum " << run.cfg.cycle.lambda_cum << ")" << std::endl;
  TrainOptions opts;
  auto last = Clock::now();
  const auto t0 = last;
  opts.on_checkpoint = [&](const std::string& tag, NetworkState&) {
    run.stage_seconds[tag] = seconds_since(last);
    last = Clock::now();
    std::cout << "  " << tag << " after " << fmt(seconds_since(t0), 0) << " s" << std::endl;
  };
  opts.on_freeze_audit = [&](const FreezeAuditRecord& r) {
    if (r.phase.starts_with("cycle")) run.audits.push_back(r);
  };
  (void)cmd_train(run.cfg, opts);
  run.train_seconds = seconds_since(t0);

  std::cout << "training the lambda_cum = 0 cyclic arm from stage_s2t" << std::endl;
  run.cfg_lambda0 = run.cfg;
  run.cfg_lambda0.output_dir = (work / "run_lambda0").string();
  run.cfg_lambda0.cycle.lambda_cum = 0.0;
  TrainOptions cyclic;
  cyclic.phase = TrainPhase::kCyclic;
  cyclic.init_checkpoint = RunLayout(run.cfg).checkpoint("stage_s2t");
  const auto t1 = Clock::now();
  (void)cmd_train(run.cfg_lambda0, cyclic);
  run.lambda0_seconds = seconds_since(t1);
  return run;
}

// 4: frozen private pairs never change inside a cyclic step.
Verdict freeze_contract(const FixtureRun& run) {
  const int steps = run.cfg.cycle.step.steps;
  std::set<int> expected_steps{0, steps - 1};
  for (int s = 0; s < steps; s += 50) expected_steps.insert(s);
  std::map<std::string, std::map<int, std::set<std::string>>> seen;
  int changed = 0;
  for (const auto& r : run.audits) {
    seen[r.phase][r.step].insert(r.group);
    if (r.hash_before != r.hash_after) ++changed;
  }
  const std::map<std::string, std::set<std::string>> frozen{{"style", {"fog_m", "fog_t", "dual_s", "dual_t"}},
                                                            {"fog", {"sty_s", "sty_m", "dual_s", "dual_t"}},
                                                            {"dual", {"sty_s", "sty_m", "fog_m", "fog_t"}}};
  bool coverage = static_cast<int>(seen.size()) == 3 * run.cfg.cycle.cycles;
  for (const auto& [phase, by_step] : seen) {
    const auto kind = phase.substr(phase.find('/') + 1);
    std::set<int> steps_seen;
    for (const auto& [step, groups] : by_step) {
      steps_seen.insert(step);
      coverage = coverage && groups == frozen.at(kind);
    }
    coverage = coverage && steps_seen == expected_steps;
  }
  return {coverage && changed == 0 && !run.audits.empty(),
          std::to_string(run.audits.size()) + " hash comparisons over " + std::to_string(seen.size()) +
              " cyclic phases (steps 0, every 50, last); " + std::to_string(changed) + " changed"};
}

double eval_t(const ExperimentConfig& cfg, const std::string& tag) {
  auto state = load_state(cfg, RunLayout(cfg).checkpoint(tag));
  return evaluate(state, load_manifest(RunLayout(cfg).data), Domain::kTarget).result.mean;
}

// 5: ablation ordering on the toy target.
Verdict ablation(const FixtureRun& run) {
  const std::vector<std::pair<std::string, double>> chain{
      {"source-only", eval_t(run.cfg, "stage_source")},
      {"s->m", eval_t(run.cfg, "stage_s2m")},
      {"+m->t", eval_t(run.cfg, "stage_m2t")},
      {"+s->t", eval_t(run.cfg, "stage_s2t")},
      {"+cyclic(l=0)", eval_t(run.cfg_lambda0, "final")},
      {"+cyclic(l=0.25)", eval_t(run.cfg, "final")},
  };
  bool pass = chain[0].second < chain[1].second;
  for (size_t i = 2; i < chain.size(); ++i) pass = pass && chain[i - 1].second <= chain[i].second;
  const double gain = 100.0 * (chain.back().second - chain.front().second);
  const double minutes = (run.train_seconds + run.lambda0_seconds) / 60.0;
  pass = pass && gain >= 10.0;
  std::string detail = "t mIoU";
  for (size_t i = 0; i < chain.size(); ++i) {
    detail += (i == 0 ? " " : i == 1 ? " < " : " <= ") + chain[i].first + " " + fmt(chain[i].second);
  }
  detail += "; gain " + fmt(gain, 1) + " points (need >= 10); training " + fmt(minutes, 1) + " min on " +
            std::to_string(torch::get_num_threads()) + " thread(s)";
  return {pass, detail};
}

// 6: gap report of Model(s) before and after the s->m stage.
Verdict motivation(const FixtureRun& run) {
  const auto t0 = Clock::now();
  const auto manifest = load_manifest(RunLayout(run.cfg).data);
  auto model_s = load_state(run.cfg, RunLayout(run.cfg).checkpoint("stage_source"));
  const auto before = gap_report(model_s, manifest, "Model(s)");
  auto adapted = load_state(run.cfg, RunLayout(run.cfg).checkpoint("stage_s2m"));
  const auto after = gap_report(adapted, manifest, "Model(s->m)");
  write_gap_plot({before, after}, RunLayout(run.cfg).root / "motivation_gaps.png");
  const double seconds = run.stage_seconds.at("stage_source") + run.stage_seconds.at("stage_s2m") + seconds_since(t0);

  const bool telescoping =
      before.gap_style() + before.gap_fog() == before.gap_dual() && after.gap_style() + after.gap_fog() == after.gap_dual();
  const double style_drop = before.gap_style() - after.gap_style();
  const double fog_change = std::abs(after.gap_fog() - before.gap_fog());
  const bool pass = telescoping && style_drop > 0.0 && style_drop > 2.0 * fog_change && seconds < 600.0;
  return {pass, "style gap " + fmt(before.gap_style(), 5) + " -> " + fmt(after.gap_style(), 5) + ", fog gap " +
                    fmt(before.gap_fog(), 5) + " -> " + fmt(after.gap_fog(), 5) + "; reduction " + fmt(style_drop, 5) +
                    " vs 2x|fog change| " + fmt(2.0 * fog_change, 5) + "; telescoping " +
                    (telescoping ? "exact" : "broken") + "; runtime " + fmt(seconds, 0) + " s"};
}

// 7: defogging held-out target scenes.
Verdict defog_utility(const FixtureRun& run) {
  const auto& ds = run.cfg.dataset;
  std::uint64_t first = 0;
  for (const auto d : kAllDomains) first = std::max(first, ds.seed_begin(d) + static_cast<std::uint64_t>(ds.count(d)));
  first += 100000;
  std::vector<Image> foggy;
  std::vector<Image> clear;
  for (std::uint64_t seed = first; seed < first + 20; ++seed) {
    foggy.push_back(quantized(render_domain_scene(ds, Domain::kTarget, seed).image));
    clear.push_back(quantized(render_clear_target_scene(ds, seed).image));
  }
  auto state = load_state(run.cfg, default_checkpoint(run.cfg));
  const auto manifest = load_manifest(RunLayout(run.cfg).data);
  const auto m = load_split(manifest, Domain::kIntermediate, LabelAccess::kTraining);
  const auto out = defog(state, m.images, images_to_tensor(foggy));
  int wins = 0;
  double gain = 0.0;
  for (size_t i = 0; i < foggy.size(); ++i) {
    const auto restored = quantized(tensor_to_image(out[static_cast<int64_t>(i)]));
    const double p_out = psnr(restored, clear[i]);
    const double p_in = psnr(foggy[i], clear[i]);
    wins += p_out > p_in ? 1 : 0;
    gain += (p_out - p_in) / static_cast<double>(foggy.size());
    if (i < 4) write_png(RunLayout(run.cfg).root / ("heldout_defog_" + std::to_string(i) + ".png"), restored);
  }
  return {wins >= 16, std::to_string(wins) + "/20 held-out t images improve PSNR (need >= 16); mean PSNR change " +
                          fmt(gain, 2) + " dB"};
}

// 8: a second `train --phase all` through the command line tool.
Verdict determinism(const FixtureRun& run, const fs::path& work) {
  auto cfg_b = run.cfg;
  cfg_b.output_dir = (work / "run_b").string();
  const auto cfg_file = work / "fixture_effective.json";
  {
    std::ofstream out(cfg_file);
    out << to_json(cfg_b).dump(2) << '\n';
  }
  std::cout << "training run B through the command line tool" << std::endl;
  const auto capture = work / "run_b.out";
  const int train_code = run_cli("train --phase all --config " + cfg_file.string(), capture);
  const int eval_code = run_cli("eval --split t --config " + cfg_file.string(), work / "run_b_eval.out");
  if (train_code != 0 || eval_code != 0) {
    return {false, "command line run exited with " + std::to_string(train_code) + "/" + std::to_string(eval_code)};
  }
  const bool same_log = test::read_bytes(RunLayout(run.cfg).log()) == test::read_bytes(RunLayout(cfg_b).log());
  std::ifstream in(RunLayout(cfg_b).root / "eval_report.json");
  const double miou_b = nlohmann::json::parse(in).at("miou").get<double>();
  const double miou_a = eval_t(run.cfg, "final");
  const auto lines = read_log(RunLayout(run.cfg).log()).size();
  return {same_log && miou_a == miou_b, std::string("loss logs ") + (same_log ? "identical" : "differ") + " (" +
                                            std::to_string(lines) + " records); final t mIoU " + fmt(miou_a, 6) +
                                            " vs " + fmt(miou_b, 6)};
}

// 9: threshold semantics against a per-pixel loop.
Verdict pseudo_label_oracle() {
  int exact = 0;
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> thr(0.2, 0.95);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto heat = oracle::random_heatmap(seed, 1, 5, 16, 16);
    const std::optional<double> t = seed % 5 == 0 ? std::nullopt : std::optional<double>(thr(rng));
    if (torch::equal(pseudo_labels_from_heatmap(heat, t), oracle::pseudo_label_loop(heat, t))) ++exact;
  }
  return {exact == 50, std::to_string(exact) + "/50 random heatmaps match exactly"};
}

}  // namespace

int main(int argc, char** argv) {
  torch::set_num_threads(1);
  CLI::App app{"acceptance criteria 1-9"};
  std::string config = CUDANET_FIXTURE_CONFIG;
  std::string work = "acceptance_run";
  std::string report_path = "acceptance_report.txt";
  bool strict = false;
  app.add_option("--config", config, "fixture experiment config");
  app.add_option("--work", work, "scratch directory (recreated)");
  app.add_option("--report", report_path, "file receiving the PASS/FAIL lines");
  app.add_flag("--strict", strict, "exit nonzero when any criterion fails");
  CLI11_PARSE(app, argc, argv);
  report_file.open(report_path);

  run_criterion(1, "metric oracle", metric_oracle);
  run_criterion(2, "loss analytics", loss_analytics);
  run_criterion(3, "gradient checks", gradient_checks);
  run_criterion(9, "pseudo-label oracle", pseudo_label_oracle);

  const fs::path work_dir = fs::absolute(work);
  fs::remove_all(work_dir);
  fs::create_directories(work_dir);
  FixtureRun run;
  try {
    run = run_fixture(load_experiment_config(fs::path(config)), work_dir);
  } catch (const std::exception& e) {
    run.error = e.what();
  }
  const Verdict no_run{false, "fixture training failed: " + run.error};
  auto needs_run = [&](int id, const std::string& name, auto fn) {
    if (!run.error.empty()) {
      report(id, name, no_run);
    } else {
      run_criterion(id, name, fn);
    }
  };
  needs_run(4, "freeze contract", [&] { return freeze_contract(run); });
  needs_run(5, "ablation ordering", [&] { return ablation(run); });
  needs_run(6, "motivation reproduction", [&] { return motivation(run); });
  needs_run(7, "defog utility", [&] { return defog_utility(run); });
  needs_run(8, "determinism", [&] { return determinism(run, work_dir); });

  std::cout << "acceptance summary: " << 9 - failures << "/9 PASS" << std::endl;
  report_file << "acceptance summary: " << 9 - failures << "/9 PASS" << std::endl;
  return strict && failures > 0 ? 1 : 0;
}
