#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "cudanet/config.hpp"
#include "cudanet/state.hpp"
#include "cudanet/synth.hpp"

namespace cudanet::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("cudanet-" + tag + "-" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Small dataset and short stages for plumbing tests.
inline ExperimentConfig tiny_config(const std::filesystem::path& out, int steps = 4) {
  ExperimentConfig cfg;
  cfg.output_dir = out.string();
  cfg.dataset.height = 16;
  cfg.dataset.width = 16;
  cfg.dataset.n_s = 6;
  cfg.dataset.n_m = 4;
  cfg.dataset.n_t = 6;
  cfg.content_dim = 8;
  cfg.private_dim = 4;
  for (auto* st : {&cfg.train.source, &cfg.train.s2m, &cfg.train.m2t, &cfg.train.s2t, &cfg.cycle.step}) {
    st->steps = steps;
    st->batch_size = 2;
    st->log_every = 1;
  }
  cfg.cycle.cycles = 1;
  return cfg;
}

// Central finite differences of `loss` w.r.t. the first `count` entries of `param`
// compared with the analytic gradient. Returns the worst relative error, or 1 when
// every checked entry has a zero gradient.
inline double gradient_check(torch::Tensor param, const std::function<torch::Tensor()>& loss, int count,
                             double step = 1e-4) {
  if (param.grad().defined()) param.mutable_grad() = torch::Tensor();
  loss().backward();
  const auto analytic = param.grad().detach().clone().reshape({-1});
  auto flat = param.detach().view({-1});
  double worst = 0.0;
  double largest = 0.0;
  for (int i = 0; i < count && i < flat.numel(); ++i) {
    const double orig = flat[i].item<double>();
    double plus = 0.0;
    double minus = 0.0;
    {
      torch::NoGradGuard ng;
      flat[i] = orig + step;
      plus = loss().item<double>();
      flat[i] = orig - step;
      minus = loss().item<double>();
      flat[i] = orig;
    }
    const double numeric = (plus - minus) / (2.0 * step);
    const double a = analytic[i].item<double>();
    largest = std::max(largest, std::abs(a));
    const double scale = std::max({std::abs(a), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(a - numeric) / scale);
  }
  param.mutable_grad() = torch::Tensor();
  return largest > 0.0 ? worst : 1.0;
}

}  // namespace cudanet::test
