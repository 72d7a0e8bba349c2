#pragma once

#include <cmath>
#include <random>

#include "gstok/fitter.hpp"
#include "gstok/rasterizer.hpp"

namespace gstok::testing {

// Ground-truth scene for the recovery experiment: K Gaussians spread over a
// 32x32 map with moderate anisotropy and colors in [0.15, 0.85].
inline GaussianSet recovery_truth(std::uint64_t seed, std::size_t k = 8,
                                  std::size_t side = 32) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(6.0, static_cast<double>(side) - 6.0);
  std::uniform_real_distribution<double> angle(0.0, kPi);
  std::uniform_real_distribution<double> scale(2.5, 5.0);
  std::uniform_real_distribution<double> color(0.15, 0.85);
  GaussianSet set(3, side, side);
  for (std::size_t i = 0; i < k; ++i) {
    Gaussian2D g;
    g.mu = {pos(rng), pos(rng)};
    g.theta_raw = angle(rng);
    g.log_s = {std::log(scale(rng)), std::log(scale(rng))};
    g.zeta = {color(rng), color(rng), color(rng)};
    set.gaussians.push_back(g);
  }
  return set;
}

// Adds N(0, sigma^2) noise to every raw parameter.
inline GaussianSet perturb(const GaussianSet& set, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  GaussianSet out = set;
  std::vector<double> p = out.pack();
  for (double& v : p) v += noise(rng);
  out.unpack(p);
  return out;
}

struct RecoveryRun {
  FitResult fit;
  double initial_mse = 0.0;
};

inline FitConfig recovery_config() {
  FitConfig cfg;
  cfg.num_gaussians = 8;
  cfg.feature_dim = 3;
  cfg.steps = 1000;
  cfg.base_lr = 1e-2;
  cfg.quantize = false;
  cfg.codebook_size = 1;
  return cfg;
}

inline RecoveryRun run_recovery(std::uint64_t seed, std::size_t threads = 0) {
  const GaussianSet truth = recovery_truth(1000 + seed);
  const FeatureMap target = splat_forward(truth, 32, 32).first;
  const GaussianSet init = perturb(truth, 0.05, 2000 + seed);
  FitConfig cfg = recovery_config();
  cfg.seed = seed;
  cfg.threads = threads;
  RecoveryRun run;
  const FeatureMap start = splat_forward(init, 32, 32).first;
  for (std::size_t i = 0; i < start.size(); ++i) {
    const double d = start.data()[i] - target.data()[i];
    run.initial_mse += d * d;
  }
  run.initial_mse /= static_cast<double>(start.size());
  run.fit = fit_from(target, cfg, init);
  return run;
}

}  // namespace gstok::testing
