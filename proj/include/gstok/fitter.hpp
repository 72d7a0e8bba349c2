#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "gstok/codebook.hpp"
#include "gstok/feature_map.hpp"
#include "gstok/gaussian.hpp"
#include "gstok/rasterizer.hpp"

namespace gstok {

struct FitConfig {
  std::size_t num_gaussians = 64;
  std::size_t feature_dim = 3;
  std::size_t codebook_size = 1024;
  /// Map size; 0 adopts the target's size.
  std::size_t map_height = 0;
  std::size_t map_width = 0;
  std::size_t steps = 1000;
  double base_lr = 1e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.9;
  double weight_decay = 0.0;
  /// Defaults to 5% of steps.
  std::optional<std::size_t> warmup_steps;
  /// Weight of the commitment term (encoder-side pull).
  double commit_weight = 0.25;
  /// Weight of the codebook-side pull.
  double vq_weight = 1.0;
  bool quantize = true;
  double cutoff = kDefaultCutoff;
  std::size_t tile_size = 16;
  std::size_t threads = 0;
  std::uint64_t seed = 0;

  /// Throws kInvalidParameter on non-positive counts, negative weights or a
  /// non-positive learning rate.
  void validate() const;
  std::size_t effective_warmup() const;
  RasterConfig raster() const { return {cutoff, tile_size, threads}; }
};

struct FitReport {
  std::vector<double> reconstruction;
  std::vector<double> vq;
  std::vector<double> commit;
  std::vector<double> total;
  std::vector<double> learning_rate;
  double final_mse = 0.0;
  double final_psnr = 0.0;
  double final_ssim = 0.0;  // NaN when the map is smaller than the SSIM window
  double utilization = 0.0;
  double wall_seconds = 0.0;
};

struct FitResult {
  GaussianSet gaussians;
  Codebook codebook;
  /// Final codeword assignment; empty when quantization is disabled.
  std::vector<std::uint32_t> indices;
  FitReport report;
};

/// Loss and gradients of one training step.
struct Objective {
  double reconstruction = 0.0;
  double vq = 0.0;
  double commit = 0.0;
  double total = 0.0;
  FeatureMap render;
  /// Same layout as GaussianSet::pack.
  std::vector<double> gaussian_grad;
  /// N x D; all zero when quantization is disabled.
  std::vector<double> codebook_grad;
  std::vector<std::uint32_t> indices;
};

/// Quantizes zeta (when enabled), splats with the quantized features and the
/// continuous geometry, and returns
///   L = MSE(render, target) + commit_weight * commit + vq_weight * vq
/// with straight-through gradients into zeta.
Objective evaluate_objective(const GaussianSet& set, const Codebook& book,
                             const FeatureMap& target, const FitConfig& cfg,
                             bool count_usage = false);

/// Gaussians on a ceil(sqrt(K))-column grid, each jittered uniformly within
/// its cell, with isotropic scale sqrt(h w / (K pi)), zero rotation and zeta
/// sampled from the target at the nearest pixel.
GaussianSet init_gaussians(const FitConfig& cfg, const FeatureMap& target,
                           std::mt19937_64& rng);

double cosine_warmup_lr(std::size_t step, const FitConfig& cfg);

/// Direct per-image optimization from init_gaussians. Throws kDivergence,
/// naming the step, if the loss or any parameter becomes non-finite.
FitResult fit_image(const FeatureMap& target, const FitConfig& cfg);

/// Same loop from a caller-supplied starting set.
FitResult fit_from(const FeatureMap& target, const FitConfig& cfg,
                   GaussianSet initial);

/// PSNR of the constant image holding the target's per-channel mean.
double mean_color_baseline_psnr(const FeatureMap& target);

}  // namespace gstok
