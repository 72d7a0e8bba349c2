#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>

#include "gstok/feature_map.hpp"
#include "gstok/gaussian.hpp"

namespace gstok {

/// Ranges for randomly generated test scenes.
struct ScenePrior {
  std::size_t min_gaussians = 1;
  std::size_t max_gaussians = 6;
  std::size_t min_side = 8;
  std::size_t max_side = 20;
  std::size_t min_dim = 1;
  std::size_t max_dim = 4;
  double min_scale = 0.7;
  double max_scale = 4.0;
};

/// Random scene with centers on the map, unconstrained rotations in
/// [-2 pi, 2 pi] and features in [-1, 1].
GaussianSet random_scene(std::mt19937_64& rng, const ScenePrior& prior = {});

/// Map of i.i.d. uniform [-1, 1] values.
FeatureMap random_map(std::mt19937_64& rng, std::size_t height,
                      std::size_t width, std::size_t dim);

struct GradCheckOptions {
  std::uint64_t seed = 7;
  std::size_t scenes = 100;
  double step = 1e-5;
  double tolerance = 1e-3;
  /// Denominator floor of the relative error, guarding near-zero gradients.
  double relative_floor = 1e-6;
  double cutoff = kDefaultCutoff;
  std::size_t threads = 1;
  ScenePrior prior;
};

struct GradCheckReport {
  std::size_t scenes = 0;
  std::size_t checked = 0;
  /// Perturbations that moved a pixel across the cutoff boundary.
  std::size_t skipped = 0;
  double max_relative_error = 0.0;
  std::string worst;
  double seconds = 0.0;
  bool passed = false;
};

/// Compares the tiled analytic backward pass against central finite
/// differences of L = sum <G, dense_render> for every parameter of random
/// scenes.
GradCheckReport run_gradcheck(const GradCheckOptions& options);

/// |a - b| / max(|a|, |b|, floor).
double relative_error(double analytic, double numeric, double floor);

}  // namespace gstok
