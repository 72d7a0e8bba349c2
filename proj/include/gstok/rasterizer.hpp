#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "gstok/feature_map.hpp"
#include "gstok/gaussian.hpp"

namespace gstok {

struct RasterConfig {
  double cutoff = kDefaultCutoff;
  std::size_t tile_size = 16;
  /// Worker threads; 0 selects the hardware concurrency. The GSQ_THREADS
  /// environment variable caps the result either way.
  std::size_t threads = 0;
};

std::size_t resolve_thread_count(std::size_t requested);

/// Inclusive pixel rectangle. Empty when row_end < row_begin.
struct PixelRect {
  std::int64_t row_begin = 0;
  std::int64_t row_end = -1;
  std::int64_t col_begin = 0;
  std::int64_t col_end = -1;

  bool empty() const { return row_end < row_begin || col_end < col_begin; }
};

/// Conservative pixel bounds of the cutoff ellipse, clipped to the map.
PixelRect coverage_bounds(const Vec2& mu, const Covariance2D& cov,
                          double cutoff, std::size_t height, std::size_t width);

/// Forward-pass cache consumed by splat_backward. Per-pixel weights are not
/// stored; the backward pass recomputes them from the cached inverse
/// covariances.
struct SplatAux {
  struct CachedGaussian {
    Covariance2D cov;
    double cos_t = 1.0;
    double sin_t = 0.0;
    double inv_s1_sq = 1.0;
    double inv_s2_sq = 1.0;
    bool s1_clamped = false;
    bool s2_clamped = false;
    PixelRect bounds;
  };

  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t feature_dim = 0;
  std::size_t tile_size = 16;
  std::size_t tiles_x = 0;
  std::size_t tiles_y = 0;
  double cutoff = kDefaultCutoff;
  std::vector<CachedGaussian> gaussians;
  /// Row-major over tiles; each list holds ascending Gaussian indices.
  std::vector<std::vector<std::uint32_t>> tile_lists;

  std::size_t tile_count() const { return tiles_x * tiles_y; }
  PixelRect tile_rect(std::size_t tile) const;
};

/// Gradients of a scalar loss with respect to every Gaussian parameter.
struct GradientBundle {
  std::size_t feature_dim = 0;
  std::vector<Vec2> d_mu;
  std::vector<double> d_theta;
  std::vector<Vec2> d_log_s;
  std::vector<double> d_zeta;  // K x D, row-major

  GradientBundle() = default;
  GradientBundle(std::size_t count, std::size_t feature_dim)
      : feature_dim(feature_dim), d_mu(count, Vec2{0.0, 0.0}),
        d_theta(count, 0.0), d_log_s(count, Vec2{0.0, 0.0}),
        d_zeta(count * feature_dim, 0.0) {}

  std::size_t size() const { return d_theta.size(); }
  bool all_finite() const;

  /// Same layout as GaussianSet::pack.
  std::vector<double> pack() const;

  bool operator==(const GradientBundle&) const = default;
};

/// Tiled rendering of sum_k pi_k(p) zeta_k at every pixel center. Within a
/// pixel, contributions are accumulated in ascending Gaussian index, so the
/// output does not depend on the thread count.
std::pair<FeatureMap, SplatAux> splat_forward(const GaussianSet& set,
                                              std::size_t height,
                                              std::size_t width,
                                              const RasterConfig& config = {});

/// Brute-force (pixel, Gaussian) loop with the same cutoff rule. Intended as
/// an oracle for small scenes.
FeatureMap splat_dense_reference(const GaussianSet& set, std::size_t height,
                                 std::size_t width,
                                 double cutoff = kDefaultCutoff);

/// Analytic gradients of L = sum_p <grad_out(p), render(p)>. The cutoff
/// indicator is treated as constant.
GradientBundle splat_backward(const GaussianSet& set, const SplatAux& aux,
                              const FeatureMap& grad_out,
                              const RasterConfig& config = {});

}  // namespace gstok
