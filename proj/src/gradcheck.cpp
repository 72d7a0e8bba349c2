#include "gstok/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <vector>

#include "gstok/rasterizer.hpp"

namespace gstok {
namespace {

const char* kParamNames[] = {"mu_x", "mu_y", "theta", "log_s1", "log_s2"};

double inner(const FeatureMap& a, const FeatureMap& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

// Pixel membership mask of one Gaussian's coverage region.
std::vector<bool> coverage_mask(const Gaussian2D& g, std::size_t h,
                                std::size_t w, double cutoff) {
  const Covariance2D cov = covariance_of(g);
  std::vector<bool> mask(h * w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      mask[r * w + c] = mahalanobis_sq(g.mu, cov, pixel_center(r, c)) <= cutoff * cutoff;
    }
  }
  return mask;
}

}  // namespace

GaussianSet random_scene(std::mt19937_64& rng, const ScenePrior& prior) {
  std::uniform_int_distribution<std::size_t> count(prior.min_gaussians,
                                                   prior.max_gaussians);
  std::uniform_int_distribution<std::size_t> side(prior.min_side, prior.max_side);
  std::uniform_int_distribution<std::size_t> dim(prior.min_dim, prior.max_dim);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> angle(-2.0 * kPi, 2.0 * kPi);
  std::uniform_real_distribution<double> log_scale(std::log(prior.min_scale),
                                                   std::log(prior.max_scale));
  std::uniform_real_distribution<double> feature(-1.0, 1.0);

  const std::size_t h = side(rng);
  const std::size_t w = side(rng);
  GaussianSet set(dim(rng), h, w);
  const std::size_t k = count(rng);
  for (std::size_t i = 0; i < k; ++i) {
    Gaussian2D g;
    g.mu = {unit(rng) * static_cast<double>(w), unit(rng) * static_cast<double>(h)};
    g.theta_raw = angle(rng);
    g.log_s = {log_scale(rng), log_scale(rng)};
    g.zeta.resize(set.feature_dim);
    for (double& z : g.zeta) z = feature(rng);
    set.gaussians.push_back(std::move(g));
  }
  return set;
}

FeatureMap random_map(std::mt19937_64& rng, std::size_t height,
                      std::size_t width, std::size_t dim) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  FeatureMap m(height, width, dim);
  for (double& v : m.data()) v = u(rng);
  return m;
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport run_gradcheck(const GradCheckOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  GradCheckReport report;
  std::mt19937_64 rng(options.seed);
  const RasterConfig raster{options.cutoff, 16, options.threads};

  for (std::size_t scene = 0; scene < options.scenes; ++scene) {
    GaussianSet set = random_scene(rng, options.prior);
    const std::size_t h = set.map_height;
    const std::size_t w = set.map_width;
    const FeatureMap upstream = random_map(rng, h, w, set.feature_dim);

    auto [render, aux] = splat_forward(set, h, w, raster);
    const std::vector<double> analytic =
        splat_backward(set, aux, upstream, raster).pack();
    std::vector<double> params = set.pack();
    const std::size_t stride = param_count(set.feature_dim);

    auto loss_at = [&](const std::vector<double>& p) {
      GaussianSet probe = set;
      probe.unpack(p);
      return inner(upstream, splat_dense_reference(probe, h, w, options.cutoff));
    };

    for (std::size_t i = 0; i < params.size(); ++i) {
      const std::size_t k = i / stride;
      const std::size_t slot = i % stride;
      std::vector<double> plus = params;
      std::vector<double> minus = params;
      plus[i] += options.step;
      minus[i] -= options.step;

      if (slot < 5) {
        GaussianSet probe = set;
        const auto base = coverage_mask(set.gaussians[k], h, w, options.cutoff);
        probe.unpack(plus);
        const auto up = coverage_mask(probe.gaussians[k], h, w, options.cutoff);
        probe.unpack(minus);
        const auto down = coverage_mask(probe.gaussians[k], h, w, options.cutoff);
        if (up != base || down != base) {
          ++report.skipped;
          continue;
        }
      }

      const double numeric = (loss_at(plus) - loss_at(minus)) / (2.0 * options.step);
      const double err = relative_error(analytic[i], numeric, options.relative_floor);
      ++report.checked;
      if (err > report.max_relative_error || std::isnan(err)) {
        report.max_relative_error = std::isnan(err) ? INFINITY : err;
        report.worst = "scene " + std::to_string(scene) + " gaussian " +
                       std::to_string(k) + " " +
                       (slot < 5 ? kParamNames[slot]
                                 : "zeta[" + std::to_string(slot - 5) + "]") +
                       ": analytic " + std::to_string(analytic[i]) +
                       " numeric " + std::to_string(numeric);
      }
    }
    ++report.scenes;
  }
  report.seconds = std::chrono::duration<double>(
                       std::chrono::steady_clock::now() - started)
                       .count();
  report.passed = report.checked > 0 &&
                  report.max_relative_error <= options.tolerance;
  return report;
}

}  // namespace gstok
