#include "gstok/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>
#include <thread>

#include "gstok/error.hpp"
#include "parallel.hpp"

namespace gstok {
namespace {

void check_inputs(const GaussianSet& set, std::size_t height, std::size_t width,
                  double cutoff) {
  if (height == 0 || width == 0) {
    throw Error(ErrorKind::kShape, "render target must be at least 1x1");
  }
  if (!(cutoff > 0.0) || !std::isfinite(cutoff)) {
    throw Error(ErrorKind::kInvalidParameter, "cutoff radius must be positive");
  }
  set.validate();
}

// Clamps a real pixel index into [lo, hi] before conversion.
std::int64_t clamp_index(double v, std::int64_t lo, std::int64_t hi) {
  if (!(v >= static_cast<double>(lo))) return lo;
  if (v >= static_cast<double>(hi)) return hi;
  return static_cast<std::int64_t>(v);
}

PixelRect intersect(const PixelRect& a, const PixelRect& b) {
  return {std::max(a.row_begin, b.row_begin), std::min(a.row_end, b.row_end),
          std::max(a.col_begin, b.col_begin), std::min(a.col_end, b.col_end)};
}

}  // namespace

std::size_t resolve_thread_count(std::size_t requested) {
  std::size_t n = requested;
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("GSQ_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && cap > 0) n = std::min(n, static_cast<std::size_t>(cap));
  }
  return n;
}

PixelRect coverage_bounds(const Vec2& mu, const Covariance2D& cov,
                          double cutoff, std::size_t height, std::size_t width) {
  const double rx = cutoff * std::sqrt(cov.sigma[0][0]);
  const double ry = cutoff * std::sqrt(cov.sigma[1][1]);
  // Slack keeps the box conservative under rounding; the exact membership
  // test happens per pixel.
  const double ex = 1e-7 * (1.0 + rx);
  const double ey = 1e-7 * (1.0 + ry);
  const double col_lo = std::ceil(mu[0] - rx - ex - 0.5);
  const double col_hi = std::floor(mu[0] + rx + ex - 0.5);
  const double row_lo = std::ceil(mu[1] - ry - ey - 0.5);
  const double row_hi = std::floor(mu[1] + ry + ey - 0.5);

  const auto w = static_cast<std::int64_t>(width);
  const auto h = static_cast<std::int64_t>(height);
  if (col_hi < 0.0 || row_hi < 0.0 || col_lo > static_cast<double>(w - 1) ||
      row_lo > static_cast<double>(h - 1)) {
    return {};
  }
  return {clamp_index(row_lo, 0, h - 1), clamp_index(row_hi, 0, h - 1),
          clamp_index(col_lo, 0, w - 1), clamp_index(col_hi, 0, w - 1)};
}

PixelRect SplatAux::tile_rect(std::size_t tile) const {
  const auto ty = static_cast<std::int64_t>(tile / tiles_x);
  const auto tx = static_cast<std::int64_t>(tile % tiles_x);
  const auto ts = static_cast<std::int64_t>(tile_size);
  return {ty * ts, std::min((ty + 1) * ts, static_cast<std::int64_t>(height)) - 1,
          tx * ts, std::min((tx + 1) * ts, static_cast<std::int64_t>(width)) - 1};
}

bool GradientBundle::all_finite() const {
  auto finite = [](double v) { return std::isfinite(v); };
  for (std::size_t k = 0; k < size(); ++k) {
    if (!finite(d_mu[k][0]) || !finite(d_mu[k][1]) || !finite(d_theta[k]) ||
        !finite(d_log_s[k][0]) || !finite(d_log_s[k][1])) {
      return false;
    }
  }
  return std::all_of(d_zeta.begin(), d_zeta.end(), finite);
}

std::vector<double> GradientBundle::pack() const {
  const std::size_t stride = param_count(feature_dim);
  std::vector<double> out(size() * stride);
  for (std::size_t k = 0; k < size(); ++k) {
    double* p = out.data() + k * stride;
    p[0] = d_mu[k][0];
    p[1] = d_mu[k][1];
    p[2] = d_theta[k];
    p[3] = d_log_s[k][0];
    p[4] = d_log_s[k][1];
    for (std::size_t c = 0; c < feature_dim; ++c) {
      p[5 + c] = d_zeta[k * feature_dim + c];
    }
  }
  return out;
}

std::pair<FeatureMap, SplatAux> splat_forward(const GaussianSet& set,
                                              std::size_t height,
                                              std::size_t width,
                                              const RasterConfig& config) {
  check_inputs(set, height, width, config.cutoff);
  if (config.tile_size == 0) {
    throw Error(ErrorKind::kInvalidParameter, "tile size must be positive");
  }
  const std::size_t dim = set.feature_dim;

  SplatAux aux;
  aux.height = height;
  aux.width = width;
  aux.feature_dim = dim;
  aux.tile_size = config.tile_size;
  aux.tiles_x = (width + config.tile_size - 1) / config.tile_size;
  aux.tiles_y = (height + config.tile_size - 1) / config.tile_size;
  aux.cutoff = config.cutoff;
  aux.tile_lists.resize(aux.tile_count());
  aux.gaussians.reserve(set.size());

  // Binning walks Gaussians in index order, so each tile list is ascending.
  for (std::size_t k = 0; k < set.size(); ++k) {
    const Gaussian2D& g = set.gaussians[k];
    SplatAux::CachedGaussian cg;
    const Vec2 s = g.scales();
    cg.cov = covariance_from(g.theta_raw, s);
    cg.cos_t = std::cos(g.theta_raw);
    cg.sin_t = std::sin(g.theta_raw);
    cg.inv_s1_sq = 1.0 / (s[0] * s[0]);
    cg.inv_s2_sq = 1.0 / (s[1] * s[1]);
    cg.s1_clamped = std::exp(g.log_s[0]) < kMinScale;
    cg.s2_clamped = std::exp(g.log_s[1]) < kMinScale;
    cg.bounds = coverage_bounds(g.mu, cg.cov, config.cutoff, height, width);
    if (!cg.bounds.empty()) {
      const auto ts = static_cast<std::int64_t>(config.tile_size);
      for (std::int64_t ty = cg.bounds.row_begin / ts;
           ty <= cg.bounds.row_end / ts; ++ty) {
        for (std::int64_t tx = cg.bounds.col_begin / ts;
             tx <= cg.bounds.col_end / ts; ++tx) {
          aux.tile_lists[static_cast<std::size_t>(ty) * aux.tiles_x +
                         static_cast<std::size_t>(tx)]
              .push_back(static_cast<std::uint32_t>(k));
        }
      }
    }
    aux.gaussians.push_back(cg);
  }

  FeatureMap out(height, width, dim);
  const double cutoff_sq = config.cutoff * config.cutoff;
  detail::parallel_for(
      aux.tile_count(), resolve_thread_count(config.threads),
      [&](std::size_t tile) {
        const PixelRect tr = aux.tile_rect(tile);
        for (std::uint32_t k : aux.tile_lists[tile]) {
          const SplatAux::CachedGaussian& cg = aux.gaussians[k];
          const Gaussian2D& g = set.gaussians[k];
          const PixelRect r = intersect(tr, cg.bounds);
          for (std::int64_t row = r.row_begin; row <= r.row_end; ++row) {
            for (std::int64_t col = r.col_begin; col <= r.col_end; ++col) {
              const Vec2 p = pixel_center(static_cast<std::size_t>(row),
                                          static_cast<std::size_t>(col));
              const double q = mahalanobis_sq(g.mu, cg.cov, p);
              if (!(q <= cutoff_sq)) continue;
              const double w = std::exp(-0.5 * q);
              double* px = out.pixel(static_cast<std::size_t>(row),
                                     static_cast<std::size_t>(col))
                               .data();
              for (std::size_t c = 0; c < dim; ++c) px[c] += w * g.zeta[c];
            }
          }
        }
      });
  return {std::move(out), std::move(aux)};
}

FeatureMap splat_dense_reference(const GaussianSet& set, std::size_t height,
                                 std::size_t width, double cutoff) {
  check_inputs(set, height, width, cutoff);
  std::vector<Covariance2D> covs;
  covs.reserve(set.size());
  for (const Gaussian2D& g : set.gaussians) covs.push_back(covariance_of(g));

  FeatureMap out(height, width, set.feature_dim);
  for (std::size_t row = 0; row < height; ++row) {
    for (std::size_t col = 0; col < width; ++col) {
      const Vec2 p = pixel_center(row, col);
      for (std::size_t k = 0; k < set.size(); ++k) {
        const Gaussian2D& g = set.gaussians[k];
        const double w = gaussian_weight(g.mu, covs[k], p, cutoff);
        if (w == 0.0) continue;
        for (std::size_t c = 0; c < set.feature_dim; ++c) {
          out.at(row, col, c) += w * g.zeta[c];
        }
      }
    }
  }
  return out;
}

GradientBundle splat_backward(const GaussianSet& set, const SplatAux& aux,
                              const FeatureMap& grad_out,
                              const RasterConfig& config) {
  if (grad_out.height() != aux.height || grad_out.width() != aux.width ||
      grad_out.dim() != aux.feature_dim) {
    throw Error(ErrorKind::kShape,
                "upstream gradient shape does not match the forward output");
  }
  if (set.size() != aux.gaussians.size() || set.feature_dim != aux.feature_dim) {
    throw Error(ErrorKind::kShape, "gaussian set does not match the splat cache");
  }
  const std::size_t dim = set.feature_dim;
  const std::size_t stride = param_count(dim);
  const double cutoff_sq = aux.cutoff * aux.cutoff;

  // partials[tile] holds one parameter record per entry of the tile's list.
  std::vector<std::vector<double>> partials(aux.tile_count());
  detail::parallel_for(
      aux.tile_count(), resolve_thread_count(config.threads),
      [&](std::size_t tile) {
        const auto& list = aux.tile_lists[tile];
        std::vector<double>& part = partials[tile];
        part.assign(list.size() * stride, 0.0);
        const PixelRect tr = aux.tile_rect(tile);
        for (std::size_t slot = 0; slot < list.size(); ++slot) {
          const std::uint32_t k = list[slot];
          const SplatAux::CachedGaussian& cg = aux.gaussians[k];
          const Gaussian2D& g = set.gaussians[k];
          const PixelRect r = intersect(tr, cg.bounds);
          const double c = cg.cos_t;
          const double s = cg.sin_t;
          const double i1 = cg.inv_s1_sq;
          const double i2 = cg.inv_s2_sq;
          double* acc = part.data() + slot * stride;
          for (std::int64_t row = r.row_begin; row <= r.row_end; ++row) {
            for (std::int64_t col = r.col_begin; col <= r.col_end; ++col) {
              const Vec2 p = pixel_center(static_cast<std::size_t>(row),
                                          static_cast<std::size_t>(col));
              const double q = mahalanobis_sq(g.mu, cg.cov, p);
              if (!(q <= cutoff_sq)) continue;
              const double w = std::exp(-0.5 * q);
              const double* up = grad_out
                                     .pixel(static_cast<std::size_t>(row),
                                            static_cast<std::size_t>(col))
                                     .data();
              double dot = 0.0;
              for (std::size_t ch = 0; ch < dim; ++ch) {
                dot += up[ch] * g.zeta[ch];
                acc[5 + ch] += up[ch] * w;
              }
              // dL/dq, then q = u1^2 i1 + u2^2 i2 with u = R^T (p - mu).
              const double gq = -0.5 * dot * w;
              if (gq == 0.0) continue;
              const double dx = p[0] - g.mu[0];
              const double dy = p[1] - g.mu[1];
              const double u1 = c * dx + s * dy;
              const double u2 = -s * dx + c * dy;
              const double a1 = u1 * i1;
              const double a2 = u2 * i2;
              acc[0] += gq * -2.0 * (c * a1 - s * a2);
              acc[1] += gq * -2.0 * (s * a1 + c * a2);
              acc[2] += gq * 2.0 * u1 * u2 * (i1 - i2);
              acc[3] += gq * -2.0 * u1 * a1;
              acc[4] += gq * -2.0 * u2 * a2;
            }
          }
        }
      });

  GradientBundle out(set.size(), dim);
  for (std::size_t tile = 0; tile < aux.tile_count(); ++tile) {
    const auto& list = aux.tile_lists[tile];
    const std::vector<double>& part = partials[tile];
    for (std::size_t slot = 0; slot < list.size(); ++slot) {
      const std::uint32_t k = list[slot];
      const double* acc = part.data() + slot * stride;
      out.d_mu[k][0] += acc[0];
      out.d_mu[k][1] += acc[1];
      out.d_theta[k] += acc[2];
      out.d_log_s[k][0] += acc[3];
      out.d_log_s[k][1] += acc[4];
      for (std::size_t ch = 0; ch < dim; ++ch) {
        out.d_zeta[k * dim + ch] += acc[5 + ch];
      }
    }
  }
  // Scales pinned at the clamp floor do not respond to log_s.
  for (std::size_t k = 0; k < set.size(); ++k) {
    if (aux.gaussians[k].s1_clamped) out.d_log_s[k][0] = 0.0;
    if (aux.gaussians[k].s2_clamped) out.d_log_s[k][1] = 0.0;
  }
  return out;
}

}  // namespace gstok
