#include "gstok/gaussian.hpp"

#include <cmath>
#include <string>

#include "gstok/error.hpp"

namespace gstok {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidParameter: return "invalid-parameter";
    case ErrorKind::kDegenerateCovariance: return "degenerate-covariance";
    case ErrorKind::kInvalidScene: return "invalid-scene";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kEmptyStatistics: return "empty-statistics";
    case ErrorKind::kOutOfRange: return "out-of-range";
    case ErrorKind::kDivergence: return "divergence";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kFormat: return "format";
  }
  return "unknown";
}

double canonical_theta(double theta) {
  double t = std::fmod(theta, kPi);
  if (t < 0.0) t += kPi;
  // fmod of a negative input can round up to exactly pi.
  if (t >= kPi) t = 0.0;
  return t;
}

Vec2 Gaussian2D::scales() const {
  return {std::max(std::exp(log_s[0]), kMinScale),
          std::max(std::exp(log_s[1]), kMinScale)};
}

bool Gaussian2D::is_finite() const {
  if (!std::isfinite(mu[0]) || !std::isfinite(mu[1]) ||
      !std::isfinite(theta_raw) || !std::isfinite(log_s[0]) ||
      !std::isfinite(log_s[1])) {
    return false;
  }
  const Vec2 s = scales();
  if (!std::isfinite(s[0]) || !std::isfinite(s[1])) return false;
  for (double z : zeta) {
    if (!std::isfinite(z)) return false;
  }
  return true;
}

void GaussianSet::validate() const {
  if (feature_dim == 0) {
    throw Error(ErrorKind::kShape, "feature dimension must be positive");
  }
  for (std::size_t k = 0; k < gaussians.size(); ++k) {
    const Gaussian2D& g = gaussians[k];
    if (g.zeta.size() != feature_dim) {
      throw Error(ErrorKind::kShape,
                  "gaussian " + std::to_string(k) + " has " +
                      std::to_string(g.zeta.size()) +
                      " feature coefficients, expected " +
                      std::to_string(feature_dim));
    }
    if (!g.is_finite()) {
      throw Error(ErrorKind::kInvalidScene,
                  "gaussian " + std::to_string(k) + " has non-finite parameters");
    }
  }
}

std::vector<double> GaussianSet::pack() const {
  const std::size_t stride = param_count(feature_dim);
  std::vector<double> out(gaussians.size() * stride);
  for (std::size_t k = 0; k < gaussians.size(); ++k) {
    const Gaussian2D& g = gaussians[k];
    double* p = out.data() + k * stride;
    p[0] = g.mu[0];
    p[1] = g.mu[1];
    p[2] = g.theta_raw;
    p[3] = g.log_s[0];
    p[4] = g.log_s[1];
    for (std::size_t c = 0; c < feature_dim; ++c) p[5 + c] = g.zeta[c];
  }
  return out;
}

void GaussianSet::unpack(std::span<const double> params) {
  const std::size_t stride = param_count(feature_dim);
  if (params.size() != gaussians.size() * stride) {
    throw Error(ErrorKind::kShape, "parameter vector length mismatch");
  }
  for (std::size_t k = 0; k < gaussians.size(); ++k) {
    Gaussian2D& g = gaussians[k];
    const double* p = params.data() + k * stride;
    g.mu = {p[0], p[1]};
    g.theta_raw = p[2];
    g.log_s = {p[3], p[4]};
    g.zeta.assign(p + 5, p + stride);
  }
}

Covariance2D covariance_from(double theta, Vec2 s, bool clamp_scales) {
  if (!std::isfinite(theta) || !std::isfinite(s[0]) || !std::isfinite(s[1])) {
    throw Error(ErrorKind::kInvalidParameter,
                "covariance parameters must be finite");
  }
  for (double& si : s) {
    if (si < kMinScale) {
      if (!clamp_scales) {
        throw Error(ErrorKind::kDegenerateCovariance,
                    "scaling factor " + std::to_string(si) +
                        " is below the minimum " + std::to_string(kMinScale));
      }
      si = kMinScale;
    }
  }

  const double c = std::cos(theta);
  const double sn = std::sin(theta);
  const double a = s[0] * s[0];
  const double b = s[1] * s[1];

  Covariance2D cov;
  cov.theta = canonical_theta(theta);
  cov.s = s;
  // (R S)(R S)^T = R diag(s1^2, s2^2) R^T
  cov.sigma[0][0] = c * c * a + sn * sn * b;
  cov.sigma[0][1] = c * sn * (a - b);
  cov.sigma[1][0] = cov.sigma[0][1];
  cov.sigma[1][1] = sn * sn * a + c * c * b;
  // R diag(1/s1^2, 1/s2^2) R^T
  const double ia = 1.0 / a;
  const double ib = 1.0 / b;
  cov.sigma_inv[0][0] = c * c * ia + sn * sn * ib;
  cov.sigma_inv[0][1] = c * sn * (ia - ib);
  cov.sigma_inv[1][0] = cov.sigma_inv[0][1];
  cov.sigma_inv[1][1] = sn * sn * ia + c * c * ib;
  return cov;
}

Covariance2D covariance_of(const Gaussian2D& g) {
  return covariance_from(g.theta_raw, g.scales());
}

double mahalanobis_sq(const Vec2& mu, const Covariance2D& cov, const Vec2& p) {
  const double dx = p[0] - mu[0];
  const double dy = p[1] - mu[1];
  const Mat2& a = cov.sigma_inv;
  return a[0][0] * dx * dx + 2.0 * a[0][1] * dx * dy + a[1][1] * dy * dy;
}

double gaussian_weight(const Vec2& mu, const Covariance2D& cov, const Vec2& p,
                       double cutoff) {
  const double q = mahalanobis_sq(mu, cov, p);
  if (!(q <= cutoff * cutoff)) return 0.0;
  return std::exp(-0.5 * q);
}

std::vector<double> contribution(const Gaussian2D& g, const Covariance2D& cov,
                                 const Vec2& p, double cutoff) {
  const double w = gaussian_weight(g.mu, cov, p, cutoff);
  std::vector<double> out(g.zeta.size());
  for (std::size_t c = 0; c < out.size(); ++c) out[c] = w * g.zeta[c];
  return out;
}

GaussianSet rescale(const GaussianSet& set, std::size_t height,
                    std::size_t width) {
  if (height == 0 || width == 0) {
    throw Error(ErrorKind::kShape, "target map must be non-empty");
  }
  const double ax = static_cast<double>(width) / static_cast<double>(set.map_width);
  const double ay = static_cast<double>(height) / static_cast<double>(set.map_height);

  GaussianSet out(set.feature_dim, height, width);
  out.gaussians.reserve(set.size());
  for (const Gaussian2D& g : set.gaussians) {
    Gaussian2D r = g;
    r.mu = {g.mu[0] * ax, g.mu[1] * ay};
    if (ax == ay) {
      const double shift = std::log(ax);
      r.log_s = {g.log_s[0] + shift, g.log_s[1] + shift};
    } else {
      // Sigma' = A Sigma A with A = diag(ax, ay), then refactor into R S.
      const Covariance2D cov = covariance_of(g);
      const double sxx = cov.sigma[0][0] * ax * ax;
      const double sxy = cov.sigma[0][1] * ax * ay;
      const double syy = cov.sigma[1][1] * ay * ay;
      const double half_diff = 0.5 * (sxx - syy);
      const double radius = std::hypot(half_diff, sxy);
      const double mean = 0.5 * (sxx + syy);
      const double l1 = mean + radius;
      const double l2 = std::max(mean - radius, kMinScale * kMinScale);
      r.theta_raw = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
      r.log_s = {0.5 * std::log(l1), 0.5 * std::log(l2)};
    }
    out.gaussians.push_back(std::move(r));
  }
  return out;
}

}  // namespace gstok
