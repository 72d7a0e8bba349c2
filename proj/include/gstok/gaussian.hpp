#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace gstok {

using Vec2 = std::array<double, 2>;
using Mat2 = std::array<std::array<double, 2>, 2>;

inline constexpr double kPi = 3.14159265358979323846;

/// Smallest admissible scaling factor, in feature-map pixels.
inline constexpr double kMinScale = 1e-4;

/// Default Mahalanobis radius bounding each Gaussian's coverage region.
inline constexpr double kDefaultCutoff = 3.0;

/// Reduces an unconstrained rotation angle into [0, pi).
double canonical_theta(double theta);

/// Grid point of pixel (row, col): the pixel center.
inline Vec2 pixel_center(std::size_t row, std::size_t col) {
  return {static_cast<double>(col) + 0.5, static_cast<double>(row) + 0.5};
}

/// One featured 2D Gaussian. Positions are continuous feature-map pixel
/// coordinates (x = column axis, y = row axis). Scales are stored in log space
/// and the rotation is unconstrained; both are mapped to their constrained
/// values on use.
struct Gaussian2D {
  Vec2 mu{0.0, 0.0};
  double theta_raw = 0.0;
  Vec2 log_s{0.0, 0.0};
  std::vector<double> zeta;

  /// exp(log_s), clamped below at kMinScale.
  Vec2 scales() const;
  bool is_finite() const;

  bool operator==(const Gaussian2D&) const = default;
};

/// Number of real parameters of one Gaussian with feature dimension D.
inline constexpr std::size_t param_count(std::size_t feature_dim) {
  return 5 + feature_dim;
}

struct GaussianSet {
  std::vector<Gaussian2D> gaussians;
  std::size_t feature_dim = 1;
  std::size_t map_height = 1;
  std::size_t map_width = 1;

  GaussianSet() = default;
  GaussianSet(std::size_t feature_dim, std::size_t height, std::size_t width)
      : feature_dim(feature_dim), map_height(height), map_width(width) {}

  std::size_t size() const { return gaussians.size(); }
  bool empty() const { return gaussians.empty(); }

  /// Throws kShape when a member's zeta length differs from feature_dim and
  /// kInvalidScene when any parameter is non-finite.
  void validate() const;

  /// Flattened parameters, one (mu_x, mu_y, theta_raw, log_s1, log_s2, zeta...)
  /// record per Gaussian.
  std::vector<double> pack() const;
  void unpack(std::span<const double> params);

  bool operator==(const GaussianSet&) const = default;
};

struct Covariance2D {
  Mat2 sigma{};
  Mat2 sigma_inv{};
  double theta = 0.0;  // canonical, in [0, pi)
  Vec2 s{1.0, 1.0};
};

/// Sigma = (R S)(R S)^T with R the rotation by theta and S = diag(s).
/// Scales below kMinScale are clamped up unless clamp_scales is false, in
/// which case they raise kDegenerateCovariance. Non-finite input raises
/// kInvalidParameter.
Covariance2D covariance_from(double theta, Vec2 s, bool clamp_scales = true);

/// Covariance of a Gaussian's current parameters.
Covariance2D covariance_of(const Gaussian2D& g);

/// Squared Mahalanobis distance (p - mu)^T Sigma^-1 (p - mu).
double mahalanobis_sq(const Vec2& mu, const Covariance2D& cov, const Vec2& p);

/// exp(-q/2) inside the cutoff radius, exactly zero outside it.
double gaussian_weight(const Vec2& mu, const Covariance2D& cov, const Vec2& p,
                       double cutoff = kDefaultCutoff);

/// gaussian_weight(...) * zeta.
std::vector<double> contribution(const Gaussian2D& g, const Covariance2D& cov,
                                 const Vec2& p, double cutoff = kDefaultCutoff);

/// Returns a copy of the set expressed on an (height x width) map. Positions
/// keep their normalized coordinates and covariances are stretched with the
/// map, so rendering the result equals sampling the original continuous
/// field on the finer grid.
GaussianSet rescale(const GaussianSet& set, std::size_t height,
                    std::size_t width);

}  // namespace gstok
