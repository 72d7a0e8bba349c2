#include "gstok/metrics.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "gstok/error.hpp"

namespace gstok {
namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void check_shapes(const FeatureMap& a, const FeatureMap& b) {
  if (!a.same_shape(b)) {
    throw Error(ErrorKind::kShape, "metric operands differ in shape");
  }
  if (a.size() == 0) throw Error(ErrorKind::kShape, "metric operands are empty");
}

std::array<double, kWindow> gaussian_kernel() {
  std::array<double, kWindow> k{};
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double x = i - kWindow / 2;
    k[i] = std::exp(-(x * x) / (2.0 * kSigma * kSigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable valid-mode filtering of one plane.
std::vector<double> filter_valid(const std::vector<double>& plane,
                                 std::size_t h, std::size_t w,
                                 const std::array<double, kWindow>& k) {
  const std::size_t ow = w - kWindow + 1;
  const std::size_t oh = h - kWindow + 1;
  std::vector<double> tmp(h * ow);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < ow; ++c) {
      double acc = 0.0;
      for (int i = 0; i < kWindow; ++i) acc += k[i] * plane[r * w + c + i];
      tmp[r * ow + c] = acc;
    }
  }
  std::vector<double> out(oh * ow);
  for (std::size_t r = 0; r < oh; ++r) {
    for (std::size_t c = 0; c < ow; ++c) {
      double acc = 0.0;
      for (int i = 0; i < kWindow; ++i) acc += k[i] * tmp[(r + i) * ow + c];
      out[r * ow + c] = acc;
    }
  }
  return out;
}

}  // namespace

double mse(const FeatureMap& a, const FeatureMap& b) {
  check_shapes(a, b);
  const FeatureMap ca = a.clamped();
  const FeatureMap cb = b.clamped();
  double sum = 0.0;
  for (std::size_t i = 0; i < ca.size(); ++i) {
    const double d = ca.data()[i] - cb.data()[i];
    sum += d * d;
  }
  return sum / static_cast<double>(ca.size());
}

double psnr(const FeatureMap& a, const FeatureMap& b) {
  const double m = mse(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / m);
}

double ssim(const FeatureMap& a, const FeatureMap& b) {
  check_shapes(a, b);
  const std::size_t h = a.height();
  const std::size_t w = a.width();
  if (h < kWindow || w < kWindow) {
    throw Error(ErrorKind::kShape, "SSIM needs at least 11x11 pixels, got " +
                                       std::to_string(h) + "x" + std::to_string(w));
  }
  const FeatureMap ca = a.clamped();
  const FeatureMap cb = b.clamped();
  const auto k = gaussian_kernel();

  double total = 0.0;
  for (std::size_t ch = 0; ch < a.dim(); ++ch) {
    std::vector<double> x(h * w), y(h * w), xx(h * w), yy(h * w), xy(h * w);
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        const double xv = ca.at(r, c, ch);
        const double yv = cb.at(r, c, ch);
        const std::size_t i = r * w + c;
        x[i] = xv;
        y[i] = yv;
        xx[i] = xv * xv;
        yy[i] = yv * yv;
        xy[i] = xv * yv;
      }
    }
    const auto mx = filter_valid(x, h, w, k);
    const auto my = filter_valid(y, h, w, k);
    const auto mxx = filter_valid(xx, h, w, k);
    const auto myy = filter_valid(yy, h, w, k);
    const auto mxy = filter_valid(xy, h, w, k);

    double plane_sum = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = mxx[i] - mx[i] * mx[i];
      const double vy = myy[i] - my[i] * my[i];
      const double cxy = mxy[i] - mx[i] * my[i];
      const double num = (2.0 * mx[i] * my[i] + kC1) * (2.0 * cxy + kC2);
      const double den =
          (mx[i] * mx[i] + my[i] * my[i] + kC1) * (vx + vy + kC2);
      plane_sum += num / den;
    }
    total += plane_sum / static_cast<double>(mx.size());
  }
  return total / static_cast<double>(a.dim());
}

MetricReport evaluate(const FeatureMap& a, const FeatureMap& b) {
  MetricReport r;
  r.mse = mse(a, b);
  r.psnr = r.mse == 0.0 ? std::numeric_limits<double>::infinity()
                        : 10.0 * std::log10(1.0 / r.mse);
  r.ssim = ssim(a, b);
  return r;
}

}  // namespace gstok
