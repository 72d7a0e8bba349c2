#pragma once

#include "gstok/feature_map.hpp"

namespace gstok {

struct MetricReport {
  double mse = 0.0;
  double psnr = 0.0;  // +infinity when mse == 0
  double ssim = 1.0;
};

/// Mean squared error after clamping both maps to [0, 1].
double mse(const FeatureMap& a, const FeatureMap& b);

/// 10 log10(1 / mse) with unit peak; +infinity for identical inputs.
double psnr(const FeatureMap& a, const FeatureMap& b);

/// Mean SSIM over 11x11 Gaussian windows (sigma 1.5, valid positions only),
/// C1 = 0.01^2, C2 = 0.03^2, unit peak. Channels are scored separately and
/// averaged. Both sides are clamped to [0, 1] first.
double ssim(const FeatureMap& a, const FeatureMap& b);

MetricReport evaluate(const FeatureMap& a, const FeatureMap& b);

}  // namespace gstok
