#include "gstok/feature_map.hpp"

#include <algorithm>
#include <cmath>

namespace gstok {

bool FeatureMap::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

FeatureMap FeatureMap::clamped(double lo, double hi) const {
  FeatureMap out = *this;
  for (double& v : out.data_) v = std::clamp(v, lo, hi);
  return out;
}

}  // namespace gstok
