#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace gstok {

/// Dense H x W x D grid of real features, stored row-major with the channel
/// index fastest.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(std::size_t height, std::size_t width, std::size_t dim,
             double fill = 0.0)
      : height_(height), width_(width), dim_(dim),
        data_(height * width * dim, fill) {}

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t dim() const { return dim_; }
  std::size_t pixel_count() const { return height_ * width_; }
  std::size_t size() const { return data_.size(); }

  double& at(std::size_t row, std::size_t col, std::size_t c) {
    return data_[(row * width_ + col) * dim_ + c];
  }
  double at(std::size_t row, std::size_t col, std::size_t c) const {
    return data_[(row * width_ + col) * dim_ + c];
  }

  std::span<double> pixel(std::size_t row, std::size_t col) {
    return {data_.data() + (row * width_ + col) * dim_, dim_};
  }
  std::span<const double> pixel(std::size_t row, std::size_t col) const {
    return {data_.data() + (row * width_ + col) * dim_, dim_};
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const FeatureMap& other) const {
    return height_ == other.height_ && width_ == other.width_ &&
           dim_ == other.dim_;
  }
  bool all_finite() const;

  /// Copy with every value clamped to [lo, hi].
  FeatureMap clamped(double lo = 0.0, double hi = 1.0) const;

  bool operator==(const FeatureMap&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

}  // namespace gstok
