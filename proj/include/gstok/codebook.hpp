#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace gstok {

class Optimizer;

/// N x D table of embedding vectors plus per-entry usage counters. Lookups
/// are safe to run concurrently (counters are bumped atomically); mutation of
/// the entries requires exclusive access.
class Codebook {
 public:
  Codebook() = default;
  /// Throws kShape unless size >= 1 and dim >= 1.
  Codebook(std::size_t size, std::size_t dim);
  /// entries is row-major N x D; throws kShape or kInvalidParameter.
  Codebook(std::vector<double> entries, std::size_t dim);

  std::size_t size() const { return usage_.size(); }
  std::size_t dim() const { return dim_; }

  std::span<const double> entry(std::size_t j) const {
    return {entries_.data() + j * dim_, dim_};
  }
  std::span<double> entry(std::size_t j) {
    return {entries_.data() + j * dim_, dim_};
  }
  const std::vector<double>& entries() const { return entries_; }
  std::vector<double>& entries() { return entries_; }

  /// Argmin_j ||query - e_j||_2 with ties broken by the lowest index. Does
  /// not touch the usage counters.
  std::size_t find_nearest(std::span<const double> query) const;

  /// find_nearest plus one usage count for the winner.
  std::size_t nearest(std::span<const double> query) const;

  const std::vector<std::uint64_t>& usage_counts() const { return usage_; }
  std::uint64_t total_queries() const;
  void reset_usage();
  void set_usage(std::vector<std::uint64_t> counts);

  /// Replaces all entries with rows drawn uniformly (with replacement) from
  /// the K x D sample matrix.
  template <typename Rng>
  void init_from_samples(std::span<const double> samples, Rng& rng);

 private:
  std::size_t dim_ = 0;
  std::vector<double> entries_;
  mutable std::vector<std::uint64_t> usage_;
};

struct QuantizationResult {
  std::vector<std::uint32_t> indices;
  std::vector<double> quantized;  // K x D
  double vq_loss = 0.0;
  double commit_loss = 0.0;
};

/// Nearest-codeword lookup for every row of the K x D matrix zetas. Both
/// losses are the mean squared distance to the assigned codeword; they differ
/// only in which side the gradient reaches. Each row counts as one usage
/// query unless count_usage is false.
QuantizationResult quantize_set(const Codebook& book,
                                std::span<const double> zetas,
                                bool count_usage = true);

struct StraightThrough {
  std::vector<double> forward_value;
  std::vector<double> zeta_grad;
};

/// Forward value is the codeword; the upstream gradient passes to zeta
/// unchanged.
StraightThrough straight_through(std::span<const double> zeta,
                                 std::span<const double> codeword,
                                 std::span<const double> upstream_grad);

/// d commit_loss / d zetas = 2 (zeta_k - e_idx) / K, K x D.
std::vector<double> commit_loss_gradient(std::span<const double> zetas,
                                         const QuantizationResult& result);

/// d vq_loss / d entries: 2 (e_idx - zeta_k) / K summed over the rows
/// assigned to each entry; unused entries get zero.
std::vector<double> vq_loss_gradient(const Codebook& book,
                                     std::span<const double> zetas,
                                     const QuantizationResult& result);

struct UsageStats {
  std::vector<double> frequencies;  // descending
  double utilization = 0.0;
  double top20_cumulative = 0.0;
};

/// Throws kEmptyStatistics when no queries have been recorded.
UsageStats usage_histogram(const Codebook& book);

/// Applies one optimizer step to the entries using an N x D gradient.
void update_codebook(Codebook& book, std::span<const double> grads,
                     Optimizer& optimizer, double lr);

template <typename Rng>
void Codebook::init_from_samples(std::span<const double> samples, Rng& rng) {
  if (dim_ == 0 || samples.empty()) return;
  const std::size_t rows = samples.size() / dim_;
  std::uniform_int_distribution<std::size_t> pick(0, rows - 1);
  for (std::size_t j = 0; j < size(); ++j) {
    const std::size_t r = pick(rng);
    std::copy_n(samples.begin() + static_cast<std::ptrdiff_t>(r * dim_), dim_,
                entries_.begin() + static_cast<std::ptrdiff_t>(j * dim_));
  }
}

}  // namespace gstok
