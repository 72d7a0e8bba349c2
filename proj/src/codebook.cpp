#include "gstok/codebook.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>

#include "gstok/error.hpp"
#include "gstok/optim.hpp"

namespace gstok {
namespace {

void check_rows(std::span<const double> values, std::size_t dim,
                const char* what) {
  if (values.size() % dim != 0) {
    throw Error(ErrorKind::kShape, std::string(what) + " length " +
                                       std::to_string(values.size()) +
                                       " is not a multiple of dimension " +
                                       std::to_string(dim));
  }
}

}  // namespace

Codebook::Codebook(std::size_t size, std::size_t dim)
    : dim_(dim), entries_(size * dim, 0.0), usage_(size, 0) {
  if (size == 0 || dim == 0) {
    throw Error(ErrorKind::kShape, "codebook needs at least one entry and dimension");
  }
}

Codebook::Codebook(std::vector<double> entries, std::size_t dim)
    : dim_(dim), entries_(std::move(entries)) {
  if (dim_ == 0 || entries_.empty() || entries_.size() % dim_ != 0) {
    throw Error(ErrorKind::kShape, "codebook entries must form an N x D matrix, N >= 1");
  }
  if (!std::all_of(entries_.begin(), entries_.end(),
                   [](double v) { return std::isfinite(v); })) {
    throw Error(ErrorKind::kInvalidParameter, "codebook entries must be finite");
  }
  usage_.assign(entries_.size() / dim_, 0);
}

std::size_t Codebook::find_nearest(std::span<const double> query) const {
  if (query.size() != dim_) {
    throw Error(ErrorKind::kShape, "query has dimension " +
                                       std::to_string(query.size()) +
                                       ", codebook has " + std::to_string(dim_));
  }
  std::size_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < size(); ++j) {
    const double* e = entries_.data() + j * dim_;
    double d = 0.0;
    for (std::size_t c = 0; c < dim_; ++c) {
      const double diff = query[c] - e[c];
      d += diff * diff;
    }
    // Strict comparison keeps the lowest index on ties.
    if (d < best_dist) {
      best_dist = d;
      best = j;
    }
  }
  return best;
}

std::size_t Codebook::nearest(std::span<const double> query) const {
  const std::size_t j = find_nearest(query);
  std::atomic_ref<std::uint64_t>(usage_[j]).fetch_add(1, std::memory_order_relaxed);
  return j;
}

std::uint64_t Codebook::total_queries() const {
  return std::accumulate(usage_.begin(), usage_.end(), std::uint64_t{0});
}

void Codebook::reset_usage() { std::fill(usage_.begin(), usage_.end(), 0); }

void Codebook::set_usage(std::vector<std::uint64_t> counts) {
  if (counts.size() != size()) {
    throw Error(ErrorKind::kShape, "usage vector length must equal codebook size");
  }
  usage_ = std::move(counts);
}

QuantizationResult quantize_set(const Codebook& book,
                                std::span<const double> zetas,
                                bool count_usage) {
  const std::size_t dim = book.dim();
  check_rows(zetas, dim, "feature matrix");
  const std::size_t rows = zetas.size() / dim;

  QuantizationResult out;
  out.indices.resize(rows);
  out.quantized.resize(zetas.size());
  double sum_sq = 0.0;
  for (std::size_t k = 0; k < rows; ++k) {
    const auto query = zetas.subspan(k * dim, dim);
    const std::size_t j =
        count_usage ? book.nearest(query) : book.find_nearest(query);
    out.indices[k] = static_cast<std::uint32_t>(j);
    const auto e = book.entry(j);
    for (std::size_t c = 0; c < dim; ++c) {
      out.quantized[k * dim + c] = e[c];
      const double diff = query[c] - e[c];
      sum_sq += diff * diff;
    }
  }
  const double mean = rows == 0 ? 0.0 : sum_sq / static_cast<double>(rows);
  out.vq_loss = mean;
  out.commit_loss = mean;
  return out;
}

StraightThrough straight_through(std::span<const double> zeta,
                                 std::span<const double> codeword,
                                 std::span<const double> upstream_grad) {
  if (zeta.size() != codeword.size() || zeta.size() != upstream_grad.size()) {
    throw Error(ErrorKind::kShape, "straight-through operands differ in length");
  }
  return {std::vector<double>(codeword.begin(), codeword.end()),
          std::vector<double>(upstream_grad.begin(), upstream_grad.end())};
}

std::vector<double> commit_loss_gradient(std::span<const double> zetas,
                                         const QuantizationResult& result) {
  if (zetas.size() != result.quantized.size()) {
    throw Error(ErrorKind::kShape, "quantization result does not match features");
  }
  std::vector<double> grad(zetas.size(), 0.0);
  const std::size_t rows = result.indices.size();
  if (rows == 0) return grad;
  const double scale = 2.0 / static_cast<double>(rows);
  for (std::size_t i = 0; i < zetas.size(); ++i) {
    grad[i] = scale * (zetas[i] - result.quantized[i]);
  }
  return grad;
}

std::vector<double> vq_loss_gradient(const Codebook& book,
                                     std::span<const double> zetas,
                                     const QuantizationResult& result) {
  const std::size_t dim = book.dim();
  if (zetas.size() != result.quantized.size() ||
      result.indices.size() * dim != zetas.size()) {
    throw Error(ErrorKind::kShape, "quantization result does not match features");
  }
  std::vector<double> grad(book.entries().size(), 0.0);
  const std::size_t rows = result.indices.size();
  if (rows == 0) return grad;
  const double scale = 2.0 / static_cast<double>(rows);
  for (std::size_t k = 0; k < rows; ++k) {
    const std::size_t j = result.indices[k];
    const auto e = book.entry(j);
    for (std::size_t c = 0; c < dim; ++c) {
      grad[j * dim + c] += scale * (e[c] - zetas[k * dim + c]);
    }
  }
  return grad;
}

UsageStats usage_histogram(const Codebook& book) {
  const std::uint64_t total = book.total_queries();
  if (total == 0) {
    throw Error(ErrorKind::kEmptyStatistics, "no quantization queries recorded");
  }
  const auto& counts = book.usage_counts();
  std::vector<std::uint64_t> sorted = counts;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());

  UsageStats stats;
  stats.frequencies.reserve(sorted.size());
  std::size_t used = 0;
  for (std::uint64_t c : sorted) {
    stats.frequencies.push_back(static_cast<double>(c) /
                                static_cast<double>(total));
    if (c > 0) ++used;
  }
  const std::size_t n = counts.size();
  stats.utilization = static_cast<double>(used) / static_cast<double>(n);
  // Top 20% of codewords, rounded up.
  const std::size_t top = (n + 4) / 5;
  std::uint64_t top_sum = 0;
  for (std::size_t i = 0; i < top; ++i) top_sum += sorted[i];
  stats.top20_cumulative =
      static_cast<double>(top_sum) / static_cast<double>(total);
  return stats;
}

void update_codebook(Codebook& book, std::span<const double> grads,
                     Optimizer& optimizer, double lr) {
  if (grads.size() != book.entries().size()) {
    throw Error(ErrorKind::kShape, "codebook gradient shape mismatch");
  }
  optimizer.step(book.entries(), grads, lr);
}

}  // namespace gstok
