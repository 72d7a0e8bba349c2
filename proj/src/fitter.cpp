#include "gstok/fitter.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>

#include "gstok/error.hpp"
#include "gstok/metrics.hpp"
#include "gstok/optim.hpp"

namespace gstok {
namespace {

void invalid(const std::string& what) {
  throw Error(ErrorKind::kInvalidParameter, what);
}

std::vector<double> packed_zetas(const GaussianSet& set) {
  std::vector<double> out;
  out.reserve(set.size() * set.feature_dim);
  for (const Gaussian2D& g : set.gaussians) {
    out.insert(out.end(), g.zeta.begin(), g.zeta.end());
  }
  return out;
}

void check_target(const FeatureMap& target, const FitConfig& cfg) {
  if (target.dim() != cfg.feature_dim) {
    throw Error(ErrorKind::kShape, "target has " + std::to_string(target.dim()) +
                                       " channels, config expects " +
                                       std::to_string(cfg.feature_dim));
  }
  if ((cfg.map_height != 0 && cfg.map_height != target.height()) ||
      (cfg.map_width != 0 && cfg.map_width != target.width())) {
    throw Error(ErrorKind::kShape, "target size differs from the configured map size");
  }
  if (target.pixel_count() == 0 || !target.all_finite()) {
    invalid("target must be non-empty and finite");
  }
}

// Keeps centers on the map so that the set stays serializable.
void project_positions(GaussianSet& set) {
  const auto w = static_cast<double>(set.map_width);
  const auto h = static_cast<double>(set.map_height);
  for (Gaussian2D& g : set.gaussians) {
    g.mu[0] = std::clamp(g.mu[0], 0.0, w);
    g.mu[1] = std::clamp(g.mu[1], 0.0, h);
  }
}

FitResult run_fit(const FeatureMap& target, const FitConfig& cfg,
                  GaussianSet set, std::mt19937_64& rng) {
  const auto started = std::chrono::steady_clock::now();
  const std::size_t dim = cfg.feature_dim;

  Codebook book(cfg.codebook_size, dim);
  {
    const auto zetas = packed_zetas(set);
    book.init_from_samples(zetas, rng);
  }
  book.reset_usage();

  AdamOptions opts{cfg.adam_beta1, cfg.adam_beta2, 1e-8, cfg.weight_decay};
  Adam gaussian_opt(opts);
  Adam codebook_opt(opts);

  FitReport report;
  report.reconstruction.reserve(cfg.steps);
  report.vq.reserve(cfg.steps);
  report.commit.reserve(cfg.steps);
  report.total.reserve(cfg.steps);
  report.learning_rate.reserve(cfg.steps);

  std::vector<double> params = set.pack();
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    Objective obj = evaluate_objective(set, book, target, cfg, /*count_usage=*/true);
    if (!std::isfinite(obj.total)) {
      throw Error(ErrorKind::kDivergence,
                  "loss became non-finite at step " + std::to_string(step) +
                      " (reconstruction " + std::to_string(obj.reconstruction) +
                      ", vq " + std::to_string(obj.vq) + ", commit " +
                      std::to_string(obj.commit) + ")");
    }
    const double lr = cosine_warmup_lr(step, cfg);
    report.reconstruction.push_back(obj.reconstruction);
    report.vq.push_back(obj.vq);
    report.commit.push_back(obj.commit);
    report.total.push_back(obj.total);
    report.learning_rate.push_back(lr);

    gaussian_opt.step(params, obj.gaussian_grad, lr);
    set.unpack(params);
    project_positions(set);
    params = set.pack();
    if (cfg.quantize) update_codebook(book, obj.codebook_grad, codebook_opt, lr);

    if (!std::all_of(params.begin(), params.end(),
                     [](double v) { return std::isfinite(v); }) ||
        !std::all_of(book.entries().begin(), book.entries().end(),
                     [](double v) { return std::isfinite(v); })) {
      throw Error(ErrorKind::kDivergence,
                  "parameters became non-finite after step " + std::to_string(step));
    }
  }

  FitResult result;
  const Objective final_obj = evaluate_objective(set, book, target, cfg, false);
  result.indices = final_obj.indices;
  report.final_mse = mse(final_obj.render, target);
  report.final_psnr = psnr(final_obj.render, target);
  report.final_ssim = target.height() >= 11 && target.width() >= 11
                          ? ssim(final_obj.render, target)
                          : std::numeric_limits<double>::quiet_NaN();
  if (cfg.quantize && book.total_queries() > 0) {
    report.utilization = usage_histogram(book).utilization;
  }
  report.wall_seconds = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - started)
                            .count();
  result.gaussians = std::move(set);
  result.codebook = std::move(book);
  result.report = std::move(report);
  return result;
}

}  // namespace

void FitConfig::validate() const {
  if (feature_dim == 0) invalid("feature_dim must be positive");
  if (codebook_size == 0) invalid("codebook_size must be positive");
  if (steps == 0) invalid("steps must be positive");
  if (tile_size == 0) invalid("tile_size must be positive");
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) invalid("base_lr must be positive");
  if (!(commit_weight >= 0.0) || !(vq_weight >= 0.0) || !(weight_decay >= 0.0)) {
    invalid("loss weights and weight decay must be non-negative");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    invalid("Adam betas must lie in [0, 1)");
  }
  if (!(cutoff > 0.0) || !std::isfinite(cutoff)) invalid("cutoff must be positive");
  if (warmup_steps && *warmup_steps >= steps) invalid("warmup must be shorter than the run");
}

std::size_t FitConfig::effective_warmup() const {
  return warmup_steps.value_or(steps / 20);
}

double cosine_warmup_lr(std::size_t step, const FitConfig& cfg) {
  return cosine_warmup_lr(static_cast<std::int64_t>(step),
                          static_cast<std::int64_t>(cfg.steps),
                          static_cast<std::int64_t>(cfg.effective_warmup()),
                          cfg.base_lr);
}

Objective evaluate_objective(const GaussianSet& set, const Codebook& book,
                             const FeatureMap& target, const FitConfig& cfg,
                             bool count_usage) {
  const std::size_t dim = set.feature_dim;
  if (target.dim() != dim || book.dim() != dim) {
    throw Error(ErrorKind::kShape, "target, codebook and Gaussians disagree on D");
  }
  Objective obj;
  const std::vector<double> zetas = packed_zetas(set);

  GaussianSet rendered = set;
  QuantizationResult quant;
  if (cfg.quantize) {
    quant = quantize_set(book, zetas, count_usage);
    for (std::size_t k = 0; k < rendered.size(); ++k) {
      auto& z = rendered.gaussians[k].zeta;
      std::copy_n(quant.quantized.begin() + static_cast<std::ptrdiff_t>(k * dim),
                  dim, z.begin());
    }
    obj.indices = quant.indices;
    obj.vq = quant.vq_loss;
    obj.commit = quant.commit_loss;
  }

  const RasterConfig raster = cfg.raster();
  auto [render, aux] = splat_forward(rendered, target.height(), target.width(), raster);

  const auto n = static_cast<double>(render.size());
  FeatureMap grad_out(render.height(), render.width(), dim);
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < render.size(); ++i) {
    const double diff = render.data()[i] - target.data()[i];
    sum_sq += diff * diff;
    grad_out.data()[i] = 2.0 * diff / n;
  }
  obj.reconstruction = sum_sq / n;
  obj.total = obj.reconstruction + cfg.commit_weight * obj.commit +
              cfg.vq_weight * obj.vq;

  const GradientBundle bundle = splat_backward(rendered, aux, grad_out, raster);
  obj.gaussian_grad = bundle.pack();
  obj.codebook_grad.assign(book.entries().size(), 0.0);

  if (cfg.quantize) {
    const std::size_t stride = param_count(dim);
    const std::vector<double> commit_grad = commit_loss_gradient(zetas, quant);
    for (std::size_t k = 0; k < set.size(); ++k) {
      const std::span<const double> z(zetas.data() + k * dim, dim);
      const std::span<const double> e(quant.quantized.data() + k * dim, dim);
      const std::span<const double> up(bundle.d_zeta.data() + k * dim, dim);
      const StraightThrough st = straight_through(z, e, up);
      double* g = obj.gaussian_grad.data() + k * stride + 5;
      for (std::size_t c = 0; c < dim; ++c) {
        g[c] = st.zeta_grad[c] + cfg.commit_weight * commit_grad[k * dim + c];
      }
    }
    const std::vector<double> vq_grad = vq_loss_gradient(book, zetas, quant);
    for (std::size_t i = 0; i < vq_grad.size(); ++i) {
      obj.codebook_grad[i] = cfg.vq_weight * vq_grad[i];
    }
  }
  obj.render = std::move(render);
  return obj;
}

GaussianSet init_gaussians(const FitConfig& cfg, const FeatureMap& target,
                           std::mt19937_64& rng) {
  const std::size_t k_total = cfg.num_gaussians;
  const std::size_t h = target.height();
  const std::size_t w = target.width();
  if (target.dim() != cfg.feature_dim) {
    throw Error(ErrorKind::kShape, "target channel count differs from feature_dim");
  }
  GaussianSet set(cfg.feature_dim, h, w);
  if (k_total == 0) return set;

  const auto cols = static_cast<std::size_t>(
      std::ceil(std::sqrt(static_cast<double>(k_total))));
  const std::size_t rows = (k_total + cols - 1) / cols;
  const double cell_w = static_cast<double>(w) / static_cast<double>(cols);
  const double cell_h = static_cast<double>(h) / static_cast<double>(rows);
  const double scale =
      std::sqrt(static_cast<double>(h * w) / (static_cast<double>(k_total) * kPi));
  const double log_scale = std::log(std::max(scale, kMinScale));
  std::uniform_real_distribution<double> jitter(-0.5, 0.5);

  set.gaussians.reserve(k_total);
  for (std::size_t k = 0; k < k_total; ++k) {
    const std::size_t r = k / cols;
    const std::size_t c = k % cols;
    Gaussian2D g;
    const double jx = jitter(rng);
    const double jy = jitter(rng);
    g.mu = {(static_cast<double>(c) + 0.5 + jx) * cell_w,
            (static_cast<double>(r) + 0.5 + jy) * cell_h};
    g.theta_raw = 0.0;
    g.log_s = {log_scale, log_scale};
    const auto px = std::min(static_cast<std::size_t>(std::max(g.mu[0], 0.0)), w - 1);
    const auto py = std::min(static_cast<std::size_t>(std::max(g.mu[1], 0.0)), h - 1);
    const auto sample = target.pixel(py, px);
    g.zeta.assign(sample.begin(), sample.end());
    set.gaussians.push_back(std::move(g));
  }
  return set;
}

FitResult fit_image(const FeatureMap& target, const FitConfig& cfg) {
  cfg.validate();
  check_target(target, cfg);
  std::mt19937_64 rng(cfg.seed);
  GaussianSet set = init_gaussians(cfg, target, rng);
  return run_fit(target, cfg, std::move(set), rng);
}

FitResult fit_from(const FeatureMap& target, const FitConfig& cfg,
                   GaussianSet initial) {
  cfg.validate();
  check_target(target, cfg);
  if (initial.feature_dim != cfg.feature_dim ||
      initial.map_height != target.height() || initial.map_width != target.width()) {
    throw Error(ErrorKind::kShape, "initial set does not match the target");
  }
  initial.validate();
  std::mt19937_64 rng(cfg.seed);
  return run_fit(target, cfg, std::move(initial), rng);
}

double mean_color_baseline_psnr(const FeatureMap& target) {
  const FeatureMap clamped = target.clamped();
  FeatureMap baseline(target.height(), target.width(), target.dim());
  const auto n = static_cast<double>(target.pixel_count());
  for (std::size_t c = 0; c < target.dim(); ++c) {
    double sum = 0.0;
    for (std::size_t r = 0; r < target.height(); ++r) {
      for (std::size_t col = 0; col < target.width(); ++col) {
        sum += clamped.at(r, col, c);
      }
    }
    const double mean = sum / n;
    for (std::size_t r = 0; r < target.height(); ++r) {
      for (std::size_t col = 0; col < target.width(); ++col) {
        baseline.at(r, col, c) = mean;
      }
    }
  }
  return psnr(baseline, target);
}

}  // namespace gstok
