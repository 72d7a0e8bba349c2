// End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "gstok/fitter.hpp"
#include "gstok/gradcheck.hpp"
#include "gstok/io.hpp"
#include "gstok/metrics.hpp"
#include "gstok/rasterizer.hpp"
#include "known_scene.hpp"

namespace fs = std::filesystem;
using namespace gstok;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

ScenePrior wide_prior() {
  ScenePrior p;
  p.max_gaussians = 64;
  p.max_side = 64;
  p.max_dim = 8;
  p.min_scale = 0.3;
  p.max_scale = 12.0;
  return p;
}

Outcome gradient_check() {
  GradCheckOptions opts;
  opts.seed = 7;
  opts.scenes = 100;
  opts.step = 1e-5;
  opts.threads = 1;
  const GradCheckReport r = run_gradcheck(opts);
  const bool ok = r.passed && r.scenes == 100 && r.max_relative_error <= 1e-3 &&
                  r.seconds < 60.0;
  return {ok, fmt("%zu scenes, %zu parameters checked, %zu skipped at the cutoff, "
                  "max rel err %.3g, %.2f s single-threaded",
                  r.scenes, r.checked, r.skipped, r.max_relative_error, r.seconds)};
}

Outcome regional_error_identity() {
  std::mt19937_64 rng(12);
  double worst = 0.0;
  for (int scene = 0; scene < 50; ++scene) {
    const GaussianSet set = random_scene(rng, wide_prior());
    const std::size_t h = set.map_height, w = set.map_width, d = set.feature_dim;
    const FeatureMap up = random_map(rng, h, w, d);
    auto [map, aux] = splat_forward(set, h, w);
    const GradientBundle g = splat_backward(set, aux, up);
    for (std::size_t k = 0; k < set.size(); ++k) {
      const Covariance2D cov = covariance_of(set.gaussians[k]);
      std::vector<double> sum(d, 0.0);
      for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
          const double pi_k = gaussian_weight(set.gaussians[k].mu, cov, pixel_center(r, c));
          if (pi_k == 0.0) continue;
          for (std::size_t j = 0; j < d; ++j) sum[j] += up.at(r, c, j) * pi_k;
        }
      }
      for (std::size_t j = 0; j < d; ++j) {
        worst = std::max(worst, std::abs(sum[j] - g.d_zeta[k * d + j]));
      }
    }
  }
  return {worst <= 1e-10, fmt("50 scenes, max |d_zeta - sum grad*pi| = %.3g", worst)};
}

Outcome tiled_dense_equivalence() {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  bool identical = true;
  for (int scene = 0; scene < 200; ++scene) {
    const GaussianSet set = random_scene(rng, wide_prior());
    const std::size_t h = set.map_height, w = set.map_width;
    const RasterConfig one{kDefaultCutoff, 16, 1};
    const RasterConfig many{kDefaultCutoff, 16, 8};
    auto [m1, a1] = splat_forward(set, h, w, one);
    auto [m8, a8] = splat_forward(set, h, w, many);
    const FeatureMap dense = splat_dense_reference(set, h, w);
    for (std::size_t i = 0; i < dense.size(); ++i) {
      worst = std::max(worst, std::abs(m1.data()[i] - dense.data()[i]));
    }
    const FeatureMap up = random_map(rng, h, w, set.feature_dim);
    identical = identical && m1 == m8 &&
                splat_backward(set, a1, up, one) == splat_backward(set, a8, up, many);
  }
  return {worst <= 1e-6 && identical,
          fmt("200 scenes, max-abs %.3g; 1 vs 8 threads %s", worst,
              identical ? "bit-identical" : "DIFFER")};
}

Outcome recovery() {
  const auto t0 = Clock::now();
  int good = 0;
  double worst = 0.0;
  std::string per_seed;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const testing::RecoveryRun run = testing::run_recovery(seed);
    const double m = run.fit.report.final_mse;
    if (m < 1e-3) ++good;
    worst = std::max(worst, m);
    per_seed += fmt(" %.1e", m);
  }
  const double secs = seconds_since(t0);
  return {good >= 9 && secs < 120.0,
          fmt("%d/10 seeds below 1e-3 (final MSE:%s), %.1f s", good, per_seed.c_str(), secs)};
}

Outcome natural_images() {
  const char* names[] = {"astronaut32.png", "chelsea32.png", "coffee32.png",
                         "rocket32.png", "immunohistochemistry32.png"};
  bool ok = true;
  std::string detail;
  for (const char* name : names) {
    const FeatureMap target = read_png(fs::path(GSTOK_TEST_DATA) / name);
    FitConfig cfg;
    cfg.num_gaussians = 64;
    cfg.feature_dim = 3;
    cfg.steps = 2000;
    cfg.base_lr = 1e-2;
    cfg.quantize = false;
    cfg.codebook_size = 1;
    const FitResult r = fit_image(target, cfg);
    const double base = mean_color_baseline_psnr(target);
    const double p = r.report.final_psnr;
    ok = ok && p >= base + 10.0;
    detail += fmt(" %s %.2f vs %.2f;", name, p, base);
  }
  return {ok, "PSNR vs mean-colour baseline (dB):" + detail};
}

Outcome quantized_reporting() {
  const FeatureMap target = read_png(fs::path(GSTOK_TEST_DATA) / "chelsea32.png");
  FitConfig cfg;
  cfg.num_gaussians = 64;
  cfg.feature_dim = 3;
  cfg.codebook_size = 1024;
  cfg.steps = 300;
  cfg.base_lr = 1e-2;
  cfg.seed = 11;
  const FitResult a = fit_image(target, cfg);
  cfg.threads = 3;
  const FitResult b = fit_image(target, cfg);

  const UsageStats sa = usage_histogram(a.codebook);
  const UsageStats sb = usage_histogram(b.codebook);
  std::uint64_t total = 0;
  for (auto c : a.codebook.usage_counts()) total += c;
  double freq_sum = 0.0;
  for (double f : sa.frequencies) freq_sum += f;
  const bool deterministic = a.codebook.usage_counts() == b.codebook.usage_counts() &&
                             sa.frequencies == sb.frequencies &&
                             sa.utilization == sb.utilization &&
                             sa.top20_cumulative == sb.top20_cumulative;
  const bool ok = sa.utilization > 0.0 && total == cfg.num_gaussians * cfg.steps &&
                  std::abs(freq_sum - 1.0) < 1e-12 && deterministic &&
                  sa.utilization == a.report.utilization;
  return {ok, fmt("N=1024: utilization %.4f, top-20%% cumulative %.4f, %llu queries "
                  "(K*steps = %zu), rerun %s",
                  sa.utilization, sa.top20_cumulative,
                  static_cast<unsigned long long>(total), cfg.num_gaussians * cfg.steps,
                  deterministic ? "identical" : "DIFFERS")};
}

Outcome serialization() {
  std::mt19937_64 rng(61);
  bool round_trip = true;
  for (int trial = 0; trial < 200 && round_trip; ++trial) {
    GsqModel model;
    model.set = random_scene(rng, wide_prior());
    if (trial % 2) model.indices = std::vector<std::uint32_t>(model.set.size(), trial);
    const auto bytes = encode_gsq(model);
    const GsqModel back = decode_gsq(bytes);
    round_trip = encode_gsq(back) == bytes && back.indices == model.indices;
    for (std::size_t k = 0; k < model.set.size() && round_trip; ++k) {
      const auto& a = model.set.gaussians[k];
      const auto& b = back.set.gaussians[k];
      for (std::size_t c = 0; c < a.zeta.size(); ++c) {
        round_trip = round_trip && b.zeta[c] == static_cast<float>(a.zeta[c]);
      }
      const Covariance2D ca = covariance_of(a), cb = covariance_of(b);
      const double tol = 1e-5 * (ca.sigma[0][0] + ca.sigma[1][1]);
      round_trip = round_trip && std::abs(ca.sigma[0][1] - cb.sigma[0][1]) <= tol &&
                   std::abs(ca.sigma[0][0] - cb.sigma[0][0]) <= tol &&
                   std::abs(ca.sigma[1][1] - cb.sigma[1][1]) <= tol &&
                   std::abs(a.mu[0] - b.mu[0]) <= 1e-6 * model.set.map_width &&
                   std::abs(a.mu[1] - b.mu[1]) <= 1e-6 * model.set.map_height;
    }
    Codebook book(1 + trial % 7, 1 + trial % 5);
    std::normal_distribution<double> n(0.0, 1.0);
    for (double& e : book.entries()) e = n(rng);
    const auto gcb = encode_gcb(book);
    const Codebook book_back = decode_gcb(gcb);
    round_trip = round_trip && encode_gcb(book_back) == gcb;
    for (std::size_t i = 0; i < book.entries().size() && round_trip; ++i) {
      round_trip = book_back.entries()[i] == static_cast<float>(book.entries()[i]);
    }
  }

  const FeatureMap target = read_png(fs::path(GSTOK_TEST_DATA) / "coffee32.png");
  FitConfig cfg;
  cfg.num_gaussians = 32;
  cfg.codebook_size = 256;
  cfg.steps = 200;
  cfg.base_lr = 1e-2;
  cfg.seed = 3;
  auto files = [&] {
    const FitResult r = fit_image(target, cfg);
    GsqModel m;
    m.set = r.gaussians;
    m.indices = r.indices;
    return std::make_pair(encode_gsq(m), encode_gcb(r.codebook));
  };
  const auto first = files();
  const auto second = files();
  const bool rerun = first == second;
  return {round_trip && rerun,
          fmt("200 .gsq/.gcb round trips %s; fixed-seed reruns %s",
              round_trip ? "exact at f32" : "MISMATCH",
              rerun ? "byte-identical" : "DIFFER")};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const Criterion criteria[] = {
      {"gradient correctness", gradient_check},
      {"regional error-sum identity", regional_error_identity},
      {"tiled/dense equivalence", tiled_dense_equivalence},
      {"known-scene recovery", recovery},
      {"natural-image fit", natural_images},
      {"quantized fit reporting", quantized_reporting},
      {"serialization", serialization},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s  %-28s %s\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(criteria)) - failed,
              std::size(criteria));
  return failed == 0 ? 0 : 1;
}
