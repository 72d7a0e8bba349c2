// Command-line driver: fit, render, eval, stats, gradcheck.
//
// Exit codes: 0 success, 1 usage error or failed check, 2 unreadable or
// corrupt input, 3 divergence during fitting, 4 feature dimension cannot be
// shown as RGB without --channel-map.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gstok/codebook.hpp"
#include "gstok/error.hpp"
#include "gstok/fitter.hpp"
#include "gstok/gradcheck.hpp"
#include "gstok/io.hpp"
#include "gstok/metrics.hpp"
#include "gstok/rasterizer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitBadInput = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitChannels = 4;

json number_or_inf(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return nullptr;
  return v;
}

void emit(const json& j) { std::cout << j.dump() << std::endl; }

int fail(int code, const std::string& msg) {
  std::cerr << "gstok: " << msg << "\n";
  return code;
}

// Adapts an RGB image to a D-channel target: D = 1 uses the channel mean,
// D >= 3 keeps RGB in the first three channels and zeros elsewhere.
std::optional<gstok::FeatureMap> target_for_dim(const gstok::FeatureMap& rgb,
                                                std::size_t dim) {
  if (dim == 3) return rgb;
  if (dim == 2) return std::nullopt;
  gstok::FeatureMap out(rgb.height(), rgb.width(), dim);
  for (std::size_t r = 0; r < rgb.height(); ++r) {
    for (std::size_t c = 0; c < rgb.width(); ++c) {
      if (dim == 1) {
        out.at(r, c, 0) = (rgb.at(r, c, 0) + rgb.at(r, c, 1) + rgb.at(r, c, 2)) / 3.0;
      } else {
        for (std::size_t ch = 0; ch < 3; ++ch) out.at(r, c, ch) = rgb.at(r, c, ch);
      }
    }
  }
  return out;
}

gstok::FeatureMap select_channels(const gstok::FeatureMap& map,
                                  const std::vector<std::size_t>& channels) {
  gstok::FeatureMap out(map.height(), map.width(), 3);
  for (std::size_t r = 0; r < map.height(); ++r) {
    for (std::size_t c = 0; c < map.width(); ++c) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        out.at(r, c, ch) = map.at(r, c, channels[ch]);
      }
    }
  }
  return out;
}

struct FitArgs {
  std::string image;
  std::size_t num_gaussians = 64;
  std::size_t feature_dim = 3;
  std::size_t codebook_size = 1024;
  std::size_t steps = 2000;
  std::string out;
  std::string codebook_out;
  std::string usage_out;
  bool no_quantize = false;
  std::uint64_t seed = 0;
  double lr = 1e-2;
  double cutoff = gstok::kDefaultCutoff;
  std::optional<std::size_t> warmup;
  double commit_weight = 0.25;
  std::size_t tile_size = 16;
};

int cmd_fit(const FitArgs& args) {
  gstok::FeatureMap image;
  try {
    image = gstok::read_png(args.image);
  } catch (const gstok::Error& e) {
    return fail(kExitBadInput, e.what());
  }
  const auto target = target_for_dim(image, args.feature_dim);
  if (!target) return fail(kExitUsage, "--feature-dim must be 1 or at least 3");
  if (args.num_gaussians > image.pixel_count()) {
    std::cerr << "gstok: warning: more Gaussians than pixels\n";
  }

  gstok::FitConfig cfg;
  cfg.num_gaussians = args.num_gaussians;
  cfg.feature_dim = args.feature_dim;
  cfg.codebook_size = args.codebook_size;
  cfg.steps = args.steps;
  cfg.base_lr = args.lr;
  cfg.cutoff = args.cutoff;
  cfg.warmup_steps = args.warmup;
  cfg.commit_weight = args.commit_weight;
  cfg.quantize = !args.no_quantize;
  cfg.tile_size = args.tile_size;
  cfg.seed = args.seed;

  gstok::FitResult result;
  try {
    result = gstok::fit_image(*target, cfg);
  } catch (const gstok::Error& e) {
    if (e.kind() == gstok::ErrorKind::kDivergence) {
      return fail(kExitDivergence, e.what());
    }
    return fail(kExitUsage, e.what());
  }

  gstok::GsqModel model;
  model.set = result.gaussians;
  model.cutoff = cfg.cutoff;
  std::string codebook_out = args.codebook_out;
  if (cfg.quantize) {
    model.indices = result.indices;
    if (codebook_out.empty()) {
      codebook_out = fs::path(args.out).replace_extension(".gcb").string();
    }
  }

  std::optional<gstok::Codebook> stored_book;
  try {
    const auto gsq = gstok::encode_gsq(model);
    gstok::write_file_atomic(args.out, gsq);
    if (!codebook_out.empty()) {
      const auto gcb = gstok::encode_gcb(result.codebook);
      gstok::write_file_atomic(codebook_out, gcb);
      stored_book = gstok::decode_gcb(gcb);
    }
    if (!args.usage_out.empty()) {
      gstok::write_usage_log(args.usage_out, result.codebook.usage_counts());
    }

    // Score what was written, so render + eval reproduce these numbers.
    const gstok::GsqModel stored = gstok::decode_gsq(gsq);
    gstok::FeatureMap recon =
        gstok::render_model(stored, stored_book ? &*stored_book : nullptr, image.height(), image.width());
    const gstok::FeatureMap* reference = &*target;
    if (args.feature_dim == 3) {
      recon = gstok::quantize_rgb8(recon);
      reference = &image;
    }
    const double p = gstok::psnr(recon, *reference);
    const double s = image.height() >= 11 && image.width() >= 11
                         ? gstok::ssim(recon, *reference)
                         : std::nan("");
    json j;
    j["psnr"] = number_or_inf(p);
    j["ssim"] = number_or_inf(s);
    j["utilization"] = result.report.utilization;
    j["seconds"] = result.report.wall_seconds;
    j["final_loss"] = result.report.total.back();
    emit(j);
  } catch (const gstok::Error& e) {
    return fail(kExitBadInput, e.what());
  }
  return 0;
}

struct RenderArgs {
  std::string model;
  std::string codebook;
  std::string out;
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::size_t> channel_map;
};

int cmd_render(const RenderArgs& args) {
  gstok::GsqModel model;
  std::optional<gstok::Codebook> book;
  try {
    model = gstok::decode_gsq(gstok::read_file(args.model));
    if (!args.codebook.empty()) book = gstok::decode_gcb(gstok::read_file(args.codebook));
  } catch (const gstok::Error& e) {
    return fail(kExitBadInput, e.what());
  }
  if (model.indices && !book) {
    return fail(kExitBadInput, "model carries codebook indices; pass the .gcb file");
  }
  const std::size_t dim = model.set.feature_dim;
  std::vector<std::size_t> channels = args.channel_map;
  if (channels.empty()) {
    if (dim != 3) {
      return fail(kExitChannels, "feature dimension " + std::to_string(dim) +
                                     " needs --channel-map a,b,c");
    }
    channels = {0, 1, 2};
  }
  if (channels.size() != 3) return fail(kExitUsage, "--channel-map takes 3 indices");
  for (std::size_t c : channels) {
    if (c >= dim) return fail(kExitChannels, "--channel-map index out of range");
  }

  std::size_t h = model.set.map_height;
  std::size_t w = model.set.map_width;
  if (args.width != 0 && args.height != 0) {
    w = args.width;
    h = args.height;
  } else if (args.width != 0) {
    h = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(
                                     static_cast<double>(h) * args.width / w)));
    w = args.width;
  } else if (args.height != 0) {
    w = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(
                                     static_cast<double>(w) * args.height / h)));
    h = args.height;
  }

  try {
    const gstok::FeatureMap map =
        gstok::render_model(model, book ? &*book : nullptr, h, w);
    gstok::write_png(args.out, select_channels(map, channels));
  } catch (const gstok::Error& e) {
    return fail(kExitBadInput, e.what());
  }
  return 0;
}

int cmd_eval(const std::string& a_path, const std::string& b_path) {
  try {
    const gstok::FeatureMap a = gstok::read_png(a_path);
    const gstok::FeatureMap b = gstok::read_png(b_path);
    if (!a.same_shape(b)) return fail(kExitBadInput, "images differ in size");
    json j;
    j["mse"] = gstok::mse(a, b);
    j["psnr"] = number_or_inf(gstok::psnr(a, b));
    j["ssim"] = a.height() >= 11 && a.width() >= 11
                    ? number_or_inf(gstok::ssim(a, b))
                    : json(nullptr);
    emit(j);
  } catch (const gstok::Error& e) {
    return fail(kExitBadInput, e.what());
  }
  return 0;
}

struct StatsArgs {
  std::string codebook;
  std::string usage;
  std::string model;
};

int cmd_stats(const StatsArgs& args) {
  try {
    gstok::Codebook book = gstok::decode_gcb(gstok::read_file(args.codebook));
    std::vector<std::uint64_t> counts;
    if (!args.usage.empty()) {
      counts = gstok::read_usage_log(args.usage);
    } else {
      const auto model = gstok::decode_gsq(gstok::read_file(args.model));
      if (!model.indices) return fail(kExitBadInput, "model has no codebook indices");
      counts.assign(book.size(), 0);
      for (std::uint32_t idx : *model.indices) {
        if (idx >= book.size()) return fail(kExitBadInput, "index out of range");
        ++counts[idx];
      }
    }
    if (counts.size() != book.size()) {
      return fail(kExitBadInput, "usage counts do not match the codebook size");
    }
    book.set_usage(counts);
    const gstok::UsageStats stats = gstok::usage_histogram(book);

    json j;
    j["codebook_size"] = book.size();
    j["queries"] = book.total_queries();
    j["utilization"] = stats.utilization;
    j["top20_cumulative"] = stats.top20_cumulative;
    emit(j);

    // Usage mass per decile of codewords ranked by frequency.
    const std::size_t n = stats.frequencies.size();
    for (std::size_t d = 0; d < 10; ++d) {
      const std::size_t lo = n * d / 10;
      const std::size_t hi = n * (d + 1) / 10;
      double mass = 0.0;
      for (std::size_t i = lo; i < hi; ++i) mass += stats.frequencies[i];
      std::ostringstream line;
      line << "rank " << (d * 10) << "-" << ((d + 1) * 10) << "%\t"
           << std::string(static_cast<std::size_t>(std::lround(mass * 50)), '#')
           << " " << mass;
      std::cout << line.str() << "\n";
    }
  } catch (const gstok::Error& e) {
    return fail(kExitBadInput, e.what());
  }
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t scenes) {
  gstok::GradCheckOptions opts;
  opts.seed = seed;
  opts.scenes = scenes;
  const gstok::GradCheckReport r = gstok::run_gradcheck(opts);
  json j;
  j["scenes"] = r.scenes;
  j["checked"] = r.checked;
  j["skipped"] = r.skipped;
  j["max_relative_error"] = r.max_relative_error;
  j["seconds"] = r.seconds;
  j["passed"] = r.passed;
  emit(j);
  if (!r.passed) return fail(kExitUsage, "gradient check failed: " + r.worst);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Featured 2D Gaussian splatting tokenizer tools"};
  app.require_subcommand(1);

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit featured Gaussians to a PNG image");
  fit_cmd->add_option("--image", fit.image, "Input PNG")->required();
  fit_cmd->add_option("--num-gaussians", fit.num_gaussians, "Gaussian count K")->required();
  fit_cmd->add_option("--feature-dim", fit.feature_dim, "Feature dimension D")->required();
  fit_cmd->add_option("--codebook-size", fit.codebook_size, "Codebook size N")->required();
  fit_cmd->add_option("--steps", fit.steps, "Optimization steps")->required();
  fit_cmd->add_option("--out", fit.out, "Output .gsq")->required();
  fit_cmd->add_option("--codebook-out", fit.codebook_out,
                      "Output .gcb (defaults next to --out when quantizing)");
  fit_cmd->add_option("--usage-out", fit.usage_out, "Codebook usage log (JSON)");
  fit_cmd->add_flag("--no-quantize", fit.no_quantize, "Keep feature coefficients continuous");
  fit_cmd->add_option("--seed", fit.seed, "RNG seed");
  fit_cmd->add_option("--lr", fit.lr, "Base learning rate")->capture_default_str();
  fit_cmd->add_option("--cutoff", fit.cutoff, "Mahalanobis cutoff radius")->capture_default_str();
  fit_cmd->add_option("--warmup", fit.warmup, "Warmup steps (default 5% of steps)");
  fit_cmd->add_option("--commit-weight", fit.commit_weight, "Commitment loss weight")
      ->capture_default_str();
  fit_cmd->add_option("--tile-size", fit.tile_size, "Rasterizer tile size")->capture_default_str();

  RenderArgs render;
  auto* render_cmd = app.add_subcommand("render", "Render a .gsq model to PNG");
  render_cmd->add_option("model", render.model, "Model .gsq")->required();
  render_cmd->add_option("codebook", render.codebook, "Codebook .gcb");
  render_cmd->add_option("--out", render.out, "Output PNG")->required();
  render_cmd->add_option("--width", render.width, "Output width");
  render_cmd->add_option("--height", render.height, "Output height");
  render_cmd->add_option("--channel-map", render.channel_map,
                         "Feature channels shown as R,G,B")
      ->delimiter(',')
      ->expected(3);

  std::string eval_a, eval_b;
  auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM between two PNGs");
  eval_cmd->add_option("a", eval_a, "First image")->required();
  eval_cmd->add_option("b", eval_b, "Second image")->required();

  StatsArgs stats;
  auto* stats_cmd = app.add_subcommand("stats", "Codebook usage statistics");
  stats_cmd->add_option("--codebook", stats.codebook, "Codebook .gcb")->required();
  auto* usage_opt = stats_cmd->add_option("--usage", stats.usage, "Usage log from fit --usage-out");
  auto* model_opt = stats_cmd->add_option("--model", stats.model, "Count indices stored in a .gsq");
  usage_opt->excludes(model_opt);

  std::uint64_t grad_seed = 7;
  std::size_t grad_scenes = 100;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the backward pass");
  grad_cmd->add_option("--seed", grad_seed, "Scene RNG seed")->capture_default_str();
  grad_cmd->add_option("--scenes", grad_scenes, "Random scenes")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "gstok: " << e.what() << "\n\n";
    const CLI::App* scope = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << scope->help();
    return kExitUsage;
  }

  if (*fit_cmd) return cmd_fit(fit);
  if (*render_cmd) return cmd_render(render);
  if (*eval_cmd) return cmd_eval(eval_a, eval_b);
  if (*stats_cmd) {
    if (stats.usage.empty() && stats.model.empty()) {
      std::cerr << "gstok: stats needs --usage or --model\n\n" << stats_cmd->help();
      return kExitUsage;
    }
    return cmd_stats(stats);
  }
  if (*grad_cmd) return cmd_gradcheck(grad_seed, grad_scenes);
  return kExitUsage;
}
