#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <string>

#include "gstok/io.hpp"
#include "gstok/metrics.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace gstok {
namespace {

struct CliResult {
  int code = -1;
  std::string out;
};

CliResult run(const std::string& args) {
  const std::string cmd = std::string(GSTOK_CLI) + " " + args + " 2>/dev/null";
  CliResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

json first_line(const std::string& out) {
  return json::parse(out.substr(0, out.find('\n')));
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("gstok_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  static std::string image(const std::string& name = "chelsea32.png") {
    return (fs::path(GSTOK_TEST_DATA) / name).string();
  }
  fs::path dir_;
};

TEST_F(Cli, FitWritesFilesAndSummary) {
  const CliResult r = run("fit --image " + image() +
                    " --num-gaussians 16 --feature-dim 3 --codebook-size 64 --steps 60 --out " +
                    path("m.gsq") + " --usage-out " + path("u.json"));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(path("m.gsq")));
  EXPECT_TRUE(fs::exists(path("m.gcb")));
  const json j = first_line(r.out);
  for (const char* key : {"psnr", "ssim", "utilization", "seconds"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_GT(j["utilization"].get<double>(), 0.0);
  const auto counts = read_usage_log(path("u.json"));
  std::uint64_t total = 0;
  for (auto c : counts) total += c;
  EXPECT_EQ(counts.size(), 64u);
  EXPECT_EQ(total, 16u * 60u);
}

TEST_F(Cli, MissingImageIsUsageError) {
  const std::string cmd = std::string(GSTOK_CLI) +
                          " fit --num-gaussians 4 --feature-dim 3 --codebook-size 4"
                          " --steps 2 --out " + path("m.gsq") + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  ASSERT_NE(pipe, nullptr);
  std::string out;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) out.append(buf, n);
  const int status = pclose(pipe);
  EXPECT_EQ(WEXITSTATUS(status), 1);
  EXPECT_NE(out.find("--image"), std::string::npos);
  EXPECT_NE(out.find("Usage"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("m.gsq")));
}

TEST_F(Cli, UnreadableImage) {
  EXPECT_EQ(run("fit --image " + path("nope.png") +
                " --num-gaussians 4 --feature-dim 3 --codebook-size 4 --steps 2 --out " +
                path("m.gsq")).code,
            2);
}

TEST_F(Cli, DivergenceExitCode) {
  const CliResult r = run("fit --image " + image() +
                    " --num-gaussians 4 --feature-dim 3 --codebook-size 4 --steps 20"
                    " --warmup 0 --lr 1e300 --out " + path("m.gsq"));
  EXPECT_EQ(r.code, 3);
  EXPECT_FALSE(fs::exists(path("m.gsq")));
}

TEST_F(Cli, FitRenderEvalReproducesPsnr) {
  const CliResult fit = run("fit --image " + image() +
                      " --num-gaussians 24 --feature-dim 3 --codebook-size 128 --steps 150"
                      " --seed 5 --out " + path("m.gsq") + " --codebook-out " + path("b.gcb"));
  ASSERT_EQ(fit.code, 0);
  const double reported = first_line(fit.out)["psnr"].get<double>();
  ASSERT_EQ(run("render " + path("m.gsq") + " " + path("b.gcb") + " --out " + path("r.png")).code, 0);
  const CliResult ev = run("eval " + path("r.png") + " " + image());
  ASSERT_EQ(ev.code, 0);
  EXPECT_NEAR(first_line(ev.out)["psnr"].get<double>(), reported, 1e-6);
  EXPECT_NEAR(first_line(ev.out)["ssim"].get<double>(),
              first_line(fit.out)["ssim"].get<double>(), 1e-6);
}

TEST_F(Cli, UnquantizedRoundTrip) {
  const CliResult fit = run("fit --image " + image("rocket32.png") +
                      " --num-gaussians 16 --feature-dim 3 --codebook-size 8 --steps 100"
                      " --no-quantize --out " + path("m.gsq"));
  ASSERT_EQ(fit.code, 0);
  EXPECT_FALSE(fs::exists(path("m.gcb")));
  const GsqModel model = decode_gsq(read_file(path("m.gsq")));
  EXPECT_FALSE(model.indices.has_value());
  ASSERT_EQ(run("render " + path("m.gsq") + " --out " + path("r.png")).code, 0);
  const CliResult ev = run("eval " + path("r.png") + " " + image("rocket32.png"));
  EXPECT_NEAR(first_line(ev.out)["psnr"].get<double>(),
              first_line(fit.out)["psnr"].get<double>(), 1e-6);
}

TEST_F(Cli, SameSeedGivesIdenticalFiles) {
  const std::string common = "fit --image " + image("coffee32.png") +
                             " --num-gaussians 20 --feature-dim 3 --codebook-size 64"
                             " --steps 80 --seed 9";
  ASSERT_EQ(run(common + " --out " + path("a.gsq")).code, 0);
  ASSERT_EQ(run(common + " --out " + path("b.gsq")).code, 0);
  EXPECT_EQ(read_file(path("a.gsq")), read_file(path("b.gsq")));
  EXPECT_EQ(read_file(path("a.gcb")), read_file(path("b.gcb")));
}

TEST_F(Cli, RenderEmptyModelIsBlack) {
  GsqModel model;
  model.set = GaussianSet(3, 12, 20);
  write_file_atomic(path("empty.gsq"), encode_gsq(model));
  ASSERT_EQ(run("render " + path("empty.gsq") + " --out " + path("r.png")).code, 0);
  EXPECT_EQ(read_png(path("r.png")), FeatureMap(12, 20, 3, 0.0));
}

TEST_F(Cli, RenderScalesWithWidth) {
  GsqModel model;
  model.set = GaussianSet(3, 12, 20);
  Gaussian2D g;
  g.mu = {10.0, 6.0};
  g.log_s = {1.0, 0.5};
  g.zeta = {0.2, 0.9, 0.4};
  model.set.gaussians.push_back(g);
  write_file_atomic(path("m.gsq"), encode_gsq(model));
  ASSERT_EQ(run("render " + path("m.gsq") + " --width 40 --out " + path("r.png")).code, 0);
  const FeatureMap big = read_png(path("r.png"));
  EXPECT_EQ(big.width(), 40u);
  EXPECT_EQ(big.height(), 24u);
  EXPECT_EQ(big, quantize_rgb8(render_model(decode_gsq(encode_gsq(model)), nullptr, 24, 40)));
}

TEST_F(Cli, NonRgbModelNeedsChannelMap) {
  GsqModel model;
  model.set = GaussianSet(5, 8, 8);
  Gaussian2D g;
  g.mu = {4.5, 4.5};
  g.zeta = {0.1, 0.2, 0.3, 0.4, 0.5};
  model.set.gaussians.push_back(g);
  write_file_atomic(path("m.gsq"), encode_gsq(model));
  EXPECT_EQ(run("render " + path("m.gsq") + " --out " + path("r.png")).code, 4);
  ASSERT_EQ(run("render " + path("m.gsq") + " --channel-map 4,0,2 --out " + path("r.png")).code, 0);
  const FeatureMap img = read_png(path("r.png"));
  EXPECT_EQ(to_rgb8(img)[(4 * 8 + 4) * 3 + 0], 128);  // 0.5 * 255 rounds to even
  EXPECT_EQ(run("render " + path("m.gsq") + " --channel-map 0,1,5 --out " + path("r.png")).code, 4);
}

TEST_F(Cli, CorruptInputs) {
  const std::vector<std::uint8_t> junk{'G', 'S', 'Q', '1', 1, 2, 3};
  write_file_atomic(path("bad.gsq"), junk);
  EXPECT_EQ(run("render " + path("bad.gsq") + " --out " + path("r.png")).code, 2);
  EXPECT_EQ(run("render " + path("missing.gsq") + " --out " + path("r.png")).code, 2);
  EXPECT_EQ(run("eval " + path("bad.gsq") + " " + image()).code, 2);

  GsqModel model;
  model.set = GaussianSet(3, 8, 8);
  Gaussian2D g;
  g.mu = {4.0, 4.0};
  g.zeta = {0.0, 0.0, 0.0};
  model.set.gaussians.push_back(g);
  model.indices = std::vector<std::uint32_t>{0};
  write_file_atomic(path("idx.gsq"), encode_gsq(model));
  EXPECT_EQ(run("render " + path("idx.gsq") + " --out " + path("r.png")).code, 2);
  write_file_atomic(path("b.gcb"), encode_gcb(Codebook({1.0, 1.0}, 2)));
  EXPECT_EQ(run("render " + path("idx.gsq") + " " + path("b.gcb") + " --out " + path("r.png")).code, 2);
}

TEST_F(Cli, EvalIdenticalImages) {
  const CliResult r = run("eval " + image() + " " + image());
  ASSERT_EQ(r.code, 0);
  const json j = first_line(r.out);
  EXPECT_EQ(j["psnr"], "inf");
  EXPECT_EQ(j["ssim"].get<double>(), 1.0);
  EXPECT_EQ(j["mse"].get<double>(), 0.0);
}

TEST_F(Cli, StatsSingleCodeUsage) {
  write_file_atomic(path("b.gcb"), encode_gcb(Codebook(std::vector<double>(8 * 3, 0.5), 3)));
  write_usage_log(path("u.json"), {0, 0, 0, 42, 0, 0, 0, 0});
  const CliResult r = run("stats --codebook " + path("b.gcb") + " --usage " + path("u.json"));
  ASSERT_EQ(r.code, 0);
  const json j = first_line(r.out);
  EXPECT_EQ(j["utilization"].get<double>(), 1.0 / 8.0);
  EXPECT_EQ(j["top20_cumulative"].get<double>(), 1.0);
  EXPECT_EQ(j["queries"].get<std::uint64_t>(), 42u);
  EXPECT_NE(r.out.find("rank 0-10%"), std::string::npos);

  write_usage_log(path("short.json"), {1, 2});
  EXPECT_EQ(run("stats --codebook " + path("b.gcb") + " --usage " + path("short.json")).code, 2);
  write_usage_log(path("zero.json"), std::vector<std::uint64_t>(8, 0));
  EXPECT_EQ(run("stats --codebook " + path("b.gcb") + " --usage " + path("zero.json")).code, 2);
}

TEST_F(Cli, StatsFromModelIndices) {
  ASSERT_EQ(run("fit --image " + image("astronaut32.png") +
                " --num-gaussians 16 --feature-dim 3 --codebook-size 32 --steps 40 --out " +
                path("m.gsq")).code,
            0);
  const CliResult r = run("stats --codebook " + path("m.gcb") + " --model " + path("m.gsq"));
  ASSERT_EQ(r.code, 0);
  const json j = first_line(r.out);
  EXPECT_EQ(j["queries"].get<std::uint64_t>(), 16u);
  EXPECT_GT(j["utilization"].get<double>(), 0.0);
}

TEST_F(Cli, GradcheckSeedSeven) {
  const CliResult r = run("gradcheck --seed 7");
  ASSERT_EQ(r.code, 0);
  const json j = first_line(r.out);
  EXPECT_TRUE(j["passed"].get<bool>());
  EXPECT_LE(j["max_relative_error"].get<double>(), 1e-3);
  EXPECT_EQ(j["scenes"].get<std::size_t>(), 100u);
}

}  // namespace
}  // namespace gstok
