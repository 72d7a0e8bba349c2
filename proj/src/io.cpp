#include "gstok/io.hpp"

#include <png.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include "gstok/error.hpp"
#include "gstok/rasterizer.hpp"
#include "json.hpp"

namespace gstok {
namespace {

constexpr char kGsqMagic[4] = {'G', 'S', 'Q', '1'};
constexpr char kGcbMagic[4] = {'G', 'C', 'B', '1'};

class ByteWriter {
 public:
  explicit ByteWriter(std::size_t reserve) { out_.reserve(reserve); }

  void magic(const char (&m)[4]) { out_.insert(out_.end(), m, m + 4); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  bool magic(const char (&m)[4]) {
    need(4);
    const bool ok = std::memcmp(bytes_.data() + pos_, m, 4) == 0;
    pos_ += 4;
    return ok;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw Error(ErrorKind::kFormat, "unexpected end of data");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t to_u32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(ErrorKind::kInvalidParameter, std::string(what) + " exceeds u32 range");
  }
  return static_cast<std::uint32_t>(v);
}

float finite_f32(double v, const char* what) {
  const auto f = static_cast<float>(v);
  if (!std::isfinite(f)) {
    throw Error(ErrorKind::kInvalidParameter,
                std::string(what) + " is not representable as a finite f32");
  }
  return f;
}

// The largest float strictly below pi; keeps the stored angle in [0, pi)
// after rounding to single precision.
const float kThetaCeiling = std::nextafter(static_cast<float>(kPi), 0.0f);

}  // namespace

std::vector<std::uint8_t> encode_gsq(const GsqModel& model) {
  const GaussianSet& set = model.set;
  set.validate();
  const std::size_t k = set.size();
  const std::size_t d = set.feature_dim;
  if (model.indices && model.indices->size() != k) {
    throw Error(ErrorKind::kShape, "index block length must equal the Gaussian count");
  }
  ByteWriter w(kGsqHeaderBytes + k * (5 + d + 1) * 4);
  w.magic(kGsqMagic);
  w.u32(to_u32(k, "gaussian count"));
  w.u32(to_u32(d, "feature dimension"));
  w.u32(to_u32(set.map_height, "map height"));
  w.u32(to_u32(set.map_width, "map width"));
  w.f32(finite_f32(model.cutoff, "cutoff"));
  w.u32(model.indices ? kGsqHasIndices : 0u);

  const auto width = static_cast<double>(set.map_width);
  const auto height = static_cast<double>(set.map_height);
  for (const Gaussian2D& g : set.gaussians) {
    const double nx = g.mu[0] / width;
    const double ny = g.mu[1] / height;
    if (!(nx >= 0.0 && nx <= 1.0 && ny >= 0.0 && ny <= 1.0)) {
      throw Error(ErrorKind::kInvalidParameter,
                  "gaussian position lies outside the map");
    }
    w.f32(static_cast<float>(nx));
    w.f32(static_cast<float>(ny));
    w.f32(std::min(static_cast<float>(canonical_theta(g.theta_raw)), kThetaCeiling));
    const Vec2 s = g.scales();
    w.f32(finite_f32(s[0], "scale"));
    w.f32(finite_f32(s[1], "scale"));
    for (double z : g.zeta) w.f32(finite_f32(z, "feature coefficient"));
  }
  if (model.indices) {
    for (std::uint32_t idx : *model.indices) w.u32(idx);
  }
  return w.take();
}

GsqModel decode_gsq(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (!r.magic(kGsqMagic)) throw Error(ErrorKind::kFormat, "not a .gsq file");
  const std::uint32_t k = r.u32();
  const std::uint32_t d = r.u32();
  const std::uint32_t h = r.u32();
  const std::uint32_t w = r.u32();
  const float cutoff = r.f32();
  const std::uint32_t flags = r.u32();
  if (d == 0 || h == 0 || w == 0) {
    throw Error(ErrorKind::kFormat, "zero dimension in .gsq header");
  }
  if (!(cutoff > 0.0f) || !std::isfinite(cutoff)) {
    throw Error(ErrorKind::kFormat, "invalid cutoff in .gsq header");
  }
  if ((flags & ~kGsqHasIndices) != 0) {
    throw Error(ErrorKind::kFormat, "unknown .gsq header flags");
  }
  const bool has_indices = (flags & kGsqHasIndices) != 0;
  const std::uint64_t expected =
      static_cast<std::uint64_t>(k) * (5ull + d + (has_indices ? 1ull : 0ull)) * 4ull;
  if (r.remaining() != expected) {
    throw Error(ErrorKind::kFormat, ".gsq length does not match its header");
  }

  GsqModel model;
  model.cutoff = cutoff;
  model.set = GaussianSet(d, h, w);
  model.set.gaussians.reserve(k);
  for (std::uint32_t i = 0; i < k; ++i) {
    Gaussian2D g;
    const float nx = r.f32();
    const float ny = r.f32();
    const float theta = r.f32();
    const float s1 = r.f32();
    const float s2 = r.f32();
    if (!(nx >= 0.0f && nx <= 1.0f && ny >= 0.0f && ny <= 1.0f)) {
      throw Error(ErrorKind::kFormat, "gaussian position outside [0,1]^2");
    }
    if (!(theta >= 0.0f && static_cast<double>(theta) < kPi)) {
      throw Error(ErrorKind::kFormat, "rotation angle outside [0, pi)");
    }
    if (!(s1 > 0.0f && s2 > 0.0f) || !std::isfinite(s1) || !std::isfinite(s2)) {
      throw Error(ErrorKind::kFormat, "non-positive scaling factor");
    }
    g.mu = {static_cast<double>(nx) * w, static_cast<double>(ny) * h};
    g.theta_raw = theta;
    g.log_s = {std::log(static_cast<double>(s1)), std::log(static_cast<double>(s2))};
    g.zeta.resize(d);
    for (auto& z : g.zeta) {
      z = r.f32();
      if (!std::isfinite(z)) throw Error(ErrorKind::kFormat, "non-finite feature");
    }
    model.set.gaussians.push_back(std::move(g));
  }
  if (has_indices) {
    std::vector<std::uint32_t> idx(k);
    for (auto& v : idx) v = r.u32();
    model.indices = std::move(idx);
  }
  return model;
}

std::vector<std::uint8_t> encode_gcb(const Codebook& book) {
  ByteWriter w(kGcbHeaderBytes + book.entries().size() * 4);
  w.magic(kGcbMagic);
  w.u32(to_u32(book.size(), "codebook size"));
  w.u32(to_u32(book.dim(), "codebook dimension"));
  for (double v : book.entries()) w.f32(finite_f32(v, "codebook entry"));
  return w.take();
}

Codebook decode_gcb(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (!r.magic(kGcbMagic)) throw Error(ErrorKind::kFormat, "not a .gcb file");
  const std::uint32_t n = r.u32();
  const std::uint32_t d = r.u32();
  if (n == 0 || d == 0) throw Error(ErrorKind::kFormat, "empty codebook header");
  if (r.remaining() != static_cast<std::uint64_t>(n) * d * 4ull) {
    throw Error(ErrorKind::kFormat, ".gcb length does not match its header");
  }
  std::vector<double> entries(static_cast<std::size_t>(n) * d);
  for (auto& v : entries) {
    v = r.f32();
    if (!std::isfinite(v)) throw Error(ErrorKind::kFormat, "non-finite codebook entry");
  }
  return Codebook(std::move(entries), d);
}

GaussianSet apply_codebook(const GsqModel& model, const Codebook& book) {
  GaussianSet out = model.set;
  if (!model.indices) return out;
  if (book.dim() != out.feature_dim) {
    throw Error(ErrorKind::kShape, "codebook dimension differs from the model's");
  }
  for (std::size_t k = 0; k < out.size(); ++k) {
    const std::uint32_t idx = (*model.indices)[k];
    if (idx >= book.size()) {
      throw Error(ErrorKind::kFormat, "codebook index " + std::to_string(idx) +
                                          " out of range");
    }
    const auto e = book.entry(idx);
    out.gaussians[k].zeta.assign(e.begin(), e.end());
  }
  return out;
}

FeatureMap render_model(const GsqModel& model, const Codebook* book,
                        std::size_t height, std::size_t width) {
  GaussianSet set = model.set;
  if (model.indices) {
    if (book == nullptr) {
      throw Error(ErrorKind::kInvalidParameter, "model needs its codebook to render");
    }
    set = apply_codebook(model, *book);
  }
  if (height != set.map_height || width != set.map_width) {
    set = rescale(set, height, width);
  }
  RasterConfig raster;
  raster.cutoff = model.cutoff;
  return splat_forward(set, height, width, raster).first;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path,
                       std::span<const std::uint8_t> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::kIo, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error(ErrorKind::kIo, "cannot rename onto " + path.string() + ": " +
                                    ec.message());
  }
}

namespace {

struct PngReadResult {
  std::vector<std::uint8_t> rows;  // packed, rowbytes each
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::size_t rowbytes = 0;
  char error[256] = {0};
};

void on_png_error(png_structp png, png_const_charp msg) {
  auto* res = static_cast<PngReadResult*>(png_get_error_ptr(png));
  std::snprintf(res->error, sizeof(res->error), "%s", msg);
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

// Plain-C frame so longjmp never skips a destructor.
bool decode_png_file(std::FILE* fp, PngReadResult* res) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, res,
                                           on_png_error, on_png_warning);
  if (png == nullptr) return false;
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_init_io(png, fp);
  png_read_png(png, info,
               PNG_TRANSFORM_EXPAND | PNG_TRANSFORM_STRIP_ALPHA |
                   PNG_TRANSFORM_PACKING,
               nullptr);
  res->width = png_get_image_width(png, info);
  res->height = png_get_image_height(png, info);
  res->channels = png_get_channels(png, info);
  res->bit_depth = png_get_bit_depth(png, info);
  res->rowbytes = png_get_rowbytes(png, info);
  png_bytepp rows = png_get_rows(png, info);
  res->rows.resize(res->rowbytes * res->height);
  for (std::uint32_t y = 0; y < res->height; ++y) {
    std::memcpy(res->rows.data() + y * res->rowbytes, rows[y], res->rowbytes);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

}  // namespace

FeatureMap read_png(const std::filesystem::path& path) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (fp == nullptr) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  PngReadResult res;
  const bool ok = decode_png_file(fp, &res);
  std::fclose(fp);
  if (!ok) {
    throw Error(ErrorKind::kIo, "cannot decode PNG " + path.string() +
                                    (res.error[0] ? std::string(": ") + res.error : ""));
  }
  if (res.channels != 1 && res.channels != 3) {
    throw Error(ErrorKind::kFormat, "unsupported PNG channel layout");
  }
  if (res.bit_depth != 8 && res.bit_depth != 16) {
    throw Error(ErrorKind::kFormat, "unsupported PNG bit depth");
  }

  FeatureMap out(res.height, res.width, 3);
  const double peak = res.bit_depth == 16 ? 65535.0 : 255.0;
  const std::size_t bytes_per_sample = res.bit_depth / 8;
  for (std::uint32_t y = 0; y < res.height; ++y) {
    const std::uint8_t* row = res.rows.data() + y * res.rowbytes;
    for (std::uint32_t x = 0; x < res.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const int src = res.channels == 1 ? 0 : c;
        const std::uint8_t* s =
            row + (static_cast<std::size_t>(x) * res.channels + src) * bytes_per_sample;
        // 16-bit samples are big-endian in PNG.
        const unsigned v = bytes_per_sample == 2 ? (s[0] << 8) | s[1] : s[0];
        out.at(y, x, static_cast<std::size_t>(c)) = v / peak;
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> to_rgb8(const FeatureMap& rgb) {
  if (rgb.dim() != 3) throw Error(ErrorKind::kShape, "RGB export needs 3 channels");
  std::vector<std::uint8_t> out(rgb.size());
  for (std::size_t i = 0; i < rgb.size(); ++i) {
    const double v = std::clamp(rgb.data()[i], 0.0, 1.0) * 255.0;
    // nearbyint honours the default round-half-to-even mode.
    out[i] = static_cast<std::uint8_t>(std::nearbyint(std::isnan(v) ? 0.0 : v));
  }
  return out;
}

FeatureMap quantize_rgb8(const FeatureMap& rgb) {
  const auto bytes = to_rgb8(rgb);
  FeatureMap out(rgb.height(), rgb.width(), 3);
  for (std::size_t i = 0; i < bytes.size(); ++i) out.data()[i] = bytes[i] / 255.0;
  return out;
}

void write_png(const std::filesystem::path& path, const FeatureMap& rgb) {
  const auto bytes = to_rgb8(rgb);
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(rgb.width());
  image.height = static_cast<png_uint_32>(rgb.height());
  image.format = PNG_FORMAT_RGB;

  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, bytes.data(), 0,
                                 nullptr)) {
    throw Error(ErrorKind::kIo, std::string("PNG encode failed: ") + image.message);
  }
  std::vector<std::uint8_t> encoded(size);
  if (!png_image_write_to_memory(&image, encoded.data(), &size, 0, bytes.data(),
                                 0, nullptr)) {
    throw Error(ErrorKind::kIo, std::string("PNG encode failed: ") + image.message);
  }
  encoded.resize(size);
  write_file_atomic(path, encoded);
}

void write_usage_log(const std::filesystem::path& path,
                     const std::vector<std::uint64_t>& counts) {
  nlohmann::json j;
  j["codebook_size"] = counts.size();
  j["counts"] = counts;
  const std::string text = j.dump() + "\n";
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                                    text.size()));
}

std::vector<std::uint64_t> read_usage_log(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    const auto j = nlohmann::json::parse(bytes.begin(), bytes.end());
    auto counts = j.at("counts").get<std::vector<std::uint64_t>>();
    if (j.contains("codebook_size") &&
        j.at("codebook_size").get<std::size_t>() != counts.size()) {
      throw Error(ErrorKind::kFormat, "usage log size field disagrees with counts");
    }
    return counts;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, "malformed usage log: " + std::string(e.what()));
  }
}

}  // namespace gstok
