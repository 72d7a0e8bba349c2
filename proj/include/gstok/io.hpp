#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "gstok/codebook.hpp"
#include "gstok/feature_map.hpp"
#include "gstok/gaussian.hpp"

namespace gstok {

// .gsq layout, all little-endian:
//   "GSQ1" | u32 K | u32 D | u32 h | u32 w | f32 cutoff | u32 flags
//   K x (f32 mu_x / w, f32 mu_y / h, f32 theta in [0, pi), f32 s1, f32 s2,
//        D x f32 zeta)
//   if flags bit 0: K x u32 codebook index
//
// .gcb layout: "GCB1" | u32 N | u32 D | N x D f32

inline constexpr std::uint32_t kGsqHasIndices = 1u;
inline constexpr std::size_t kGsqHeaderBytes = 28;
inline constexpr std::size_t kGcbHeaderBytes = 12;

struct GsqModel {
  GaussianSet set;
  double cutoff = kDefaultCutoff;
  std::optional<std::vector<std::uint32_t>> indices;
};

std::vector<std::uint8_t> encode_gsq(const GsqModel& model);
GsqModel decode_gsq(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_gcb(const Codebook& book);
Codebook decode_gcb(std::span<const std::uint8_t> bytes);

/// Replaces each Gaussian's zeta with its indexed codeword. Throws kShape on a
/// dimension mismatch and kFormat on an out-of-range index.
GaussianSet apply_codebook(const GsqModel& model, const Codebook& book);

/// Splats a decoded model on an (height x width) grid using the stored
/// cutoff. A model carrying indices needs the codebook. Sizes other than the
/// stored map size go through rescale().
FeatureMap render_model(const GsqModel& model, const Codebook* book,
                        std::size_t height, std::size_t width);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file, then renames over the destination.
void write_file_atomic(const std::filesystem::path& path,
                       std::span<const std::uint8_t> bytes);

/// Loads a PNG as an H x W x 3 map in [0, 1] (8-bit peak 255, 16-bit peak
/// 65535). Gray images are replicated to three channels; alpha is dropped.
FeatureMap read_png(const std::filesystem::path& path);

/// Clamps to [0, 1], scales by 255 and rounds half to even.
std::vector<std::uint8_t> to_rgb8(const FeatureMap& rgb);
/// What read_png returns for a file written by write_png(rgb).
FeatureMap quantize_rgb8(const FeatureMap& rgb);
void write_png(const std::filesystem::path& path, const FeatureMap& rgb);

/// Codebook usage log: {"codebook_size": N, "counts": [...]} as JSON.
void write_usage_log(const std::filesystem::path& path,
                     const std::vector<std::uint64_t>& counts);
std::vector<std::uint64_t> read_usage_log(const std::filesystem::path& path);

}  // namespace gstok
