#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <string_view>
#include <utility>

#include "vseg/gradcore/tensor.hpp"
#include "vseg/raster.hpp"

namespace vseg::prep {

/// Rec.601 luma, rounded: (299 R + 587 G + 114 B + 500) / 1000.
RasterImage to_grayscale(const RasterImage& image);

struct ClaheConfig {
  int tiles_x = 8;
  int tiles_y = 8;
  /// Bin ceiling as a multiple of the mean bin height (tile_pixels / 256).
  /// Infinity disables clipping.
  double clip_limit = 2.0;
};

using Histogram = std::array<std::uint32_t, 256>;

/// Histogram with every bin clipped at max(1, floor(clip_limit * pixels / 256))
/// and the clipped excess spread back over all bins: excess / 256 to each bin,
/// the remainder one count per bin at a fixed stride starting at bin 0. The
/// total count is preserved exactly.
Histogram clipped_histogram(std::span<const std::uint8_t> pixels, double clip_limit);

/// Equalization mapping from a histogram:
///   lut[v] = round(255 * (cdf[v] - cdf_min) / (total - cdf_min))
/// where cdf_min is the cdf at the first occupied bin. A histogram with a
/// single occupied bin maps every value to itself.
std::array<std::uint8_t, 256> equalization_lut(const Histogram& hist);

/// Contrast-limited adaptive histogram equalization on a 1-channel image.
/// Each pixel blends the mappings of the (up to) four nearest tile centres
/// bilinearly. Throws ConfigError for a tile grid finer than the image.
RasterImage clahe(const RasterImage& gray, const ClaheConfig& config = {});

struct PrepareConfig {
  ClaheConfig clahe;
  int height = 512;
  int width = 512;
};

/// grayscale -> CLAHE -> bilinear resize -> [0, 1]; shape (1, 1, height, width).
grad::Tensor prepare(const RasterImage& image, const PrepareConfig& config = {});

/// Nearest-neighbour (half-pixel centres) resize of a mask to (1, 1, height, width)
/// holding 0/1 values.
grad::Tensor prepare_mask(const BinaryMask& mask, int height, int width);

enum class AugmentationOp { identity, rotate90, rotate180, rotate270, flip_h, flip_v, transpose };

inline constexpr std::array<AugmentationOp, 7> kAllAugmentations = {
    AugmentationOp::identity, AugmentationOp::rotate90, AugmentationOp::rotate180,
    AugmentationOp::rotate270, AugmentationOp::flip_h,  AugmentationOp::flip_v,
    AugmentationOp::transpose};

std::string_view to_string(AugmentationOp op);

/// Exact pixel permutations. rotate90 turns the image clockwise
/// (out[y][x] = in[H-1-x][y]); flip_h mirrors left-right; transpose swaps axes.
/// Applied to every (batch, channel) plane of a tensor.
grad::Tensor apply(AugmentationOp op, const grad::Tensor& t);
BinaryMask apply(AugmentationOp op, const BinaryMask& mask);

/// Same permutation applied to an image tensor (1 batch item) and its mask.
std::pair<grad::Tensor, BinaryMask> augment(const grad::Tensor& image, const BinaryMask& mask,
                                            AugmentationOp op);

}  // namespace vseg::prep
