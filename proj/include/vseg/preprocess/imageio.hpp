#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "vseg/raster.hpp"

namespace vseg::io {

/// Reads PNG (8/16-bit gray, gray+alpha, RGB, RGBA, palette) or binary/ASCII
/// netpbm (P2, P3, P5, P6). Alpha is dropped; 16-bit samples are reduced to
/// their high byte. Throws DataError on unreadable or unsupported files.
RasterImage read_image(const std::filesystem::path& path);

/// Width/height without decoding pixel data.
struct ImageSize {
  int width = 0;
  int height = 0;
};
ImageSize probe_size(const std::filesystem::path& path);

/// 8-bit PNG; channels 1 or 3.
void write_png(const std::filesystem::path& path, const RasterImage& image);

/// 16-bit grayscale PNG.
void write_png16(const std::filesystem::path& path, int width, int height,
                 const std::vector<std::uint16_t>& samples);

/// Binary netpbm: P5 for one channel, P6 for three.
void write_pnm(const std::filesystem::path& path, const RasterImage& image);

/// Gray image whose samples are all 0 or all in {0, v} for one v > 0 (first
/// channel only) → mask. Any other sample set throws DataError.
BinaryMask to_mask(const RasterImage& image);
/// Nonzero test on the first channel; used for FOV masks and anti-aliased GIF
/// conversions where only "inside" vs "outside" matters.
BinaryMask threshold_mask(const RasterImage& image, std::uint8_t level = 128);
RasterImage from_mask(const BinaryMask& mask);

}  // namespace vseg::io
