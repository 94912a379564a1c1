#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "vseg/raster.hpp"

namespace vseg::morph {

/// Two-subpass Zhang-Suen thinning with out-of-bounds neighbours treated as
/// background. Iterates until a full pass removes nothing. When a subpass
/// would delete every pixel of an 8-connected component (the 2x2 block case)
/// the component's first pixel in row-major order is kept.
BinaryMask skeletonize(const BinaryMask& mask);

/// Exact squared Euclidean distance from every pixel to the nearest set pixel
/// of `sites`, row-major. Meijster's separable two-phase algorithm in integer
/// arithmetic. Requires at least one site.
std::vector<std::int64_t> squared_distance_to(const BinaryMask& sites);

/// sqrt of squared_distance_to(skeleton). Throws DataError when the skeleton
/// is empty but the domain is not; with both empty every distance is +inf.
RealRaster edt_to_skeleton(const BinaryMask& domain, const BinaryMask& skeleton);

/// Foreground pixels with at least one 4-neighbour in the background or
/// outside the raster.
BinaryMask extract_contour(const BinaryMask& mask);

struct WidthSample {
  int x = 0;
  int y = 0;
  double width = 0.0;
};

struct WidthResult {
  RealRaster widths;  // 2 d + 1 on contour pixels, 0 elsewhere
  BinaryMask skeleton;
  BinaryMask contour;
  std::vector<WidthSample> samples;  // contour pixels, row-major
};

WidthResult width_map(const BinaryMask& mask);

/// Header "x,y,width", then one row per sample.
void write_width_csv(std::ostream& out, const std::vector<WidthSample>& samples);
void write_width_csv(const std::filesystem::path& path, const std::vector<WidthSample>& samples);

/// Widths in hundredths of a pixel, rounded and saturated at 65535.
std::vector<std::uint16_t> centipixel_samples(const RealRaster& widths);

/// RGB copy of `base` (gray or RGB, same size) with contour pixels coloured by
/// width on a blue (thin) to red (thick) ramp.
RasterImage width_overlay(const RasterImage& base, const RealRaster& widths);

}  // namespace vseg::morph
