#pragma once

#include <filesystem>
#include <iosfwd>

#include "vseg/dataio/checkpoint.hpp"
#include "vseg/raster.hpp"

namespace vseg::cli {

enum ExitCode : int {
  kOk = 0,
  kConfigError = 1,
  kDataError = 2,
  kNumericError = 3,
  kInternalError = 4,
};

/// Entry point of the `vseg` tool. Data goes to `out`, diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Full-resolution head probabilities at the image's native size: prepare ->
/// network -> bilinear resize back.
RealRaster predict_probability(const data::Checkpoint& ckpt, const RasterImage& image);

}  // namespace vseg::cli
