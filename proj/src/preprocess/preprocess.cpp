#include "vseg/preprocess/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "vseg/error.hpp"
#include "vseg/gradcore/ops.hpp"

namespace vseg::prep {

using grad::Shape;
using grad::Tensor;

RasterImage to_grayscale(const RasterImage& image) {
  if (image.channels == 1) return image;
  if (image.channels != 3) {
    throw DataError("to_grayscale: unsupported channel count " + std::to_string(image.channels));
  }
  RasterImage out(image.width, image.height, 1);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    const unsigned r = image.pixels[3 * i];
    const unsigned g = image.pixels[3 * i + 1];
    const unsigned b = image.pixels[3 * i + 2];
    out.pixels[i] = static_cast<std::uint8_t>((299 * r + 587 * g + 114 * b + 500) / 1000);
  }
  return out;
}

Histogram clipped_histogram(std::span<const std::uint8_t> pixels, double clip_limit) {
  Histogram hist{};
  for (std::uint8_t v : pixels) ++hist[v];
  if (std::isinf(clip_limit)) return hist;
  if (!(clip_limit > 0.0)) throw ConfigError("clahe: clip_limit must be positive");

  const auto limit = static_cast<std::uint32_t>(
      std::max(1.0, std::floor(clip_limit * static_cast<double>(pixels.size()) / 256.0)));
  std::uint64_t excess = 0;
  for (auto& bin : hist) {
    if (bin > limit) {
      excess += bin - limit;
      bin = limit;
    }
  }
  const auto share = static_cast<std::uint32_t>(excess / 256);
  auto remainder = static_cast<std::uint32_t>(excess % 256);
  for (auto& bin : hist) bin += share;
  if (remainder > 0) {
    const std::uint32_t step = std::max<std::uint32_t>(1, 256 / remainder);
    for (std::uint32_t i = 0; i < 256 && remainder > 0; i += step, --remainder) ++hist[i];
  }
  return hist;
}

std::array<std::uint8_t, 256> equalization_lut(const Histogram& hist) {
  std::array<std::uint8_t, 256> lut{};
  std::uint64_t total = 0;
  for (auto b : hist) total += b;
  int first = 0;
  while (first < 256 && hist[first] == 0) ++first;
  if (first == 256 || hist[first] == total) {
    for (int v = 0; v < 256; ++v) lut[v] = static_cast<std::uint8_t>(v);
    return lut;
  }
  const std::uint64_t cdf_min = hist[first];
  const std::uint64_t denom = total - cdf_min;
  std::uint64_t cdf = 0;
  for (int v = 0; v < 256; ++v) {
    cdf += hist[v];
    if (v < first) continue;
    const std::uint64_t num = 255 * (cdf - cdf_min);
    lut[v] = static_cast<std::uint8_t>((2 * num + denom) / (2 * denom));
  }
  return lut;
}

namespace {

struct TileAxis {
  std::vector<int> start;   // tile boundaries, size tiles + 1
  std::vector<double> centre;
  // Per pixel: neighbouring tiles and the weight of the second.
  std::vector<int> lo;
  std::vector<int> hi;
  std::vector<double> frac;
};

TileAxis tile_axis(int extent, int tiles) {
  TileAxis a;
  for (int i = 0; i <= tiles; ++i) {
    a.start.push_back(static_cast<int>(static_cast<long long>(i) * extent / tiles));
  }
  for (int i = 0; i < tiles; ++i) a.centre.push_back((a.start[i] + a.start[i + 1] - 1) / 2.0);
  a.lo.resize(extent);
  a.hi.resize(extent);
  a.frac.resize(extent);
  int t = 0;
  for (int p = 0; p < extent; ++p) {
    while (t + 1 < tiles && a.centre[t + 1] <= p) ++t;
    if (p <= a.centre[0]) {
      a.lo[p] = a.hi[p] = 0;
      a.frac[p] = 0.0;
    } else if (t + 1 >= tiles) {
      a.lo[p] = a.hi[p] = tiles - 1;
      a.frac[p] = 0.0;
    } else {
      a.lo[p] = t;
      a.hi[p] = t + 1;
      a.frac[p] = (p - a.centre[t]) / (a.centre[t + 1] - a.centre[t]);
    }
  }
  return a;
}

}  // namespace

RasterImage clahe(const RasterImage& gray, const ClaheConfig& config) {
  if (gray.channels != 1) throw DataError("clahe: expects a single-channel image");
  if (config.tiles_x < 1 || config.tiles_y < 1) throw ConfigError("clahe: tile counts must be >= 1");
  if (gray.width < config.tiles_x || gray.height < config.tiles_y) {
    throw ConfigError("clahe: " + std::to_string(gray.width) + "x" + std::to_string(gray.height) +
                      " image is smaller than the " + std::to_string(config.tiles_x) + "x" +
                      std::to_string(config.tiles_y) + " tile grid");
  }

  const TileAxis ax = tile_axis(gray.width, config.tiles_x);
  const TileAxis ay = tile_axis(gray.height, config.tiles_y);

  std::vector<std::array<std::uint8_t, 256>> luts;
  luts.reserve(static_cast<std::size_t>(config.tiles_x) * config.tiles_y);
  std::vector<std::uint8_t> tile;
  for (int ty = 0; ty < config.tiles_y; ++ty) {
    for (int tx = 0; tx < config.tiles_x; ++tx) {
      tile.clear();
      for (int y = ay.start[ty]; y < ay.start[ty + 1]; ++y) {
        for (int x = ax.start[tx]; x < ax.start[tx + 1]; ++x) tile.push_back(gray.at(x, y));
      }
      luts.push_back(equalization_lut(clipped_histogram(tile, config.clip_limit)));
    }
  }

  RasterImage out(gray.width, gray.height, 1);
  const auto lut = [&](int tx, int ty) -> const std::array<std::uint8_t, 256>& {
    return luts[static_cast<std::size_t>(ty) * config.tiles_x + tx];
  };
  for (int y = 0; y < gray.height; ++y) {
    const double fy = ay.frac[y];
    for (int x = 0; x < gray.width; ++x) {
      const double fx = ax.frac[x];
      const std::uint8_t v = gray.at(x, y);
      const double top = (1.0 - fx) * lut(ax.lo[x], ay.lo[y])[v] + fx * lut(ax.hi[x], ay.lo[y])[v];
      const double bottom =
          (1.0 - fx) * lut(ax.lo[x], ay.hi[y])[v] + fx * lut(ax.hi[x], ay.hi[y])[v];
      const double blended = (1.0 - fy) * top + fy * bottom;
      out.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(blended), 0L, 255L));
    }
  }
  return out;
}

Tensor prepare(const RasterImage& image, const PrepareConfig& config) {
  if (config.height < 1 || config.width < 1) throw ConfigError("prepare: output size must be >= 1");
  const RasterImage eq = clahe(to_grayscale(image), config.clahe);
  Tensor native({1, 1, eq.height, eq.width});
  for (std::size_t i = 0; i < eq.pixels.size(); ++i) native.data()[i] = eq.pixels[i];

  grad::Tape tape(grad::Tape::Mode::inference);
  const grad::Var resized =
      grad::resize_bilinear(tape, grad::Tape::constant(std::move(native)), config.height, config.width);
  Tensor out = resized.value();
  for (float& v : out.values()) v = std::clamp(v / 255.0f, 0.0f, 1.0f);
  return out;
}

Tensor prepare_mask(const BinaryMask& mask, int height, int width) {
  if (height < 1 || width < 1) throw ConfigError("prepare_mask: output size must be >= 1");
  Tensor out({1, 1, height, width});
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(mask.height() - 1,
                            static_cast<int>((y + 0.5) * mask.height() / height));
    for (int x = 0; x < width; ++x) {
      const int sx = std::min(mask.width() - 1, static_cast<int>((x + 0.5) * mask.width() / width));
      out(0, 0, y, x) = mask(sx, sy) ? 1.0f : 0.0f;
    }
  }
  return out;
}

std::string_view to_string(AugmentationOp op) {
  switch (op) {
    case AugmentationOp::identity: return "identity";
    case AugmentationOp::rotate90: return "rotate90";
    case AugmentationOp::rotate180: return "rotate180";
    case AugmentationOp::rotate270: return "rotate270";
    case AugmentationOp::flip_h: return "flip_h";
    case AugmentationOp::flip_v: return "flip_v";
    case AugmentationOp::transpose: return "transpose";
  }
  return "unknown";
}

namespace {

bool swaps_axes(AugmentationOp op) {
  return op == AugmentationOp::rotate90 || op == AugmentationOp::rotate270 ||
         op == AugmentationOp::transpose;
}

// Source coordinate (sx, sy) in an h x w input for output pixel (x, y).
void source_of(AugmentationOp op, int h, int w, int x, int y, int& sx, int& sy) {
  switch (op) {
    case AugmentationOp::identity: sx = x; sy = y; return;
    case AugmentationOp::rotate90: sx = y; sy = h - 1 - x; return;
    case AugmentationOp::rotate180: sx = w - 1 - x; sy = h - 1 - y; return;
    case AugmentationOp::rotate270: sx = w - 1 - y; sy = x; return;
    case AugmentationOp::flip_h: sx = w - 1 - x; sy = y; return;
    case AugmentationOp::flip_v: sx = x; sy = h - 1 - y; return;
    case AugmentationOp::transpose: sx = y; sy = x; return;
  }
}

}  // namespace

Tensor apply(AugmentationOp op, const Tensor& t) {
  const Shape s = t.shape();
  const Shape os = swaps_axes(op) ? Shape{s.n, s.c, s.w, s.h} : s;
  Tensor out(os);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < os.h; ++y) {
        for (int x = 0; x < os.w; ++x) {
          int sx = 0, sy = 0;
          source_of(op, s.h, s.w, x, y, sx, sy);
          out(n, c, y, x) = t(n, c, sy, sx);
        }
      }
    }
  }
  return out;
}

BinaryMask apply(AugmentationOp op, const BinaryMask& mask) {
  const int h = mask.height();
  const int w = mask.width();
  BinaryMask out = swaps_axes(op) ? BinaryMask(h, w) : BinaryMask(w, h);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      int sx = 0, sy = 0;
      source_of(op, h, w, x, y, sx, sy);
      out.set(x, y, mask(sx, sy));
    }
  }
  return out;
}

std::pair<Tensor, BinaryMask> augment(const Tensor& image, const BinaryMask& mask,
                                      AugmentationOp op) {
  if (image.shape().h != mask.height()) {
    throw ShapeError("height", "augment: image height " + std::to_string(image.shape().h) +
                                   " differs from mask height " + std::to_string(mask.height()));
  }
  if (image.shape().w != mask.width()) {
    throw ShapeError("width", "augment: image width " + std::to_string(image.shape().w) +
                                  " differs from mask width " + std::to_string(mask.width()));
  }
  return {apply(op, image), apply(op, mask)};
}

}  // namespace vseg::prep
