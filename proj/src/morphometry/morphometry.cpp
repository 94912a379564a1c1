#include "vseg/morphometry/morphometry.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>

#include "vseg/error.hpp"

namespace vseg::morph {

namespace {

// Neighbours P2..P9 clockwise from north.
constexpr int kDx[8] = {0, 1, 1, 1, 0, -1, -1, -1};
constexpr int kDy[8] = {-1, -1, 0, 1, 1, 1, 0, -1};

// Labels 8-connected components of `mask`; background gets -1.
std::vector<int> label_components(const BinaryMask& mask, int& count) {
  const int w = mask.width();
  const int h = mask.height();
  std::vector<int> label(mask.size(), -1);
  std::vector<std::size_t> stack;
  count = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask.at_index(i) || label[i] >= 0) continue;
    label[i] = count;
    stack.push_back(i);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const int px = static_cast<int>(p % w);
      const int py = static_cast<int>(p / w);
      for (int k = 0; k < 8; ++k) {
        const int nx = px + kDx[k];
        const int ny = py + kDy[k];
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        const std::size_t q = static_cast<std::size_t>(ny) * w + nx;
        if (mask.at_index(q) && label[q] < 0) {
          label[q] = count;
          stack.push_back(q);
        }
      }
    }
    ++count;
  }
  return label;
}

bool thinning_subpass(BinaryMask& img, bool first) {
  const int w = img.width();
  const int h = img.height();
  std::vector<std::size_t> candidates;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!img(x, y)) continue;
      bool p[8];
      int b = 0;
      for (int k = 0; k < 8; ++k) {
        p[k] = img.get(x + kDx[k], y + kDy[k]);
        b += p[k];
      }
      if (b < 2 || b > 6) continue;
      int a = 0;
      for (int k = 0; k < 8; ++k) a += !p[k] && p[(k + 1) % 8];
      if (a != 1) continue;
      // p[0]=P2 (N), p[2]=P4 (E), p[4]=P6 (S), p[6]=P8 (W)
      const bool keep = first ? (p[0] && p[2] && p[4]) || (p[2] && p[4] && p[6])
                              : (p[0] && p[2] && p[6]) || (p[0] && p[4] && p[6]);
      if (!keep) candidates.push_back(static_cast<std::size_t>(y) * w + x);
    }
  }
  if (candidates.empty()) return false;

  int components = 0;
  const std::vector<int> label = label_components(img, components);
  std::vector<std::size_t> survivors(components, 0);
  std::vector<char> doomed(img.size(), 0);
  for (std::size_t c : candidates) doomed[c] = 1;
  for (std::size_t i = 0; i < img.size(); ++i) {
    if (img.at_index(i) && !doomed[i]) ++survivors[label[i]];
  }
  std::vector<char> spared(components, 0);
  for (std::size_t c : candidates) {
    const int l = label[c];
    if (survivors[l] == 0 && !spared[l]) {
      spared[l] = 1;  // candidates are in row-major order
      continue;
    }
    img.set_index(c, false);
  }
  return true;
}

}  // namespace

BinaryMask skeletonize(const BinaryMask& mask) {
  BinaryMask img = mask;
  for (;;) {
    const std::size_t before = img.count();
    thinning_subpass(img, true);
    thinning_subpass(img, false);
    if (img.count() == before) break;
  }
  return img;
}

std::vector<std::int64_t> squared_distance_to(const BinaryMask& sites) {
  const int w = sites.width();
  const int h = sites.height();
  if (!sites.any()) throw DataError("distance transform: no site pixels");
  const std::int64_t inf = static_cast<std::int64_t>(w) + h;

  // Phase 1: vertical distance to the nearest site in each column.
  std::vector<std::int64_t> g(sites.size());
  for (int x = 0; x < w; ++x) {
    std::int64_t d = inf;
    for (int y = 0; y < h; ++y) {
      d = sites(x, y) ? 0 : std::min(inf, d + 1);
      g[static_cast<std::size_t>(y) * w + x] = d;
    }
    for (int y = h - 2; y >= 0; --y) {
      auto& here = g[static_cast<std::size_t>(y) * w + x];
      here = std::min(here, g[static_cast<std::size_t>(y + 1) * w + x] + 1);
    }
  }

  // Phase 2: lower envelope of the parabolas (x - i)^2 + g(i)^2 along rows.
  std::vector<std::int64_t> out(sites.size());
  std::vector<int> s(w);
  std::vector<std::int64_t> t(w);
  std::vector<std::int64_t> row(w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) row[x] = g[static_cast<std::size_t>(y) * w + x];
    const auto f = [&](std::int64_t x, int i) { return (x - i) * (x - i) + row[i] * row[i]; };
    // First x at which parabola u is no worse than parabola i (i < u).
    const auto sep = [&](int i, int u) {
      const std::int64_t num =
          static_cast<std::int64_t>(u) * u - static_cast<std::int64_t>(i) * i + row[u] * row[u] -
          row[i] * row[i];
      const std::int64_t den = 2 * static_cast<std::int64_t>(u - i);
      return num >= 0 ? num / den : -((-num + den - 1) / den);
    };
    int q = 0;
    s[0] = 0;
    t[0] = 0;
    for (int u = 1; u < w; ++u) {
      while (q >= 0 && f(t[q], s[q]) > f(t[q], u)) --q;
      if (q < 0) {
        q = 0;
        s[0] = u;
      } else {
        const std::int64_t start = 1 + sep(s[q], u);
        if (start < w) {
          ++q;
          s[q] = u;
          t[q] = start;
        }
      }
    }
    for (int x = w - 1; x >= 0; --x) {
      out[static_cast<std::size_t>(y) * w + x] = f(x, s[q]);
      if (x == t[q]) --q;
    }
  }
  return out;
}

RealRaster edt_to_skeleton(const BinaryMask& domain, const BinaryMask& skeleton) {
  if (domain.width() != skeleton.width() || domain.height() != skeleton.height()) {
    throw ShapeError(domain.width() != skeleton.width() ? "width" : "height",
                     "edt_to_skeleton: domain and skeleton sizes differ");
  }
  RealRaster out(skeleton.width(), skeleton.height());
  if (!skeleton.any()) {
    if (domain.any()) throw DataError("edt_to_skeleton: empty skeleton for a non-empty mask");
    std::fill(out.values.begin(), out.values.end(), std::numeric_limits<double>::infinity());
    return out;
  }
  const std::vector<std::int64_t> sq = squared_distance_to(skeleton);
  for (std::size_t i = 0; i < sq.size(); ++i) out.values[i] = std::sqrt(static_cast<double>(sq[i]));
  return out;
}

BinaryMask extract_contour(const BinaryMask& mask) {
  BinaryMask out(mask.width(), mask.height());
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      const bool inner = mask.get(x - 1, y) && mask.get(x + 1, y) && mask.get(x, y - 1) &&
                         mask.get(x, y + 1);
      out.set(x, y, !inner);
    }
  }
  return out;
}

WidthResult width_map(const BinaryMask& mask) {
  WidthResult r;
  r.widths = RealRaster(mask.width(), mask.height());
  r.skeleton = skeletonize(mask);
  r.contour = extract_contour(mask);
  if (!mask.any()) return r;
  const std::vector<std::int64_t> sq = squared_distance_to(r.skeleton);
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!r.contour(x, y)) continue;
      const double d = std::sqrt(static_cast<double>(sq[static_cast<std::size_t>(y) * mask.width() + x]));
      r.widths(x, y) = 2.0 * d + 1.0;
      r.samples.push_back({x, y, r.widths(x, y)});
    }
  }
  return r;
}

void write_width_csv(std::ostream& out, const std::vector<WidthSample>& samples) {
  out << "x,y,width\n";
  char buf[64];
  for (const WidthSample& s : samples) {
    const auto res = std::to_chars(buf, buf + sizeof buf, s.width);
    out << s.x << ',' << s.y << ',' << std::string_view(buf, res.ptr - buf) << '\n';
  }
}

void write_width_csv(const std::filesystem::path& path, const std::vector<WidthSample>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  write_width_csv(out, samples);
  if (!out) throw DataError("failed writing " + path.string());
}

std::vector<std::uint16_t> centipixel_samples(const RealRaster& widths) {
  std::vector<std::uint16_t> out(widths.values.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = std::round(widths.values[i] * 100.0);
    out[i] = static_cast<std::uint16_t>(std::clamp(v, 0.0, 65535.0));
  }
  return out;
}

RasterImage width_overlay(const RasterImage& base, const RealRaster& widths) {
  if (base.width != widths.width || base.height != widths.height) {
    throw ShapeError(base.width != widths.width ? "width" : "height",
                     "width_overlay: base image and width map sizes differ");
  }
  if (base.channels != 1 && base.channels != 3) {
    throw DataError("width_overlay: base image must be gray or RGB");
  }
  RasterImage out(base.width, base.height, 3);
  double widest = 0.0;
  for (double v : widths.values) widest = std::max(widest, v);
  for (int y = 0; y < base.height; ++y) {
    for (int x = 0; x < base.width; ++x) {
      const double v = widths(x, y);
      if (v > 0.0) {
        const double t = widest > 1.0 ? (v - 1.0) / (widest - 1.0) : 0.0;
        out.at(x, y, 0) = static_cast<std::uint8_t>(std::lround(255.0 * t));
        out.at(x, y, 1) = 64;
        out.at(x, y, 2) = static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - t)));
      } else {
        for (int c = 0; c < 3; ++c) out.at(x, y, c) = base.at(x, y, base.channels == 3 ? c : 0);
      }
    }
  }
  return out;
}

}  // namespace vseg::morph
