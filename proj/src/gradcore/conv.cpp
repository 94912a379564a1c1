#include <cblas.h>

#include <algorithm>
#include <cstring>
#include <vector>

#include "vseg/error.hpp"
#include "vseg/gradcore/ops.hpp"

namespace vseg::grad {
namespace {

// Upper bound on the im2col scratch buffer, in floats (32 MiB).
constexpr std::size_t kColumnBudget = std::size_t{1} << 23;

struct Geometry {
  int n, c, h, w;
  int o, kh, kw;
  int dilation, stride;
  int pad_h, pad_w;
  int out_h, out_w;

  int patch() const { return c * kh * kw; }
  int out_plane() const { return out_h * out_w; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1; }
  int rows_per_chunk() const {
    const std::size_t per_row = static_cast<std::size_t>(patch()) * out_w;
    return static_cast<int>(std::clamp<std::size_t>(kColumnBudget / std::max<std::size_t>(per_row, 1), 1,
                                                    static_cast<std::size_t>(out_h)));
  }
};

Geometry make_geometry(const Shape& x, const Shape& k, const Shape& b, const ConvSpec& spec) {
  if (spec.dilation < 1) throw ShapeError("dilation", "dilation rate must be >= 1");
  if (spec.stride < 1) throw ShapeError("stride", "stride must be >= 1");
  if (x.c != k.c) {
    throw ShapeError("channels", "conv2d: input has " + std::to_string(x.c) +
                                     " channels but kernel expects " + std::to_string(k.c));
  }
  if (k.h % 2 == 0) throw ShapeError("kernel_h", "conv2d: kernel height must be odd");
  if (k.w % 2 == 0) throw ShapeError("kernel_w", "conv2d: kernel width must be odd");
  if (!(b == Shape{1, k.n, 1, 1})) {
    throw ShapeError("bias", "conv2d: bias shape " + to_string(b) + " does not match " +
                                 std::to_string(k.n) + " output channels");
  }
  if (x.h < 1) throw ShapeError("height", "conv2d: empty input height");
  if (x.w < 1) throw ShapeError("width", "conv2d: empty input width");

  Geometry g{};
  g.n = x.n;
  g.c = x.c;
  g.h = x.h;
  g.w = x.w;
  g.o = k.n;
  g.kh = k.h;
  g.kw = k.w;
  g.dilation = spec.dilation;
  g.stride = spec.stride;
  g.pad_h = (k.h - 1) * spec.dilation / 2;
  g.pad_w = (k.w - 1) * spec.dilation / 2;
  g.out_h = (x.h + 2 * g.pad_h - (k.h - 1) * spec.dilation - 1) / spec.stride + 1;
  g.out_w = (x.w + 2 * g.pad_w - (k.w - 1) * spec.dilation - 1) / spec.stride + 1;
  return g;
}

// Output columns [lo, hi) whose tap at kernel offset `tap` lands inside [0, extent).
void valid_range(int extent, int out, int stride, int pad, int tap_offset, int& lo, int& hi) {
  const int shift = tap_offset - pad;  // input = o * stride + shift
  lo = shift >= 0 ? 0 : (-shift + stride - 1) / stride;
  const int last = extent - 1 - shift;
  hi = last < 0 ? 0 : std::min(out, last / stride + 1);
  lo = std::min(lo, hi);
}

// Patch matrix for output rows [row0, row1): (patch, rows * out_w).
void im2col(const Geometry& g, const float* x, int row0, int row1, float* col) {
  const int cols = (row1 - row0) * g.out_w;
  for (int c = 0; c < g.c; ++c) {
    const float* src = x + static_cast<std::size_t>(c) * g.h * g.w;
    for (int i = 0; i < g.kh; ++i) {
      for (int j = 0; j < g.kw; ++j) {
        float* dst = col + static_cast<std::size_t>((c * g.kh + i) * g.kw + j) * cols;
        int x_lo, x_hi;
        valid_range(g.w, g.out_w, g.stride, g.pad_w, j * g.dilation, x_lo, x_hi);
        for (int oy = row0; oy < row1; ++oy, dst += g.out_w) {
          const int iy = oy * g.stride - g.pad_h + i * g.dilation;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.out_w, 0.0f);
            continue;
          }
          const float* row = src + static_cast<std::size_t>(iy) * g.w;
          std::fill(dst, dst + x_lo, 0.0f);
          const int base = -g.pad_w + j * g.dilation;
          if (g.stride == 1) {
            std::copy(row + x_lo + base, row + x_hi + base, dst + x_lo);
          } else {
            for (int ox = x_lo; ox < x_hi; ++ox) dst[ox] = row[ox * g.stride + base];
          }
          std::fill(dst + x_hi, dst + g.out_w, 0.0f);
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates the patch matrix back into the image.
void col2im(const Geometry& g, const float* col, int row0, int row1, float* x) {
  const int cols = (row1 - row0) * g.out_w;
  for (int c = 0; c < g.c; ++c) {
    float* dst = x + static_cast<std::size_t>(c) * g.h * g.w;
    for (int i = 0; i < g.kh; ++i) {
      for (int j = 0; j < g.kw; ++j) {
        const float* src = col + static_cast<std::size_t>((c * g.kh + i) * g.kw + j) * cols;
        int x_lo, x_hi;
        valid_range(g.w, g.out_w, g.stride, g.pad_w, j * g.dilation, x_lo, x_hi);
        const int base = -g.pad_w + j * g.dilation;
        for (int oy = row0; oy < row1; ++oy, src += g.out_w) {
          const int iy = oy * g.stride - g.pad_h + i * g.dilation;
          if (iy < 0 || iy >= g.h) continue;
          float* row = dst + static_cast<std::size_t>(iy) * g.w;
          for (int ox = x_lo; ox < x_hi; ++ox) row[ox * g.stride + base] += src[ox];
        }
      }
    }
  }
}

}  // namespace

Var conv2d(Tape& tape, const Var& x, const Var& kernel, const Var& bias, ConvSpec spec) {
  const Geometry g = make_geometry(x.shape(), kernel.shape(), bias.shape(), spec);
  const std::size_t in_item = static_cast<std::size_t>(g.c) * g.h * g.w;
  const std::size_t out_item = static_cast<std::size_t>(g.o) * g.out_plane();

  Tensor out({g.n, g.o, g.out_h, g.out_w});
  const float* w = kernel.value().data();
  const float* b = bias.value().data();
  const int chunk = g.rows_per_chunk();
  std::vector<float> col;
  if (!g.pointwise()) col.resize(static_cast<std::size_t>(g.patch()) * chunk * g.out_w);

  for (int n = 0; n < g.n; ++n) {
    const float* xb = x.value().data() + n * in_item;
    float* yb = out.data() + n * out_item;
    if (g.pointwise()) {
      cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, g.o, g.out_plane(), g.patch(), 1.0f,
                  w, g.patch(), xb, g.out_plane(), 0.0f, yb, g.out_plane());
    } else {
      for (int r0 = 0; r0 < g.out_h; r0 += chunk) {
        const int r1 = std::min(g.out_h, r0 + chunk);
        const int cols = (r1 - r0) * g.out_w;
        im2col(g, xb, r0, r1, col.data());
        cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, g.o, cols, g.patch(), 1.0f, w,
                    g.patch(), col.data(), cols, 0.0f, yb + static_cast<std::size_t>(r0) * g.out_w,
                    g.out_plane());
      }
    }
    for (int o = 0; o < g.o; ++o) {
      float* plane = yb + static_cast<std::size_t>(o) * g.out_plane();
      for (int p = 0; p < g.out_plane(); ++p) plane[p] += b[o];
    }
  }

  return tape.record(std::move(out), {x, kernel, bias},
                     [x, kernel, g, in_item, out_item](const Tensor& dy, GradSink& sink) {
    const bool want_x = sink.wants(0);
    const bool want_w = sink.wants(1);
    const bool want_b = sink.wants(2);
    const float* w = kernel.value().data();
    const int chunk = g.rows_per_chunk();
    std::vector<float> col;
    std::vector<float> dcol;
    if (!g.pointwise()) {
      const std::size_t size = static_cast<std::size_t>(g.patch()) * chunk * g.out_w;
      if (want_w) col.resize(size);
      if (want_x) dcol.resize(size);
    }
    float* dw = want_w ? sink.slot(1).data() : nullptr;
    float* dx = want_x ? sink.slot(0).data() : nullptr;
    std::vector<double> db(want_b ? g.o : 0, 0.0);

    for (int n = 0; n < g.n; ++n) {
      const float* xb = x.value().data() + n * in_item;
      const float* dyb = dy.data() + n * out_item;
      if (want_b) {
        for (int o = 0; o < g.o; ++o) {
          const float* plane = dyb + static_cast<std::size_t>(o) * g.out_plane();
          double acc = 0.0;
          for (int p = 0; p < g.out_plane(); ++p) acc += plane[p];
          db[o] += acc;
        }
      }
      if (g.pointwise()) {
        if (want_w) {
          cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, g.o, g.patch(), g.out_plane(), 1.0f,
                      dyb, g.out_plane(), xb, g.out_plane(), 1.0f, dw, g.patch());
        }
        if (want_x) {
          cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, g.patch(), g.out_plane(), g.o, 1.0f,
                      w, g.patch(), dyb, g.out_plane(), 1.0f, dx + n * in_item, g.out_plane());
        }
        continue;
      }
      for (int r0 = 0; r0 < g.out_h; r0 += chunk) {
        const int r1 = std::min(g.out_h, r0 + chunk);
        const int cols = (r1 - r0) * g.out_w;
        const float* dy_chunk = dyb + static_cast<std::size_t>(r0) * g.out_w;
        if (want_w) {
          im2col(g, xb, r0, r1, col.data());
          cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, g.o, g.patch(), cols, 1.0f, dy_chunk,
                      g.out_plane(), col.data(), cols, 1.0f, dw, g.patch());
        }
        if (want_x) {
          cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, g.patch(), cols, g.o, 1.0f, w,
                      g.patch(), dy_chunk, g.out_plane(), 0.0f, dcol.data(), cols);
          col2im(g, dcol.data(), r0, r1, dx + n * in_item);
        }
      }
    }
    if (want_b) {
      float* dbias = sink.slot(2).data();
      for (int o = 0; o < g.o; ++o) dbias[o] += static_cast<float>(db[o]);
    }
  });
}

}  // namespace vseg::grad
