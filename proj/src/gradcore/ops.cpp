#include <algorithm>
#include <cfloat>
#include <cmath>
#include <memory>

#include "vseg/error.hpp"
#include "vseg/gradcore/ops.hpp"

namespace vseg::grad {

BatchNormState BatchNormState::fresh(int channels) {
  BatchNormState s;
  s.running_mean.assign(static_cast<std::size_t>(channels), 0.0f);
  s.running_var.assign(static_cast<std::size_t>(channels), 1.0f);
  return s;
}

BatchNormResult batch_norm(Tape& tape, const Var& x, const Var& gamma, const Var& beta,
                           const BatchNormState& state, bool training) {
  const Shape s = x.shape();
  if (s.h == 0) throw ShapeError("height", "batch_norm: zero-size spatial extent");
  if (s.w == 0) throw ShapeError("width", "batch_norm: zero-size spatial extent");
  if (s.n == 0) throw ShapeError("batch", "batch_norm: empty batch");
  const Shape param{1, s.c, 1, 1};
  if (!(gamma.shape() == param) || !(beta.shape() == param) ||
      state.running_mean.size() != static_cast<std::size_t>(s.c) ||
      state.running_var.size() != static_cast<std::size_t>(s.c)) {
    throw ShapeError("channels", "batch_norm: parameters do not match " + std::to_string(s.c) +
                                     " input channels");
  }

  const std::size_t plane = s.plane();
  const double count = static_cast<double>(plane) * s.n;
  std::vector<float> mean(s.c);
  std::vector<float> inv_std(s.c);
  BatchNormState next = state;

  for (int c = 0; c < s.c; ++c) {
    if (training) {
      double acc = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const float* p = x.value().plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      }
      const double mu = acc / count;
      double sq = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const float* p = x.value().plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = p[i] - mu;
          sq += d * d;
        }
      }
      const double var = sq / count;
      mean[c] = static_cast<float>(mu);
      inv_std[c] = static_cast<float>(1.0 / std::sqrt(var + state.eps));
      next.running_mean[c] = static_cast<float>(state.momentum * state.running_mean[c] +
                                                (1.0 - state.momentum) * mu);
      next.running_var[c] = static_cast<float>(state.momentum * state.running_var[c] +
                                               (1.0 - state.momentum) * var);
    } else {
      mean[c] = state.running_mean[c];
      inv_std[c] = static_cast<float>(1.0 / std::sqrt(static_cast<double>(state.running_var[c]) +
                                                       state.eps));
    }
  }

  Tensor out(s);
  const float* g = gamma.value().data();
  const float* b = beta.value().data();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const float* p = x.value().plane(n, c);
      float* q = out.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) q[i] = g[c] * ((p[i] - mean[c]) * inv_std[c]) + b[c];
    }
  }

  Var y = tape.record(std::move(out), {x, gamma, beta},
                      [x, gamma, mean, inv_std, training, count](const Tensor& dy, GradSink& sink) {
    const Shape s = x.shape();
    const std::size_t plane = s.plane();
    const float* g = gamma.value().data();
    for (int c = 0; c < s.c; ++c) {
      double sum_dy = 0.0;
      double sum_dy_xhat = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const float* p = x.value().plane(n, c);
        const float* d = dy.plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) {
          const double xhat = (p[i] - mean[c]) * inv_std[c];
          sum_dy += d[i];
          sum_dy_xhat += d[i] * xhat;
        }
      }
      if (sink.wants(1)) sink.slot(1).data()[c] += static_cast<float>(sum_dy_xhat);
      if (sink.wants(2)) sink.slot(2).data()[c] += static_cast<float>(sum_dy);
      if (!sink.wants(0)) continue;
      Tensor& dx = sink.slot(0);
      const double scale = static_cast<double>(g[c]) * inv_std[c];
      for (int n = 0; n < s.n; ++n) {
        const float* p = x.value().plane(n, c);
        const float* d = dy.plane(n, c);
        float* q = dx.plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) {
          if (training) {
            const double xhat = (p[i] - mean[c]) * inv_std[c];
            q[i] += static_cast<float>(scale / count *
                                       (count * d[i] - sum_dy - xhat * sum_dy_xhat));
          } else {
            q[i] += static_cast<float>(scale * d[i]);
          }
        }
      }
    }
  });
  return {std::move(y), std::move(next)};
}

Var relu(Tape& tape, const Var& x) {
  auto out = std::make_shared<Tensor>(x.shape());
  const float* p = x.value().data();
  float* q = out->data();
  for (std::size_t i = 0; i < out->size(); ++i) q[i] = p[i] > 0.0f ? p[i] : 0.0f;
  std::shared_ptr<const Tensor> saved = out;
  return tape.record(saved, {x}, [saved](const Tensor& dy, GradSink& sink) {
    float* dx = sink.slot(0).data();
    const float* y = saved->data();
    for (std::size_t i = 0; i < dy.size(); ++i) {
      if (y[i] > 0.0f) dx[i] += dy.data()[i];
    }
  });
}

Var sigmoid(Tape& tape, const Var& x) {
  constexpr float kMaxExponent = 88.0f;
  const float hi = std::nextafter(1.0f, 0.0f);
  auto out = std::make_shared<Tensor>(x.shape());
  const float* p = x.value().data();
  float* q = out->data();
  for (std::size_t i = 0; i < out->size(); ++i) {
    const float z = std::clamp(p[i], -kMaxExponent, kMaxExponent);
    q[i] = std::clamp(1.0f / (1.0f + std::exp(-z)), FLT_MIN, hi);
  }
  std::shared_ptr<const Tensor> saved = out;
  return tape.record(saved, {x}, [saved](const Tensor& dy, GradSink& sink) {
    float* dx = sink.slot(0).data();
    const float* y = saved->data();
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy.data()[i] * y[i] * (1.0f - y[i]);
  });
}

Var downsample2x(Tape& tape, const Var& x) {
  const Shape s = x.shape();
  if (s.h % 2 != 0) {
    throw ShapeError("height", "downsample2x: odd height " + std::to_string(s.h) +
                                   "; pad the input to an even size first");
  }
  if (s.w % 2 != 0) {
    throw ShapeError("width", "downsample2x: odd width " + std::to_string(s.w) +
                                  "; pad the input to an even size first");
  }
  const Shape os{s.n, s.c, s.h / 2, s.w / 2};
  Tensor out(os);
  // Flat input offset of the winning element for each output element.
  auto argmax = std::make_shared<std::vector<std::size_t>>(os.numel());
  std::size_t k = 0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int y = 0; y < os.h; ++y) {
        for (int xo = 0; xo < os.w; ++xo, ++k) {
          std::size_t best = x.value().offset(n, c, 2 * y, 2 * xo);
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const std::size_t at = x.value().offset(n, c, 2 * y + dy, 2 * xo + dx);
              if (x.value().data()[at] > x.value().data()[best]) best = at;
            }
          }
          (*argmax)[k] = best;
          out.data()[k] = x.value().data()[best];
        }
      }
    }
  }
  return tape.record(std::move(out), {x}, [argmax](const Tensor& dy, GradSink& sink) {
    float* dx = sink.slot(0).data();
    for (std::size_t i = 0; i < dy.size(); ++i) dx[(*argmax)[i]] += dy.data()[i];
  });
}

namespace {

struct AxisTable {
  std::vector<int> lo;
  std::vector<int> hi;
  std::vector<float> frac;
};

AxisTable axis_table(int in, int out) {
  AxisTable t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.frac.resize(out);
  const double scale = static_cast<double>(in) / out;
  for (int d = 0; d < out; ++d) {
    const double src = std::clamp((d + 0.5) * scale - 0.5, 0.0, static_cast<double>(in - 1));
    const int i0 = static_cast<int>(std::floor(src));
    t.lo[d] = i0;
    t.hi[d] = std::min(i0 + 1, in - 1);
    t.frac[d] = static_cast<float>(src - i0);
  }
  return t;
}

}  // namespace

Var resize_bilinear(Tape& tape, const Var& x, int out_h, int out_w) {
  if (out_h < 1) throw ShapeError("height", "resize_bilinear: output height must be >= 1");
  if (out_w < 1) throw ShapeError("width", "resize_bilinear: output width must be >= 1");
  const Shape s = x.shape();
  if (s.h < 1 || s.w < 1) throw ShapeError("height", "resize_bilinear: empty input");
  auto ty = std::make_shared<const AxisTable>(axis_table(s.h, out_h));
  auto tx = std::make_shared<const AxisTable>(axis_table(s.w, out_w));

  Tensor out({s.n, s.c, out_h, out_w});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const float* p = x.value().plane(n, c);
      float* q = out.plane(n, c);
      for (int y = 0; y < out_h; ++y) {
        const float* r0 = p + static_cast<std::size_t>(ty->lo[y]) * s.w;
        const float* r1 = p + static_cast<std::size_t>(ty->hi[y]) * s.w;
        const float fy = ty->frac[y];
        for (int xo = 0; xo < out_w; ++xo) {
          const int x0 = tx->lo[xo];
          const int x1 = tx->hi[xo];
          const float fx = tx->frac[xo];
          // a + f * (b - a) keeps constant regions exact.
          const float top = r0[x0] + fx * (r0[x1] - r0[x0]);
          const float bottom = r1[x0] + fx * (r1[x1] - r1[x0]);
          q[static_cast<std::size_t>(y) * out_w + xo] = top + fy * (bottom - top);
        }
      }
    }
  }
  return tape.record(std::move(out), {x}, [ty, tx, s, out_h, out_w](const Tensor& dy, GradSink& sink) {
    Tensor& dx = sink.slot(0);
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const float* d = dy.plane(n, c);
        float* q = dx.plane(n, c);
        for (int y = 0; y < out_h; ++y) {
          float* r0 = q + static_cast<std::size_t>(ty->lo[y]) * s.w;
          float* r1 = q + static_cast<std::size_t>(ty->hi[y]) * s.w;
          const float fy = ty->frac[y];
          for (int xo = 0; xo < out_w; ++xo) {
            const float g = d[static_cast<std::size_t>(y) * out_w + xo];
            const int x0 = tx->lo[xo];
            const int x1 = tx->hi[xo];
            const float fx = tx->frac[xo];
            r0[x0] += (1.0f - fy) * (1.0f - fx) * g;
            r0[x1] += (1.0f - fy) * fx * g;
            r1[x0] += fy * (1.0f - fx) * g;
            r1[x1] += fy * fx * g;
          }
        }
      }
    }
  });
}

namespace {

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  const char* axis = a.n != b.n ? "batch" : a.c != b.c ? "channels" : a.h != b.h ? "height"
                     : a.w != b.w ? "width" : nullptr;
  if (axis) {
    throw ShapeError(axis, std::string(op) + ": shape mismatch " + to_string(a) + " vs " +
                               to_string(b));
  }
}

}  // namespace

Var add(Tape& tape, const Var& a, const Var& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor out(a.shape());
  const float* p = a.value().data();
  const float* q = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = p[i] + q[i];
  return tape.record(std::move(out), {a, b}, [](const Tensor& dy, GradSink& sink) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!sink.wants(k)) continue;
      float* d = sink.slot(k).data();
      for (std::size_t i = 0; i < dy.size(); ++i) d[i] += dy.data()[i];
    }
  });
}

Var concat_channels(Tape& tape, std::span<const Var> xs) {
  if (xs.empty()) throw ShapeError("channels", "concat_channels: no inputs");
  const Shape first = xs.front().shape();
  int channels = 0;
  for (const Var& v : xs) {
    const Shape s = v.shape();
    const char* axis = s.n != first.n ? "batch" : s.h != first.h ? "height"
                       : s.w != first.w ? "width" : nullptr;
    if (axis) {
      throw ShapeError(axis, "concat_channels: " + to_string(s) + " incompatible with " +
                                 to_string(first));
    }
    channels += s.c;
  }
  const Shape os{first.n, channels, first.h, first.w};
  Tensor out(os);
  const std::size_t plane = first.plane();
  for (int n = 0; n < os.n; ++n) {
    int c0 = 0;
    for (const Var& v : xs) {
      const std::size_t len = static_cast<std::size_t>(v.shape().c) * plane;
      std::copy_n(v.value().plane(n, 0), len, out.plane(n, c0));
      c0 += v.shape().c;
    }
  }
  std::vector<int> widths;
  for (const Var& v : xs) widths.push_back(v.shape().c);
  return tape.record(std::move(out), std::vector<Var>(xs.begin(), xs.end()),
                     [widths, os](const Tensor& dy, GradSink& sink) {
    const std::size_t plane = os.plane();
    for (int n = 0; n < os.n; ++n) {
      int c0 = 0;
      for (std::size_t k = 0; k < widths.size(); ++k) {
        if (sink.wants(k)) {
          const float* src = dy.plane(n, c0);
          float* dst = sink.slot(k).plane(n, 0);
          const std::size_t len = static_cast<std::size_t>(widths[k]) * plane;
          for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
        }
        c0 += widths[k];
      }
    }
  });
}

Var sum(Tape& tape, const Var& x) {
  double acc = 0.0;
  for (float v : x.value().values()) acc += v;
  return tape.record(Tensor::scalar(static_cast<float>(acc)), {x},
                     [](const Tensor& dy, GradSink& sink) {
    const float g = dy.item();
    for (float& d : sink.slot(0).values()) d += g;
  });
}

Var half_sum_squares(Tape& tape, const Var& x) {
  return tape.record(Tensor::scalar(static_cast<float>(0.5 * squared_norm(x.value()))), {x},
                     [x](const Tensor& dy, GradSink& sink) {
    const float g = dy.item();
    float* d = sink.slot(0).data();
    const float* p = x.value().data();
    for (std::size_t i = 0; i < x.value().size(); ++i) d[i] += g * p[i];
  });
}

}  // namespace vseg::grad
