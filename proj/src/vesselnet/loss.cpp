#include "vseg/vesselnet/loss.hpp"

#include <cmath>
#include <vector>

#include "vseg/error.hpp"

namespace vseg::net {

using grad::GradSink;
using grad::Shape;

void DiceLossConfig::validate() const {
  if (!(eps > 0.0)) throw ConfigError("loss: eps must be positive");
  if (!(lambda >= 0.0)) throw ConfigError("loss: lambda must be non-negative");
}

namespace {

void check_gt(const Tensor& gt) {
  for (float v : gt.values()) {
    if (v != 0.0f && v != 1.0f) {
      throw DataError("loss: ground truth must contain only 0 and 1, found " + std::to_string(v));
    }
  }
}

void check_pair(const Tensor& pred, const Tensor& gt) {
  const Shape& p = pred.shape();
  const Shape& g = gt.shape();
  if (p.n != g.n) throw ShapeError("batch", "loss: prediction and ground truth batch sizes differ");
  if (p.c != g.c) throw ShapeError("channels", "loss: prediction and ground truth channels differ");
  if (p.h != g.h) throw ShapeError("height", "loss: prediction and ground truth heights differ");
  if (p.w != g.w) throw ShapeError("width", "loss: prediction and ground truth widths differ");
}

struct DiceSums {
  double overlap = 0.0;  // sum G P
  double gt = 0.0;
  double pred = 0.0;
};

DiceSums sums(const float* p, const float* g, std::size_t n) {
  DiceSums s;
  for (std::size_t i = 0; i < n; ++i) {
    s.overlap += static_cast<double>(g[i]) * p[i];
    s.gt += g[i];
    s.pred += p[i];
  }
  return s;
}

double ratio(const DiceSums& s, double eps) { return (2.0 * s.overlap + eps) / (s.gt + s.pred + eps); }

}  // namespace

double soft_dice_term(const Tensor& pred, const Tensor& gt, double eps) {
  check_pair(pred, gt);
  check_gt(gt);
  return 1.0 - ratio(sums(pred.data(), gt.data(), pred.size()), eps);
}

double soft_dice(const Tensor& pred, const Tensor& gt, int batch_index, double eps) {
  check_pair(pred, gt);
  check_gt(gt);
  const Shape& s = pred.shape();
  if (batch_index < 0 || batch_index >= s.n) throw ShapeError("batch", "soft_dice: index out of range");
  const std::size_t item = static_cast<std::size_t>(s.c) * s.plane();
  return ratio(sums(pred.plane(batch_index, 0), gt.plane(batch_index, 0), item), eps);
}

LossResult dice_loss(Tape& tape, std::span<const Var> maps, const Tensor& gt,
                     std::span<const Var> kernels, const DiceLossConfig& config) {
  config.validate();
  check_gt(gt);
  LossResult out;
  if (maps.size() != kNumScales) {
    throw ShapeError("scales", "loss: expected " + std::to_string(kNumScales) + " prediction maps");
  }

  std::vector<DiceSums> scale_sums;
  for (std::size_t m = 0; m < maps.size(); ++m) {
    check_pair(maps[m].value(), gt);
    scale_sums.push_back(sums(maps[m].value().data(), gt.data(), gt.size()));
    out.scale_terms[m] = 1.0 - ratio(scale_sums.back(), config.eps);
    out.value += out.scale_terms[m];
  }
  double sq = 0.0;
  for (const Var& k : kernels) sq += grad::squared_norm(k.value());
  out.weight_penalty = config.lambda * sq;
  out.value += out.weight_penalty;

  std::vector<Var> inputs(maps.begin(), maps.end());
  inputs.insert(inputs.end(), kernels.begin(), kernels.end());
  const auto gt_ref = std::make_shared<const Tensor>(gt);
  const std::size_t num_maps = maps.size();
  const double eps = config.eps;
  const double lambda = config.lambda;

  out.total = tape.record(
      Tensor::scalar(static_cast<float>(out.value)), inputs,
      [inputs, gt_ref, scale_sums, num_maps, eps, lambda](const Tensor& dy, GradSink& sink) {
        const double g = dy.item();
        const float* gv = gt_ref->data();
        for (std::size_t m = 0; m < num_maps; ++m) {
          if (!sink.wants(m)) continue;
          // d/dP_n of -(2I + eps) / (S + eps)
          const DiceSums& s = scale_sums[m];
          const double denom = s.gt + s.pred + eps;
          const double a = -2.0 / denom;
          const double b = (2.0 * s.overlap + eps) / (denom * denom);
          float* d = sink.slot(m).data();
          for (std::size_t i = 0; i < gt_ref->size(); ++i) {
            d[i] += static_cast<float>(g * (a * gv[i] + b));
          }
        }
        for (std::size_t k = num_maps; k < inputs.size(); ++k) {
          if (!sink.wants(k)) continue;
          const Tensor& w = inputs[k].value();
          float* d = sink.slot(k).data();
          for (std::size_t i = 0; i < w.size(); ++i) {
            d[i] += static_cast<float>(g * 2.0 * lambda * w.data()[i]);
          }
        }
      });
  return out;
}

double dice_loss(const PredictionSet& preds, const Tensor& gt, const DiceLossConfig& config,
                 const ModelParams& params) {
  config.validate();
  double total = 0.0;
  for (const Tensor& map : preds.maps) total += soft_dice_term(map, gt, config.eps);
  double sq = 0.0;
  for (const auto& [name, w] : params.weights) {
    if (name.size() > 7 && name.compare(name.size() - 7, 7, ".kernel") == 0) {
      sq += grad::squared_norm(w);
    }
  }
  return total + config.lambda * sq;
}

Tensor mask_tensor(const BinaryMask& mask) {
  Tensor t({1, 1, mask.height(), mask.width()});
  for (std::size_t i = 0; i < mask.size(); ++i) t.data()[i] = mask.at_index(i) ? 1.0f : 0.0f;
  return t;
}

}  // namespace vseg::net
