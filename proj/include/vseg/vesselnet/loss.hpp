#pragma once

#include <array>
#include <span>

#include "vseg/gradcore/params.hpp"
#include "vseg/gradcore/tape.hpp"
#include "vseg/raster.hpp"
#include "vseg/vesselnet/network.hpp"

namespace vseg::net {

struct DiceLossConfig {
  double eps = 1e-5;
  double lambda = 0.0008;

  void validate() const;
};

/// 1 - (2 sum(G P) + eps) / (sum(G) + sum(P) + eps), sums over every element
/// of the batch. gt must hold only 0 and 1 (DataError otherwise).
double soft_dice_term(const Tensor& pred, const Tensor& gt, double eps);

/// (2 sum(G P) + eps) / (sum(G) + sum(P) + eps) for a single batch item.
double soft_dice(const Tensor& pred, const Tensor& gt, int batch_index, double eps = 1e-5);

struct LossResult {
  Var total;
  double value = 0.0;
  std::array<double, kNumScales> scale_terms{};
  double weight_penalty = 0.0;  // lambda * sum of squared kernel entries
};

/// Sum of the per-scale soft Dice terms plus lambda * ||w||^2 over `kernels`,
/// recorded as one differentiable node.
LossResult dice_loss(Tape& tape, std::span<const Var> maps, const Tensor& gt,
                     std::span<const Var> kernels, const DiceLossConfig& config);

/// Same quantity without a tape, on finished predictions. Kernel tensors are
/// taken from params (every weight whose name ends in ".kernel").
double dice_loss(const PredictionSet& preds, const Tensor& gt, const DiceLossConfig& config,
                 const ModelParams& params);

/// (1, 1, H, W) 0/1 tensor from a mask.
Tensor mask_tensor(const BinaryMask& mask);

}  // namespace vseg::net
