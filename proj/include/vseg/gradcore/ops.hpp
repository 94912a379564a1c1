#pragma once

#include <span>
#include <vector>

#include "vseg/gradcore/tape.hpp"

namespace vseg::grad {

/// Geometry of a convolution. Padding is always symmetric "same"-style zero
/// padding of ((k - 1) * dilation) / 2 per side; kernels must be odd-sized.
struct ConvSpec {
  int dilation = 1;
  int stride = 1;
};

/// Dilated 2-D convolution.
///   x      (N, C, H, W)
///   kernel (O, C, KH, KW)
///   bias   (1, O, 1, 1)
/// out[b,o,i] = sum_c sum_j x[b,c,i + j*dilation] * kernel[o,c,j] + bias[o]
Var conv2d(Tape& tape, const Var& x, const Var& kernel, const Var& bias, ConvSpec spec = {});

/// Batch-norm running statistics and hyperparameters. gamma/beta are learnable
/// and passed to batch_norm() as separate tensors of shape (1, C, 1, 1).
struct BatchNormState {
  std::vector<float> running_mean;
  std::vector<float> running_var;
  float momentum = 0.9f;
  float eps = 1e-5f;

  static BatchNormState fresh(int channels);
};

struct BatchNormResult {
  Var output;
  BatchNormState state;  // updated running stats in training mode, unchanged otherwise
};

/// Training: per-channel statistics over (batch, h, w), running stats blended
/// as running = momentum * running + (1 - momentum) * batch. Inference: uses
/// the running statistics.
BatchNormResult batch_norm(Tape& tape, const Var& x, const Var& gamma, const Var& beta,
                           const BatchNormState& state, bool training);

Var relu(Tape& tape, const Var& x);

/// Saturating logistic; outputs stay strictly inside (0, 1).
Var sigmoid(Tape& tape, const Var& x);

/// 2x2 max pooling, stride 2. Ties resolve to the first element in row-major
/// order within the window.
Var downsample2x(Tape& tape, const Var& x);

/// Bilinear resize with half-pixel centers and edge clamping.
Var resize_bilinear(Tape& tape, const Var& x, int out_h, int out_w);

Var add(Tape& tape, const Var& a, const Var& b);

Var concat_channels(Tape& tape, std::span<const Var> xs);

/// Sum of all elements, as a (1,1,1,1) tensor.
Var sum(Tape& tape, const Var& x);

/// 0.5 * sum of squares, as a (1,1,1,1) tensor.
Var half_sum_squares(Tape& tape, const Var& x);

}  // namespace vseg::grad
