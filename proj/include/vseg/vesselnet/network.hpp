#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vseg/gradcore/ops.hpp"
#include "vseg/gradcore/params.hpp"
#include "vseg/gradcore/rng.hpp"
#include "vseg/gradcore/tape.hpp"
#include "vseg/raster.hpp"

namespace vseg::net {

using grad::ModelParams;
using grad::Tape;
using grad::Tensor;
using grad::Var;

inline constexpr int kNumScales = 4;

struct NetworkConfig {
  std::array<int, 4> stage_channels = {32, 64, 128, 256};
  std::vector<int> drb_rates_bottleneck = {1, 2, 4};
  int drb_rate_encoder = 2;
  std::vector<int> dspp_rates = {1, 6, 12, 18};
  /// Output channels of each supervision head's 3x3 conv.
  int head_channels = 8;
  int input_height = 512;
  int input_width = 512;
  /// Reject bottleneck maps too small for the widest pyramid branch to reach
  /// any pixel other than the centre tap.
  bool check_dspp_extent = true;

  /// Throws ConfigError.
  void validate() const;
};

/// One convolution, with its ReLU + batch-norm unit when `normalized`.
struct ConvLayerSpec {
  std::string name;
  int in_channels;
  int out_channels;
  int kernel;
  bool normalized;
};

/// Every convolution in the network in construction order.
std::vector<ConvLayerSpec> layer_table(const NetworkConfig& config);

/// Adds kernel/bias (and gamma/beta + running stats when normalized) for one
/// layer. Kernels use fan-in scaled uniform init U(-sqrt(6/fan_in), +...),
/// biases and beta start at 0, gamma at 1.
void add_layer_params(ModelParams& params, const ConvLayerSpec& spec, Rng& rng);

ModelParams init_params(const NetworkConfig& config, std::uint64_t seed);

/// Binds named ModelParams onto a tape and exposes the network's building
/// blocks. Each parameter is registered once per builder.
class GraphBuilder {
 public:
  GraphBuilder(Tape& tape, const ModelParams& params, bool training);

  Tape& tape() { return tape_; }
  bool training() const { return training_; }

  Var param(const std::string& name);
  Var conv(const std::string& layer, const Var& x, int dilation = 1);
  /// conv -> ReLU -> batch norm.
  Var conv_unit(const std::string& layer, const Var& x, int dilation = 1);
  /// Two conv units at `rate`, added to the block input.
  Var dilated_residual_block(const std::string& block, const Var& x, int rate);
  /// One 3x3 conv unit per rate on x, concatenated and fused by a 1x1 conv unit.
  Var dspp(const std::string& block, const Var& x, std::span<const int> rates,
           bool check_extent = true);

  /// Kernel tensors registered so far (weight-decay set).
  std::vector<Var> kernels() const;
  /// Running statistics after this pass (unchanged entries in inference mode).
  const std::map<std::string, grad::BatchNormState>& batch_norm_updates() const {
    return bn_updates_;
  }

 private:
  Tape& tape_;
  const ModelParams& params_;
  bool training_;
  std::map<std::string, Var> bound_;
  std::map<std::string, grad::BatchNormState> bn_updates_;
};

/// The four probability maps, ordered by scale: [0] full-resolution decoder
/// head, [1] half-resolution decoder head, [2] quarter-resolution decoder
/// head, [3] pyramid-pooling head. All are (B, 1, H, W) at input resolution.
struct ForwardPass {
  std::array<Var, kNumScales> maps;
  std::vector<Var> kernels;
  std::map<std::string, grad::BatchNormState> batch_norm_updates;
};

/// image: (B, 1, input_height, input_width) in [0, 1].
ForwardPass forward(Tape& tape, const NetworkConfig& config, const ModelParams& params,
                    const Tensor& image, bool training);

struct PredictionSet {
  std::array<Tensor, kNumScales> maps;
};

/// Inference-mode forward without gradient recording.
PredictionSet predict(const NetworkConfig& config, const ModelParams& params, const Tensor& image);

/// map[0] >= threshold for one batch item.
BinaryMask predict_mask(const PredictionSet& preds, float threshold = 0.5f, int batch_index = 0);

}  // namespace vseg::net
