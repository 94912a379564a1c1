#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "vseg/gradcore/adam.hpp"
#include "vseg/vesselnet/loss.hpp"
#include "vseg/vesselnet/network.hpp"

namespace vseg::net {

/// One prepared training pair, both (1, 1, H, W) at the network input size.
struct TrainSample {
  Tensor image;
  Tensor mask;  // 0/1
};

struct TrainOptions {
  int batch_size = 2;
  int epochs = 1;
  std::uint64_t seed = 0;
  bool augment = true;
  /// Stop after this many optimizer steps in total (0 = no limit).
  std::int64_t max_steps = 0;
  /// Set the optimizer's decay_interval to the number of steps per epoch.
  bool decay_per_epoch = true;
};

struct StepInfo {
  int epoch = 0;
  std::int64_t step = 0;  // global optimizer step, 1-based
  double loss = 0.0;
};

/// Return false to stop training after the current step.
using StepObserver = std::function<bool(const StepInfo&)>;

struct TrainResult {
  std::vector<double> epoch_losses;  // mean step loss per (possibly partial) epoch
  std::int64_t steps = 0;
  bool stopped_early = false;
};

/// Mini-batch training: each epoch shuffles the sample order with a generator
/// seeded from (seed, epoch), draws one augmentation per sample from
/// (seed, sample index, epoch), then forward -> loss -> backward -> Adam.
/// Batch-norm running statistics are updated after every step. A non-finite
/// loss throws NumericError naming the epoch and step.
TrainResult train(const NetworkConfig& config, const DiceLossConfig& loss_config,
                  ModelParams& params, grad::AdamState& optimizer,
                  const std::vector<TrainSample>& samples, const TrainOptions& options,
                  const StepObserver& observer = {});

/// Seed for one sample's augmentation draw in one epoch.
std::uint64_t sample_seed(std::uint64_t seed, std::size_t index, int epoch);

}  // namespace vseg::net
