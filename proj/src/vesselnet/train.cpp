#include "vseg/vesselnet/train.hpp"

#include <cmath>
#include <numeric>

#include "vseg/error.hpp"
#include "vseg/preprocess/preprocess.hpp"

namespace vseg::net {

using grad::Shape;

std::uint64_t sample_seed(std::uint64_t seed, std::size_t index, int epoch) {
  return mix_seed(mix_seed(mix_seed(seed) ^ index) ^ static_cast<std::uint64_t>(epoch));
}

namespace {

Tensor stack(const std::vector<Tensor>& items) {
  const Shape one = items.front().shape();
  Tensor out({static_cast<int>(items.size()), one.c, one.h, one.w});
  float* dst = out.data();
  for (const Tensor& t : items) dst = std::copy(t.data(), t.data() + t.size(), dst);
  return out;
}

}  // namespace

TrainResult train(const NetworkConfig& config, const DiceLossConfig& loss_config,
                  ModelParams& params, grad::AdamState& optimizer,
                  const std::vector<TrainSample>& samples, const TrainOptions& options,
                  const StepObserver& observer) {
  config.validate();
  loss_config.validate();
  if (samples.empty()) throw DataError("train: dataset is empty");
  if (options.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (options.epochs < 1) throw ConfigError("train: epochs must be >= 1");
  for (const TrainSample& s : samples) {
    const Shape expect{1, 1, config.input_height, config.input_width};
    if (!(s.image.shape() == expect) || !(s.mask.shape() == expect)) {
      throw ShapeError("height", "train: samples must be prepared to (1, 1, " +
                                     std::to_string(config.input_height) + ", " +
                                     std::to_string(config.input_width) + ")");
    }
  }

  const std::size_t batch = static_cast<std::size_t>(options.batch_size);
  const std::int64_t steps_per_epoch = static_cast<std::int64_t>((samples.size() + batch - 1) / batch);
  if (options.decay_per_epoch) optimizer.config.decay_interval = steps_per_epoch;

  TrainResult result;
  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffler(mix_seed(options.seed ^ mix_seed(static_cast<std::uint64_t>(epoch))));
    shuffler.shuffle(order);

    double epoch_sum = 0.0;
    int epoch_steps = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      std::vector<Tensor> images;
      std::vector<Tensor> masks;
      for (std::size_t i = start; i < std::min(order.size(), start + batch); ++i) {
        const TrainSample& s = samples[order[i]];
        if (options.augment) {
          Rng pick(sample_seed(options.seed, order[i], epoch));
          const auto op = prep::kAllAugmentations[pick.below(prep::kAllAugmentations.size())];
          images.push_back(prep::apply(op, s.image));
          masks.push_back(prep::apply(op, s.mask));
        } else {
          images.push_back(s.image);
          masks.push_back(s.mask);
        }
      }
      // Transposes of non-square inputs cannot share a batch with other items;
      // the network input size is fixed, so undo the swap.
      for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].shape().h != config.input_height) {
          images[i] = prep::apply(prep::AugmentationOp::transpose, images[i]);
          masks[i] = prep::apply(prep::AugmentationOp::transpose, masks[i]);
        }
      }

      Tape tape;
      ForwardPass pass = forward(tape, config, params, stack(images), true);
      const LossResult loss = dice_loss(tape, pass.maps, stack(masks), pass.kernels, loss_config);
      const std::int64_t step = result.steps + 1;
      if (!std::isfinite(loss.value)) {
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(step));
      }
      const grad::Gradients grads = tape.backward(loss.total);
      try {
        grad::adam_step(params, grads, optimizer);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                           ", step " + std::to_string(step));
      }
      for (auto& [layer, st] : pass.batch_norm_updates) params.batch_norm[layer] = st;

      result.steps = step;
      epoch_sum += loss.value;
      ++epoch_steps;
      const bool keep_going = !observer || observer({epoch, step, loss.value});
      if (!keep_going || (options.max_steps > 0 && step >= options.max_steps)) {
        result.stopped_early = true;
        break;
      }
    }
    result.epoch_losses.push_back(epoch_sum / epoch_steps);
    if (result.stopped_early) break;
  }
  return result;
}

}  // namespace vseg::net
