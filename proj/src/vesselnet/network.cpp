#include "vseg/vesselnet/network.hpp"

#include <algorithm>
#include <cmath>

#include "vseg/error.hpp"

namespace vseg::net {

using grad::Shape;

void NetworkConfig::validate() const {
  for (int c : stage_channels) {
    if (c < 1) throw ConfigError("network: stage_channels must be positive");
  }
  if (head_channels < 1) throw ConfigError("network: head_channels must be positive");
  if (drb_rate_encoder < 1) throw ConfigError("network: drb_rate_encoder must be >= 1");
  for (int r : drb_rates_bottleneck) {
    if (r < 1) throw ConfigError("network: bottleneck dilation rates must be >= 1");
  }
  if (dspp_rates.empty()) throw ConfigError("network: dspp_rates must not be empty");
  for (int r : dspp_rates) {
    if (r < 1) throw ConfigError("network: dspp rates must be >= 1");
  }
  if (input_height < 8 || input_width < 8 || input_height % 8 != 0 || input_width % 8 != 0) {
    throw ConfigError("network: input size " + std::to_string(input_height) + "x" +
                      std::to_string(input_width) + " must be a positive multiple of 8");
  }
}

std::vector<ConvLayerSpec> layer_table(const NetworkConfig& cfg) {
  const auto& c = cfg.stage_channels;
  std::vector<ConvLayerSpec> t;
  for (int k = 0; k < 3; ++k) {
    const std::string p = "enc" + std::to_string(k);
    t.push_back({p + ".conv_a", k == 0 ? 1 : c[k - 1], c[k], 3, true});
    t.push_back({p + ".conv_b", c[k], c[k], 3, true});
    t.push_back({p + ".inject_a", 1, c[k], 3, true});
    t.push_back({p + ".inject_b", c[k], c[k], 3, true});
    t.push_back({p + ".drb.a", c[k], c[k], 3, true});
    t.push_back({p + ".drb.b", c[k], c[k], 3, true});
  }
  t.push_back({"mid.conv_a", c[2], c[3], 3, true});
  t.push_back({"mid.conv_b", c[3], c[3], 3, true});
  for (std::size_t i = 0; i < cfg.drb_rates_bottleneck.size(); ++i) {
    const std::string p = "mid.drb" + std::to_string(i);
    t.push_back({p + ".a", c[3], c[3], 3, true});
    t.push_back({p + ".b", c[3], c[3], 3, true});
  }
  for (std::size_t i = 0; i < cfg.dspp_rates.size(); ++i) {
    t.push_back({"dspp.branch" + std::to_string(i), c[3], c[3], 3, true});
  }
  t.push_back({"dspp.fuse", static_cast<int>(cfg.dspp_rates.size()) * c[3], c[3], 1, true});
  for (int k = 2; k >= 0; --k) {
    const std::string p = "dec" + std::to_string(k);
    t.push_back({p + ".conv_a", c[k + 1] + c[k], c[k], 3, true});
    t.push_back({p + ".conv_b", c[k], c[k], 3, true});
  }
  for (int m = 0; m < kNumScales; ++m) {
    const std::string p = "head" + std::to_string(m);
    t.push_back({p + ".conv", c[m], cfg.head_channels, 3, true});
    t.push_back({p + ".out", cfg.head_channels, 1, 1, false});
  }
  return t;
}

void add_layer_params(ModelParams& params, const ConvLayerSpec& spec, Rng& rng) {
  const int fan_in = spec.in_channels * spec.kernel * spec.kernel;
  const double bound = std::sqrt(6.0 / fan_in);
  Tensor kernel({spec.out_channels, spec.in_channels, spec.kernel, spec.kernel});
  for (float& w : kernel.values()) w = static_cast<float>(rng.uniform(-bound, bound));
  params.weights[spec.name + ".kernel"] = std::move(kernel);
  params.weights[spec.name + ".bias"] = Tensor({1, spec.out_channels, 1, 1});
  if (spec.normalized) {
    params.weights[spec.name + ".bn.gamma"] = Tensor({1, spec.out_channels, 1, 1}, 1.0f);
    params.weights[spec.name + ".bn.beta"] = Tensor({1, spec.out_channels, 1, 1});
    params.batch_norm[spec.name] = grad::BatchNormState::fresh(spec.out_channels);
  }
}

ModelParams init_params(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams params;
  Rng rng(seed);
  for (const ConvLayerSpec& spec : layer_table(config)) add_layer_params(params, spec, rng);
  return params;
}

GraphBuilder::GraphBuilder(Tape& tape, const ModelParams& params, bool training)
    : tape_(tape), params_(params), training_(training) {}

Var GraphBuilder::param(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  auto src = params_.weights.find(name);
  if (src == params_.weights.end()) throw ConfigError("network: missing parameter '" + name + "'");
  Var v = tape_.parameter(name, src->second);
  bound_.emplace(name, v);
  return v;
}

Var GraphBuilder::conv(const std::string& layer, const Var& x, int dilation) {
  return grad::conv2d(tape_, x, param(layer + ".kernel"), param(layer + ".bias"), {dilation, 1});
}

Var GraphBuilder::conv_unit(const std::string& layer, const Var& x, int dilation) {
  const Var y = grad::relu(tape_, conv(layer, x, dilation));
  auto st = params_.batch_norm.find(layer);
  if (st == params_.batch_norm.end()) {
    throw ConfigError("network: missing batch-norm state for '" + layer + "'");
  }
  grad::BatchNormResult bn = grad::batch_norm(tape_, y, param(layer + ".bn.gamma"),
                                              param(layer + ".bn.beta"), st->second, training_);
  bn_updates_[layer] = std::move(bn.state);
  return bn.output;
}

Var GraphBuilder::dilated_residual_block(const std::string& block, const Var& x, int rate) {
  const Var a = conv_unit(block + ".a", x, rate);
  const Var b = conv_unit(block + ".b", a, rate);
  return grad::add(tape_, b, x);
}

Var GraphBuilder::dspp(const std::string& block, const Var& x, std::span<const int> rates,
                       bool check_extent) {
  if (check_extent) {
    const int widest = *std::max_element(rates.begin(), rates.end());
    if (x.shape().h <= widest || x.shape().w <= widest) {
      const char* axis = x.shape().h <= widest ? "height" : "width";
      throw ShapeError(axis, "dspp: " + std::to_string(x.shape().h) + "x" +
                                 std::to_string(x.shape().w) +
                                 " feature map is too small for dilation rate " +
                                 std::to_string(widest) + "; use a larger input size");
    }
  }
  std::vector<Var> branches;
  for (std::size_t i = 0; i < rates.size(); ++i) {
    branches.push_back(conv_unit(block + ".branch" + std::to_string(i), x, rates[i]));
  }
  const Var stacked = grad::concat_channels(tape_, branches);
  return conv_unit(block + ".fuse", stacked);
}

std::vector<Var> GraphBuilder::kernels() const {
  std::vector<Var> out;
  for (const auto& [name, v] : bound_) {
    if (name.size() > 7 && name.compare(name.size() - 7, 7, ".kernel") == 0) out.push_back(v);
  }
  return out;
}

ForwardPass forward(Tape& tape, const NetworkConfig& config, const ModelParams& params,
                    const Tensor& image, bool training) {
  config.validate();
  const Shape s = image.shape();
  if (s.c != 1) throw ShapeError("channels", "forward: expected a single-channel image");
  if (s.n < 1) throw ShapeError("batch", "forward: empty batch");
  if (s.h != config.input_height || s.w != config.input_width) {
    throw ShapeError(s.h != config.input_height ? "height" : "width",
                     "forward: image is " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                         ", network expects " + std::to_string(config.input_height) + "x" +
                         std::to_string(config.input_width) + "; run preprocessing first");
  }

  GraphBuilder g(tape, params, training);
  const Var input = Tape::constant(image);

  std::array<Var, 3> skips;
  Var x = input;
  for (int k = 0; k < 3; ++k) {
    const std::string p = "enc" + std::to_string(k);
    const Var scaled =
        k == 0 ? input : grad::resize_bilinear(tape, input, s.h >> k, s.w >> k);
    Var main = g.conv_unit(p + ".conv_b", g.conv_unit(p + ".conv_a", x));
    const Var side = g.conv_unit(p + ".inject_b", g.conv_unit(p + ".inject_a", scaled));
    main = grad::add(tape, main, side);
    skips[k] = g.dilated_residual_block(p + ".drb", main, config.drb_rate_encoder);
    x = grad::downsample2x(tape, skips[k]);
  }

  x = g.conv_unit("mid.conv_b", g.conv_unit("mid.conv_a", x));
  for (std::size_t i = 0; i < config.drb_rates_bottleneck.size(); ++i) {
    x = g.dilated_residual_block("mid.drb" + std::to_string(i), x, config.drb_rates_bottleneck[i]);
  }
  const Var pyramid = g.dspp("dspp", x, config.dspp_rates, config.check_dspp_extent);

  std::array<Var, kNumScales> features;
  features[3] = pyramid;
  Var up = pyramid;
  for (int k = 2; k >= 0; --k) {
    const std::string p = "dec" + std::to_string(k);
    const Var upsampled = grad::resize_bilinear(tape, up, s.h >> k, s.w >> k);
    const std::array<Var, 2> parts = {upsampled, skips[k]};
    up = g.conv_unit(p + ".conv_b", g.conv_unit(p + ".conv_a", grad::concat_channels(tape, parts)));
    features[k] = up;
  }

  ForwardPass out;
  for (int m = 0; m < kNumScales; ++m) {
    const std::string p = "head" + std::to_string(m);
    Var h = g.conv_unit(p + ".conv", features[m]);
    if (h.shape().h != s.h || h.shape().w != s.w) h = grad::resize_bilinear(tape, h, s.h, s.w);
    out.maps[m] = grad::sigmoid(tape, g.conv(p + ".out", h));
  }
  out.kernels = g.kernels();
  out.batch_norm_updates = g.batch_norm_updates();
  return out;
}

PredictionSet predict(const NetworkConfig& config, const ModelParams& params, const Tensor& image) {
  Tape tape(Tape::Mode::inference);
  ForwardPass pass = forward(tape, config, params, image, false);
  PredictionSet out;
  for (int m = 0; m < kNumScales; ++m) out.maps[m] = pass.maps[m].value();
  return out;
}

BinaryMask predict_mask(const PredictionSet& preds, float threshold, int batch_index) {
  const Tensor& map = preds.maps[0];
  const Shape s = map.shape();
  if (batch_index < 0 || batch_index >= s.n) {
    throw ShapeError("batch", "predict_mask: batch index out of range");
  }
  BinaryMask mask(s.w, s.h);
  for (int y = 0; y < s.h; ++y) {
    for (int x = 0; x < s.w; ++x) mask.set(x, y, map(batch_index, 0, y, x) >= threshold);
  }
  return mask;
}

}  // namespace vseg::net
