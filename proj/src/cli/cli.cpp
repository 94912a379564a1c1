#include "vseg/cli/cli.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <string_view>

#include <CLI11.hpp>
#include <json.hpp>

#include "vseg/cli/run_config.hpp"
#include "vseg/dataio/dataset.hpp"
#include "vseg/error.hpp"
#include "vseg/gradcore/ops.hpp"
#include "vseg/metrics/metrics.hpp"
#include "vseg/morphometry/morphometry.hpp"
#include "vseg/preprocess/imageio.hpp"
#include "vseg/vesselnet/train.hpp"

namespace vseg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

RealRaster predict_probability(const data::Checkpoint& ckpt, const RasterImage& image) {
  const net::NetworkConfig& n = ckpt.network;
  const grad::Tensor input = prep::prepare(image, {ckpt.clahe, n.input_height, n.input_width});
  const net::PredictionSet preds = net::predict(n, ckpt.params, input);
  grad::Tape tape(grad::Tape::Mode::inference);
  const grad::Var native =
      grad::resize_bilinear(tape, grad::Tape::constant(preds.maps[0]), image.height, image.width);
  RealRaster out(image.width, image.height);
  const grad::Tensor& v = native.value();
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = std::clamp(static_cast<double>(v.data()[i]), 0.0, 1.0);
  }
  return out;
}

namespace {

std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigError(std::string("missing required option ") + flag);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open " + path + " for writing");
  return f;
}

data::DatasetIndex load_index(const RunConfig& c, const char* default_split) {
  require(c.data_root, "--data-root");
  data::DatasetIndex index = data::load_dataset(
      c.data_root, data::parse_kind(c.dataset), data::parse_split(c.split.empty() ? default_split : c.split));
  if (c.limit < 0) throw ConfigError("limit must be >= 0");
  if (c.limit > 0 && static_cast<std::size_t>(c.limit) < index.entries.size()) {
    index.entries.resize(static_cast<std::size_t>(c.limit));
  }
  return index;
}

// ---------------------------------------------------------------- train

int cmd_train(const RunConfig& c, std::ostream& err) {
  require(c.ckpt, "--ckpt");
  require(c.loss_csv, "--loss-csv");
  const net::DiceLossConfig loss = c.loss();

  data::Checkpoint ckpt;
  if (!c.resume.empty()) {
    ckpt = data::load_checkpoint(c.resume);
    if (!ckpt.optimizer) throw DataError(c.resume + " holds no optimizer state to resume from");
  } else {
    ckpt.network = c.network();
    ckpt.clahe = c.clahe();
    ckpt.params = net::init_params(ckpt.network, c.seed);
    ckpt.optimizer.emplace();
    ckpt.optimizer->config = c.optimizer();
  }
  const net::NetworkConfig& n = ckpt.network;

  const data::DatasetIndex index = load_index(c, "train");
  std::vector<net::TrainSample> samples;
  for (const data::DatasetEntry& e : index.entries) {
    const data::LoadedSample s = data::load_sample(e);
    samples.push_back({prep::prepare(s.image, {ckpt.clahe, n.input_height, n.input_width}),
                       prep::prepare_mask(s.ground_truth, n.input_height, n.input_width)});
  }
  err << "train: " << samples.size() << " images at " << n.input_height << "x" << n.input_width
      << ", " << ckpt.params.parameter_count() << " parameters\n";

  net::TrainOptions opts;
  opts.batch_size = c.batch_size;
  opts.epochs = c.epochs;
  opts.seed = c.seed;
  opts.augment = c.augment;
  opts.max_steps = c.max_steps;
  opts.decay_per_epoch = c.resume.empty() && c.decay_interval == 0;

  const net::TrainResult result =
      net::train(n, loss, ckpt.params, *ckpt.optimizer, samples, opts, [&](const net::StepInfo& s) {
        err << "epoch " << s.epoch << " step " << s.step << " loss " << s.loss << "\n";
        return true;
      });
  ckpt.step += result.steps;

  std::ofstream csv = open_out(c.loss_csv);
  csv << "epoch,mean_loss\n";
  for (std::size_t i = 0; i < result.epoch_losses.size(); ++i) {
    csv << i + 1 << ',' << shortest(result.epoch_losses[i]) << '\n';
  }
  if (!csv) throw DataError("failed writing " + c.loss_csv);
  data::save_checkpoint(ckpt, c.ckpt);
  return kOk;
}

// ---------------------------------------------------------------- predict

int cmd_predict(const RunConfig& c, std::ostream&) {
  require(c.ckpt, "--ckpt");
  require(c.image, "--image");
  require(c.out, "--out");
  const data::Checkpoint ckpt = data::load_checkpoint(c.ckpt);
  const RasterImage image = io::read_image(c.image);
  const RealRaster prob = predict_probability(ckpt, image);

  RasterImage png(prob.width, prob.height, 1);
  for (std::size_t i = 0; i < prob.values.size(); ++i) {
    png.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * prob.values[i]));
  }
  io::write_png(c.out, png);
  if (!c.mask_out.empty()) {
    RasterImage mask(prob.width, prob.height, 1);
    for (std::size_t i = 0; i < prob.values.size(); ++i) {
      mask.pixels[i] = prob.values[i] >= c.threshold ? 255 : 0;
    }
    io::write_png(c.mask_out, mask);
  }
  if (!c.raw.empty()) {
    grad::Tensor t({1, 1, prob.height, prob.width});
    for (std::size_t i = 0; i < prob.values.size(); ++i) t.data()[i] = static_cast<float>(prob.values[i]);
    data::write_tensor_file(c.raw, {{"probability", std::move(t)}});
  }
  return kOk;
}

// ---------------------------------------------------------------- eval

json metrics_json(const metrics::MetricsReport& r) {
  return {{"se", r.se}, {"sp", r.sp}, {"acc", r.acc}, {"precision", r.precision}, {"f1", r.f1}};
}

int cmd_eval(const RunConfig& c, std::ostream& out) {
  std::optional<data::Checkpoint> ckpt;
  if (!c.gt_as_prediction) {
    require(c.ckpt, "--ckpt");
    ckpt = data::load_checkpoint(c.ckpt);
  }
  const data::DatasetIndex index = load_index(c, "test");

  metrics::ConfusionCounts pooled;
  json rows = json::array();
  std::string table = "id,se,sp,acc,precision,f1,tp,tn,fp,fn,fov\n";
  for (const data::DatasetEntry& e : index.entries) {
    const data::LoadedSample s = data::load_sample(e);
    BinaryMask pred = s.ground_truth;
    if (ckpt) {
      const RealRaster prob = predict_probability(*ckpt, s.image);
      for (std::size_t i = 0; i < prob.values.size(); ++i) pred.set_index(i, prob.values[i] >= c.threshold);
    }
    const bool use_fov = c.fov && s.fov.has_value();
    const metrics::ConfusionCounts counts =
        metrics::confusion(pred, s.ground_truth, use_fov ? &*s.fov : nullptr);
    pooled += counts;
    const metrics::MetricsReport r = metrics::report(counts);
    json row = metrics_json(r);
    row["id"] = e.id;
    row["tp"] = counts.tp;
    row["tn"] = counts.tn;
    row["fp"] = counts.fp;
    row["fn"] = counts.fn;
    row["fov"] = use_fov;
    rows.push_back(row);
    table += e.id + ',' + shortest(r.se) + ',' + shortest(r.sp) + ',' + shortest(r.acc) + ',' +
             shortest(r.precision) + ',' + shortest(r.f1) + ',' + std::to_string(counts.tp) + ',' +
             std::to_string(counts.tn) + ',' + std::to_string(counts.fp) + ',' +
             std::to_string(counts.fn) + ',' + (use_fov ? "1" : "0") + '\n';
  }
  json doc = metrics_json(metrics::report(pooled));
  doc["per_image"] = rows;
  const std::string text = doc.dump(2) + "\n";
  if (c.out.empty()) {
    out << text;
  } else {
    std::ofstream f = open_out(c.out);
    f << text;
  }
  if (!c.table.empty()) {
    std::ofstream f = open_out(c.table);
    f << table;
  }
  return kOk;
}

// ---------------------------------------------------------------- widths

int cmd_widths(const RunConfig& c, std::ostream&) {
  require(c.mask, "--mask");
  require(c.out, "--out");
  require(c.csv, "--csv");
  BinaryMask mask;
  try {
    mask = io::to_mask(io::read_image(c.mask));
  } catch (const DataError& e) {
    throw DataError(c.mask + ": " + e.what());
  }
  const morph::WidthResult widths = morph::width_map(mask);
  morph::write_width_csv(fs::path(c.csv), widths.samples);
  const RasterImage base = c.image.empty() ? io::from_mask(mask) : io::read_image(c.image);
  io::write_png(c.out, morph::width_overlay(base, widths.widths));
  if (!c.png16.empty()) {
    io::write_png16(c.png16, mask.width(), mask.height(), morph::centipixel_samples(widths.widths));
  }
  return kOk;
}

// ---------------------------------------------------------------- prcurve

int cmd_prcurve(const RunConfig& c, std::ostream&) {
  require(c.ckpt, "--ckpt");
  require(c.out, "--out");
  const data::Checkpoint ckpt = data::load_checkpoint(c.ckpt);
  const data::DatasetIndex index = load_index(c, "test");
  const std::vector<double> thresholds = metrics::default_thresholds();
  std::vector<metrics::ConfusionCounts> pooled(thresholds.size());
  for (const data::DatasetEntry& e : index.entries) {
    const data::LoadedSample s = data::load_sample(e);
    const RealRaster prob = predict_probability(ckpt, s.image);
    const bool use_fov = c.fov && s.fov.has_value();
    const auto counts =
        metrics::threshold_counts(prob, s.ground_truth, use_fov ? &*s.fov : nullptr, thresholds);
    for (std::size_t k = 0; k < counts.size(); ++k) pooled[k] += counts[k];
  }
  std::ofstream f = open_out(c.out);
  metrics::write_pr_csv(f, metrics::pr_points(pooled, thresholds));
  if (!f) throw DataError("failed writing " + c.out);
  return kOk;
}

// ---------------------------------------------------------------- wiring

std::string config_path(int argc, const char* const* argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string_view a = argv[i];
    if (a == "--config" && i + 1 < argc) return argv[i + 1];
    if (a.starts_with("--config=")) return std::string(a.substr(9));
  }
  return {};
}

void add_network_options(CLI::App* sub, RunConfig& c) {
  sub->add_option("--stage-channels", c.stage_channels, "Channels per resolution (4 values)")
      ->expected(4);
  sub->add_option("--drb-rates-bottleneck", c.drb_rates_bottleneck);
  sub->add_option("--drb-rate-encoder", c.drb_rate_encoder);
  sub->add_option("--dspp-rates", c.dspp_rates);
  sub->add_option("--head-channels", c.head_channels);
  sub->add_option("--input-size", c.input_size, "Network input height and width");
  sub->add_option("--clahe-tiles", c.clahe_tiles);
  sub->add_option("--clip-limit", c.clip_limit);
}

void add_data_options(CLI::App* sub, RunConfig& c) {
  sub->add_option("--data-root", c.data_root, "Dataset root directory");
  sub->add_option("--dataset", c.dataset, "drive or chase");
  sub->add_option("--split", c.split, "train or test");
  sub->add_option("--limit", c.limit, "Use only the first N images of the split");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  RunConfig c;
  CLI::App app{"Retinal vessel segmentation and width estimation"};
  app.require_subcommand(1);
  std::string config_file;

  auto* train = app.add_subcommand("train", "Train the network and write a checkpoint");
  auto* predict = app.add_subcommand("predict", "Probability map for one image");
  auto* eval = app.add_subcommand("eval", "Segmentation metrics over a dataset split");
  auto* widths = app.add_subcommand("widths", "Vessel width map from a binary mask");
  auto* prcurve = app.add_subcommand("prcurve", "Pooled precision-recall curve over a split");
  for (auto* sub : {train, predict, eval, widths, prcurve}) {
    sub->add_option("--config", config_file, "JSON file of option values; flags override it");
  }

  add_network_options(train, c);
  add_data_options(train, c);
  train->add_option("--eps", c.eps);
  train->add_option("--lambda", c.lambda);
  train->add_option("--lr", c.lr);
  train->add_option("--decay-rate", c.decay_rate);
  train->add_option("--decay-interval", c.decay_interval, "Steps per decay factor (0 = per epoch)");
  train->add_option("--batch-size", c.batch_size);
  train->add_option("--epochs", c.epochs);
  train->add_option("--seed", c.seed);
  train->add_flag("--augment,!--no-augment", c.augment);
  train->add_option("--max-steps", c.max_steps, "Stop after this many steps (0 = no limit)");
  train->add_option("--ckpt", c.ckpt, "Checkpoint output path");
  train->add_option("--resume", c.resume, "Continue from this checkpoint");
  train->add_option("--loss-csv", c.loss_csv, "epoch,mean_loss output path");

  predict->add_option("--ckpt", c.ckpt);
  predict->add_option("--image", c.image);
  predict->add_option("--out", c.out, "8-bit probability PNG");
  predict->add_option("--threshold", c.threshold);
  predict->add_option("--mask-out", c.mask_out, "Thresholded mask PNG");
  predict->add_option("--raw", c.raw, "Float probabilities in the checkpoint tensor format");

  add_data_options(eval, c);
  eval->add_option("--ckpt", c.ckpt);
  eval->add_option("--threshold", c.threshold);
  eval->add_flag("--fov,!--no-fov", c.fov, "Restrict to the FOV mask when the dataset has one");
  eval->add_flag("--gt-as-prediction", c.gt_as_prediction, "Score ground truth against itself");
  eval->add_option("--out", c.out, "JSON report path (default: stdout)");
  eval->add_option("--table", c.table, "Per-image CSV path");

  widths->add_option("--mask", c.mask, "Binary mask image");
  widths->add_option("--image", c.image, "Background for the overlay (default: the mask)");
  widths->add_option("--out", c.out, "RGB overlay PNG");
  widths->add_option("--csv", c.csv, "x,y,width output");
  widths->add_option("--png16", c.png16, "Width map in hundredths of a pixel");

  add_data_options(prcurve, c);
  prcurve->add_option("--ckpt", c.ckpt);
  prcurve->add_flag("--fov,!--no-fov", c.fov);
  prcurve->add_option("--out", c.out, "threshold,precision,recall output");

  try {
    const std::string path = config_path(argc, argv);
    if (!path.empty()) apply_json_file(c, path);
    app.parse(argc, argv);
    if (*train) return cmd_train(c, err);
    if (*predict) return cmd_predict(c, err);
    if (*eval) return cmd_eval(c, out);
    if (*widths) return cmd_widths(c, err);
    if (*prcurve) return cmd_prcurve(c, err);
    return kConfigError;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumericError;
  } catch (const ShapeError& e) {
    err << "data error (" << e.axis() << "): " << e.what() << "\n";
    return kDataError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternalError;
  }
}

}  // namespace vseg::cli
