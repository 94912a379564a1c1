#include "vseg/cli/run_config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>

#include "vseg/error.hpp"

namespace vseg::cli {

using nlohmann::json;

net::NetworkConfig RunConfig::network() const {
  net::NetworkConfig n;
  if (stage_channels.size() != 4) {
    throw ConfigError("stage_channels needs exactly 4 values, got " +
                      std::to_string(stage_channels.size()));
  }
  std::copy(stage_channels.begin(), stage_channels.end(), n.stage_channels.begin());
  n.drb_rates_bottleneck = drb_rates_bottleneck;
  n.drb_rate_encoder = drb_rate_encoder;
  n.dspp_rates = dspp_rates;
  n.head_channels = head_channels;
  n.input_height = input_size;
  n.input_width = input_size;
  n.validate();
  return n;
}

net::DiceLossConfig RunConfig::loss() const {
  net::DiceLossConfig l{eps, lambda};
  l.validate();
  return l;
}

grad::AdamConfig RunConfig::optimizer() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(decay_rate > 0.0 && decay_rate <= 1.0)) throw ConfigError("decay_rate must be in (0, 1]");
  if (decay_interval < 0) throw ConfigError("decay_interval must be >= 0");
  grad::AdamConfig a;
  a.initial_lr = lr;
  a.decay_rate = decay_rate;
  a.decay_interval = decay_interval > 0 ? decay_interval : 1;
  return a;
}

prep::ClaheConfig RunConfig::clahe() const {
  if (clahe_tiles < 1) throw ConfigError("clahe_tiles must be >= 1");
  if (!(clip_limit > 0.0)) throw ConfigError("clip_limit must be positive");
  return {clahe_tiles, clahe_tiles, clip_limit};
}

namespace {

template <typename T>
std::function<void(RunConfig&, const json&)> field(T RunConfig::*member) {
  return [member](RunConfig& c, const json& v) { c.*member = v.get<T>(); };
}

const std::map<std::string, std::function<void(RunConfig&, const json&)>>& setters() {
  static const std::map<std::string, std::function<void(RunConfig&, const json&)>> table = {
      {"stage_channels", field(&RunConfig::stage_channels)},
      {"drb_rates_bottleneck", field(&RunConfig::drb_rates_bottleneck)},
      {"drb_rate_encoder", field(&RunConfig::drb_rate_encoder)},
      {"dspp_rates", field(&RunConfig::dspp_rates)},
      {"head_channels", field(&RunConfig::head_channels)},
      {"input_size", field(&RunConfig::input_size)},
      {"eps", field(&RunConfig::eps)},
      {"lambda", field(&RunConfig::lambda)},
      {"lr", field(&RunConfig::lr)},
      {"decay_rate", field(&RunConfig::decay_rate)},
      {"decay_interval", field(&RunConfig::decay_interval)},
      {"clahe_tiles", field(&RunConfig::clahe_tiles)},
      {"clip_limit", field(&RunConfig::clip_limit)},
      {"batch_size", field(&RunConfig::batch_size)},
      {"epochs", field(&RunConfig::epochs)},
      {"seed", field(&RunConfig::seed)},
      {"augment", field(&RunConfig::augment)},
      {"max_steps", field(&RunConfig::max_steps)},
      {"dataset", field(&RunConfig::dataset)},
      {"data_root", field(&RunConfig::data_root)},
      {"split", field(&RunConfig::split)},
      {"limit", field(&RunConfig::limit)},
      {"ckpt", field(&RunConfig::ckpt)},
      {"resume", field(&RunConfig::resume)},
      {"loss_csv", field(&RunConfig::loss_csv)},
      {"out", field(&RunConfig::out)},
      {"table", field(&RunConfig::table)},
      {"image", field(&RunConfig::image)},
      {"mask", field(&RunConfig::mask)},
      {"csv", field(&RunConfig::csv)},
      {"png16", field(&RunConfig::png16)},
      {"raw", field(&RunConfig::raw)},
      {"mask_out", field(&RunConfig::mask_out)},
      {"threshold", field(&RunConfig::threshold)},
      {"fov", field(&RunConfig::fov)},
      {"gt_as_prediction", field(&RunConfig::gt_as_prediction)},
  };
  return table;
}

}  // namespace

void apply_json(RunConfig& config, const json& doc) {
  if (!doc.is_object()) throw ConfigError("config: top level must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("config: unknown key '" + key + "'");
    try {
      it->second(config, value);
    } catch (const json::exception& e) {
      throw ConfigError("config: bad value for '" + key + "': " + e.what());
    }
  }
}

void apply_json_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config: " + path.string() + " is not valid JSON: " + e.what());
  }
  apply_json(config, doc);
}

json to_json(const RunConfig& c) {
  return {
      {"stage_channels", c.stage_channels}, {"drb_rates_bottleneck", c.drb_rates_bottleneck},
      {"drb_rate_encoder", c.drb_rate_encoder}, {"dspp_rates", c.dspp_rates},
      {"head_channels", c.head_channels}, {"input_size", c.input_size},
      {"eps", c.eps}, {"lambda", c.lambda}, {"lr", c.lr}, {"decay_rate", c.decay_rate},
      {"decay_interval", c.decay_interval}, {"clahe_tiles", c.clahe_tiles},
      {"clip_limit", c.clip_limit}, {"batch_size", c.batch_size}, {"epochs", c.epochs},
      {"seed", c.seed}, {"augment", c.augment}, {"max_steps", c.max_steps},
      {"dataset", c.dataset}, {"data_root", c.data_root}, {"split", c.split},
      {"limit", c.limit}, {"threshold", c.threshold}, {"fov", c.fov},
  };
}

}  // namespace vseg::cli
