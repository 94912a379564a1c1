#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "vseg/gradcore/adam.hpp"
#include "vseg/preprocess/preprocess.hpp"
#include "vseg/vesselnet/loss.hpp"
#include "vseg/vesselnet/network.hpp"

namespace vseg::cli {

/// Every setting a subcommand can read. JSON config keys are the flag names
/// with dashes replaced by underscores ("--data-root" <-> "data_root").
struct RunConfig {
  // network
  std::vector<int> stage_channels = {32, 64, 128, 256};
  std::vector<int> drb_rates_bottleneck = {1, 2, 4};
  int drb_rate_encoder = 2;
  std::vector<int> dspp_rates = {1, 6, 12, 18};
  int head_channels = 8;
  int input_size = 512;
  // loss
  double eps = 1e-5;
  double lambda = 0.0008;
  // optimizer
  double lr = 1e-3;
  double decay_rate = 0.99;
  std::int64_t decay_interval = 0;  // 0: one decay factor per epoch
  // preprocessing
  int clahe_tiles = 8;
  double clip_limit = 2.0;
  // training
  int batch_size = 2;
  int epochs = 1;
  std::uint64_t seed = 0;
  bool augment = true;
  std::int64_t max_steps = 0;
  // data
  std::string dataset = "drive";
  std::string data_root;
  std::string split;  // subcommand default when empty
  int limit = 0;      // use only the first N entries of the split (0 = all)
  // files
  std::string ckpt;
  std::string resume;
  std::string loss_csv;
  std::string out;
  std::string table;
  std::string image;
  std::string mask;
  std::string csv;
  std::string png16;
  std::string raw;
  std::string mask_out;
  // evaluation
  double threshold = 0.5;
  bool fov = true;
  bool gt_as_prediction = false;

  net::NetworkConfig network() const;
  net::DiceLossConfig loss() const;
  grad::AdamConfig optimizer() const;
  prep::ClaheConfig clahe() const;
};

/// Overwrites fields named in `doc`. Unknown keys and wrong value types throw
/// ConfigError.
void apply_json(RunConfig& config, const nlohmann::json& doc);
void apply_json_file(RunConfig& config, const std::filesystem::path& path);

nlohmann::json to_json(const RunConfig& config);

}  // namespace vseg::cli
