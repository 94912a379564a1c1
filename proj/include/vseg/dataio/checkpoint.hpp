#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vseg/error.hpp"
#include "vseg/gradcore/adam.hpp"
#include "vseg/gradcore/params.hpp"
#include "vseg/preprocess/preprocess.hpp"
#include "vseg/vesselnet/network.hpp"

namespace vseg::data {

using NamedTensors = std::vector<std::pair<std::string, grad::Tensor>>;

class CheckpointError : public DataError {
 public:
  enum class Kind { bad_magic, version_mismatch, truncated, bad_dtype, crc_mismatch, malformed };

  CheckpointError(Kind kind, const std::string& message) : DataError(message), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Container layout, little-endian:
///   "VSEG" | u32 version | u32 count |
///   count x (u16 name_len | name | u8 dtype=0 | u8 rank | rank x u32 dim | f32 payload) |
///   u32 CRC-32 of every preceding byte
std::vector<std::uint8_t> encode_tensors(const NamedTensors& tensors);
NamedTensors decode_tensors(const std::vector<std::uint8_t>& bytes);

/// Written to a sibling temporary file, then renamed over `path`.
void write_tensor_file(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors read_tensor_file(const std::filesystem::path& path);

struct Checkpoint {
  net::NetworkConfig network;
  prep::ClaheConfig clahe;  // contrast settings the weights were trained with
  grad::ModelParams params;
  std::optional<grad::AdamState> optimizer;
  std::int64_t step = 0;
};

/// Tensor names: param/<name>, bn/<layer>/{running_mean,running_var,hyper},
/// adam/m/<name>, adam/v/<name>, adam/{config,step}, config/<field>, meta/step.
NamedTensors to_tensors(const Checkpoint& ckpt);
Checkpoint from_tensors(const NamedTensors& tensors);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Field-by-field bitwise comparison.
bool bitwise_equal(const Checkpoint& a, const Checkpoint& b);

}  // namespace vseg::data
