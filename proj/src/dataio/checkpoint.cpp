#include "vseg/dataio/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

namespace vseg::data {

namespace fs = std::filesystem;
using grad::Shape;
using grad::Tensor;
using Kind = CheckpointError::Kind;

namespace {

constexpr char kMagic[4] = {'V', 'S', 'E', 'G'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t>& data() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

  // `what` names the item being read for truncation diagnostics.
  void need(std::size_t n, const std::string& what) const {
    if (in_.size() - pos_ < n) {
      throw CheckpointError(Kind::truncated, "checkpoint: file truncated while reading " + what);
    }
  }
  std::uint8_t u8(const std::string& what) {
    need(1, what);
    return in_[pos_++];
  }
  std::uint16_t u16(const std::string& what) {
    need(2, what);
    std::uint16_t v = static_cast<std::uint16_t>(in_[pos_] | (in_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const std::string& what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  const std::uint8_t* take(std::size_t n, const std::string& what) {
    need(n, what);
    const std::uint8_t* p = in_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(const std::uint8_t* p, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in bounded pieces.
  while (n > 0) {
    const auto piece = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, p, piece);
    p += piece;
    n -= piece;
  }
  return static_cast<std::uint32_t>(crc);
}

// 64-bit quantities travel as four 16-bit chunks, each exactly representable
// as a float.
void put_u64(std::vector<float>& out, std::uint64_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<float>((v >> (16 * i)) & 0xffff));
}

std::uint64_t get_u64(const float* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 4; ++i) {
    const float f = p[i];
    if (!(f >= 0.0f && f <= 65535.0f) || f != static_cast<float>(static_cast<int>(f))) {
      throw CheckpointError(Kind::malformed, "checkpoint: bad encoded 64-bit field");
    }
    v |= static_cast<std::uint64_t>(f) << (16 * i);
  }
  return v;
}

Tensor row(const std::vector<float>& v) {
  return Tensor({1, 1, 1, static_cast<int>(v.size())}, v);
}

Tensor doubles(std::initializer_list<double> values) {
  std::vector<float> out;
  for (double d : values) put_u64(out, std::bit_cast<std::uint64_t>(d));
  return row(out);
}

std::vector<double> read_doubles(const Tensor& t, std::size_t count, const std::string& name) {
  if (t.size() != 4 * count) {
    throw CheckpointError(Kind::malformed, "checkpoint: tensor '" + name + "' has wrong length");
  }
  std::vector<double> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(std::bit_cast<double>(get_u64(t.data() + 4 * i)));
  return out;
}

Tensor ints(const std::vector<int>& v) {
  std::vector<float> out(v.begin(), v.end());
  return row(out);
}

std::vector<int> read_ints(const Tensor& t) {
  std::vector<int> out;
  for (float f : t.values()) {
    if (!(std::abs(f) < 2147483648.0f) || f != std::trunc(f)) {
      throw CheckpointError(Kind::malformed, "checkpoint: non-integer configuration value");
    }
    out.push_back(static_cast<int>(f));
  }
  return out;
}

int read_int(const Tensor& t, const std::string& name) {
  const std::vector<int> v = read_ints(t);
  if (v.size() != 1) {
    throw CheckpointError(Kind::malformed, "checkpoint: tensor '" + name + "' must hold one value");
  }
  return v[0];
}

}  // namespace

std::vector<std::uint8_t> encode_tensors(const NamedTensors& tensors) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > 0xffff) throw ConfigError("checkpoint: tensor name too long: " + name);
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u8(0);
    w.u8(4);
    const Shape& s = t.shape();
    for (int d : {s.n, s.c, s.h, s.w}) w.u32(static_cast<std::uint32_t>(d));
    for (float f : t.values()) w.u32(std::bit_cast<std::uint32_t>(f));
  }
  const std::uint32_t crc = crc_of(w.data().data(), w.data().size());
  w.u32(crc);
  return std::move(w.data());
}

NamedTensors decode_tensors(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointError(Kind::bad_magic, "checkpoint: bad magic (not a VSEG file)");
  }
  r.take(4, "magic");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(Kind::version_mismatch,
                          "checkpoint: version " + std::to_string(version) + ", expected " +
                              std::to_string(kCheckpointVersion));
  }
  const std::uint32_t count = r.u32("tensor count");
  NamedTensors out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string slot = "tensor #" + std::to_string(i);
    const std::uint16_t len = r.u16(slot + " name length");
    const auto* name_bytes = r.take(len, slot + " name");
    const std::string name(reinterpret_cast<const char*>(name_bytes), len);
    const std::string what = "tensor '" + name + "'";
    const std::uint8_t dtype = r.u8(what);
    if (dtype != 0) {
      throw CheckpointError(Kind::bad_dtype, "checkpoint: " + what + " has unsupported dtype code " +
                                                 std::to_string(dtype));
    }
    const std::uint8_t rank = r.u8(what);
    if (rank < 1 || rank > 4) {
      throw CheckpointError(Kind::malformed, "checkpoint: " + what + " has rank " + std::to_string(rank));
    }
    int dims[4] = {1, 1, 1, 1};
    std::uint64_t numel = 1;
    for (int d = 4 - rank; d < 4; ++d) {
      const std::uint32_t v = r.u32(what);
      if (v > 0x7fffffffu) throw CheckpointError(Kind::malformed, "checkpoint: " + what + " dimension too large");
      dims[d] = static_cast<int>(v);
      numel *= v;
    }
    if (numel > r.remaining() / 4) r.need(r.remaining() + 1, what);
    const std::uint8_t* payload = r.take(numel * 4, what);
    std::vector<float> values(numel);
    for (std::size_t k = 0; k < numel; ++k) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(payload[4 * k + b]) << (8 * b);
      values[k] = std::bit_cast<float>(bits);
    }
    out.emplace_back(name, Tensor({dims[0], dims[1], dims[2], dims[3]}, std::move(values)));
  }
  const std::size_t body = r.pos();
  const std::uint32_t stored = r.u32("checksum");
  if (r.remaining() != 0) {
    throw CheckpointError(Kind::malformed, "checkpoint: trailing bytes after checksum");
  }
  if (crc_of(bytes.data(), body) != stored) {
    throw CheckpointError(Kind::crc_mismatch, "checkpoint: CRC-32 mismatch (file is corrupted)");
  }
  return out;
}

void write_tensor_file(const fs::path& path, const NamedTensors& tensors) {
  const std::vector<std::uint8_t> bytes = encode_tensors(tensors);
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw DataError("failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw DataError("cannot move checkpoint into place at " + path.string());
  }
}

NamedTensors read_tensor_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_tensors(bytes);
}

NamedTensors to_tensors(const Checkpoint& ckpt) {
  NamedTensors out;
  const net::NetworkConfig& n = ckpt.network;
  out.emplace_back("config/stage_channels",
                   ints({n.stage_channels.begin(), n.stage_channels.end()}));
  out.emplace_back("config/drb_rates_bottleneck", ints(n.drb_rates_bottleneck));
  out.emplace_back("config/drb_rate_encoder", ints({n.drb_rate_encoder}));
  out.emplace_back("config/dspp_rates", ints(n.dspp_rates));
  out.emplace_back("config/head_channels", ints({n.head_channels}));
  out.emplace_back("config/input_size", ints({n.input_height, n.input_width}));
  out.emplace_back("config/check_dspp_extent", ints({n.check_dspp_extent ? 1 : 0}));
  out.emplace_back("config/clahe_tiles", ints({ckpt.clahe.tiles_x, ckpt.clahe.tiles_y}));
  out.emplace_back("config/clahe_clip_limit", doubles({ckpt.clahe.clip_limit}));
  {
    std::vector<float> step;
    put_u64(step, static_cast<std::uint64_t>(ckpt.step));
    out.emplace_back("meta/step", row(step));
  }
  for (const auto& [name, t] : ckpt.params.weights) out.emplace_back("param/" + name, t);
  for (const auto& [layer, st] : ckpt.params.batch_norm) {
    out.emplace_back("bn/" + layer + "/running_mean", row(st.running_mean));
    out.emplace_back("bn/" + layer + "/running_var", row(st.running_var));
    out.emplace_back("bn/" + layer + "/hyper", row({st.momentum, st.eps}));
  }
  if (ckpt.optimizer) {
    const grad::AdamState& a = *ckpt.optimizer;
    const grad::AdamConfig& c = a.config;
    out.emplace_back("adam/config",
                     doubles({c.initial_lr, c.decay_rate, std::bit_cast<double>(c.decay_interval),
                              c.beta1, c.beta2, c.eps}));
    std::vector<float> step;
    put_u64(step, static_cast<std::uint64_t>(a.step_count));
    out.emplace_back("adam/step", row(step));
    for (const auto& [name, t] : a.first_moment) out.emplace_back("adam/m/" + name, t);
    for (const auto& [name, t] : a.second_moment) out.emplace_back("adam/v/" + name, t);
  }
  return out;
}

Checkpoint from_tensors(const NamedTensors& tensors) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : tensors) {
    if (!by_name.emplace(name, &t).second) {
      throw CheckpointError(Kind::malformed, "checkpoint: duplicate tensor '" + name + "'");
    }
  }
  const auto get = [&](const std::string& name) -> const Tensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw CheckpointError(Kind::malformed, "checkpoint: missing tensor '" + name + "'");
    }
    return *it->second;
  };
  const auto starts = [](const std::string& s, const std::string& prefix) {
    return s.compare(0, prefix.size(), prefix) == 0;
  };

  Checkpoint c;
  const std::vector<int> stages = read_ints(get("config/stage_channels"));
  if (stages.size() != 4) throw CheckpointError(Kind::malformed, "checkpoint: stage_channels needs 4 entries");
  std::copy(stages.begin(), stages.end(), c.network.stage_channels.begin());
  c.network.drb_rates_bottleneck = read_ints(get("config/drb_rates_bottleneck"));
  c.network.drb_rate_encoder = read_int(get("config/drb_rate_encoder"), "config/drb_rate_encoder");
  c.network.dspp_rates = read_ints(get("config/dspp_rates"));
  c.network.head_channels = read_int(get("config/head_channels"), "config/head_channels");
  const std::vector<int> size = read_ints(get("config/input_size"));
  if (size.size() != 2) throw CheckpointError(Kind::malformed, "checkpoint: input_size needs 2 entries");
  c.network.input_height = size[0];
  c.network.input_width = size[1];
  c.network.check_dspp_extent = read_int(get("config/check_dspp_extent"), "config/check_dspp_extent") != 0;
  const std::vector<int> tiles = read_ints(get("config/clahe_tiles"));
  if (tiles.size() != 2) throw CheckpointError(Kind::malformed, "checkpoint: clahe_tiles needs 2 entries");
  c.clahe.tiles_x = tiles[0];
  c.clahe.tiles_y = tiles[1];
  c.clahe.clip_limit = read_doubles(get("config/clahe_clip_limit"), 1, "config/clahe_clip_limit")[0];
  {
    const Tensor& t = get("meta/step");
    if (t.size() != 4) throw CheckpointError(Kind::malformed, "checkpoint: bad meta/step");
    c.step = static_cast<std::int64_t>(get_u64(t.data()));
  }

  for (const auto& [name, t] : tensors) {
    if (starts(name, "param/")) {
      c.params.weights[name.substr(6)] = t;
    } else if (starts(name, "bn/")) {
      const std::size_t slash = name.rfind('/');
      const std::string layer = name.substr(3, slash - 3);
      const std::string field = name.substr(slash + 1);
      grad::BatchNormState& st = c.params.batch_norm[layer];
      const std::vector<float> v(t.values().begin(), t.values().end());
      if (field == "running_mean") {
        st.running_mean = v;
      } else if (field == "running_var") {
        st.running_var = v;
      } else if (field == "hyper" && v.size() == 2) {
        st.momentum = v[0];
        st.eps = v[1];
      } else {
        throw CheckpointError(Kind::malformed, "checkpoint: unexpected tensor '" + name + "'");
      }
    }
  }

  if (by_name.count("adam/config")) {
    grad::AdamState a;
    const std::vector<double> cfg = read_doubles(get("adam/config"), 6, "adam/config");
    a.config.initial_lr = cfg[0];
    a.config.decay_rate = cfg[1];
    a.config.decay_interval = std::bit_cast<std::int64_t>(cfg[2]);
    a.config.beta1 = cfg[3];
    a.config.beta2 = cfg[4];
    a.config.eps = cfg[5];
    const Tensor& step = get("adam/step");
    if (step.size() != 4) throw CheckpointError(Kind::malformed, "checkpoint: bad adam/step");
    a.step_count = static_cast<std::int64_t>(get_u64(step.data()));
    for (const auto& [name, t] : tensors) {
      if (starts(name, "adam/m/")) a.first_moment[name.substr(7)] = t;
      if (starts(name, "adam/v/")) a.second_moment[name.substr(7)] = t;
    }
    c.optimizer = std::move(a);
  }
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  write_tensor_file(path, to_tensors(ckpt));
}

Checkpoint load_checkpoint(const fs::path& path) { return from_tensors(read_tensor_file(path)); }

bool bitwise_equal(const Checkpoint& a, const Checkpoint& b) {
  return encode_tensors(to_tensors(a)) == encode_tensors(to_tensors(b));
}

}  // namespace vseg::data
