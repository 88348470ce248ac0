#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hiros/error.hpp"
#include "hiros/model/gesture_net.hpp"

namespace hiros::model {

// Checkpoint layout (all integers little-endian):
//   "GNET" | u8 version=1 | u32 config length | config JSON (UTF-8)
//   then for every parameter in network order: u64 element count | f64 values
inline constexpr std::uint8_t kCheckpointVersion = 1;

namespace detail {

inline void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what, bytes_.size());
    }
  }

  std::uint64_t le(int bytes, const char* what) {
    need(static_cast<std::size_t>(bytes), what);
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const GestureNet& net) {
  std::vector<std::uint8_t> out{'G', 'N', 'E', 'T', kCheckpointVersion};
  const std::string cfg = nlohmann::json(net.config()).dump();
  detail::put_le(out, cfg.size(), 4);
  out.insert(out.end(), cfg.begin(), cfg.end());
  for (const auto& p : net.parameters()) {
    detail::put_le(out, p.value.size(), 8);
    for (double v : p.value.data()) detail::put_le(out, std::bit_cast<std::uint64_t>(v), 8);
  }
  return out;
}

inline GestureNet decode_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::Reader r(bytes);
  const auto magic = r.take(4, "magic");
  if (!(magic[0] == 'G' && magic[1] == 'N' && magic[2] == 'E' && magic[3] == 'T')) {
    throw FormatError("bad checkpoint magic", 0);
  }
  const auto version = static_cast<std::uint8_t>(r.le(1, "version"));
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  }
  const std::size_t cfg_len = r.le(4, "config length");
  const std::size_t cfg_at = r.offset();
  const auto cfg_bytes = r.take(cfg_len, "config");
  ModelConfig cfg;
  try {
    cfg = nlohmann::json::parse(cfg_bytes.begin(), cfg_bytes.end()).get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid checkpoint config: ") + e.what(), cfg_at);
  }
  GestureNet net;
  try {
    net = GestureNet(cfg);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid checkpoint config: ") + e.what(), cfg_at);
  }
  for (auto& p : net.parameters()) {
    const std::size_t at = r.offset();
    const std::uint64_t count = r.le(8, "parameter length");
    if (count != p.value.size()) {
      throw FormatError("parameter " + p.name + " has " + std::to_string(count) +
                            " values, config implies " + std::to_string(p.value.size()),
                        at);
    }
    r.need(count * 8, "parameter values");
    for (double& v : p.value.data()) v = std::bit_cast<double>(r.le(8, "parameter values"));
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint", r.offset());
  return net;
}

inline void save_checkpoint(const GestureNet& net, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(net);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw InputError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw InputError("failed writing " + path.string());
}

inline GestureNet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                        std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace hiros::model
