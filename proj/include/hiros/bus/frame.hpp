#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hiros/error.hpp"

namespace hiros::bus {

// Wire layout, integers big-endian:
//   "HIRO" | u8 version=1 | u8 type | u16 topicLen | topic | u32 payloadLen | payload
inline constexpr std::uint8_t kWireVersion = 1;
inline constexpr std::size_t kFixedSize = 12;
inline constexpr std::uint32_t kMaxPayload = 64u << 20;

enum class MsgType : std::uint8_t { Pub = 0, Sub = 1, Unsub = 2, Ping = 3, Pong = 4 };

inline std::string_view to_string(MsgType t) {
  switch (t) {
    case MsgType::Pub: return "PUB";
    case MsgType::Sub: return "SUB";
    case MsgType::Unsub: return "UNSUB";
    case MsgType::Ping: return "PING";
    case MsgType::Pong: return "PONG";
  }
  return "?";
}

inline bool needs_topic(MsgType t) { return t == MsgType::Pub || t == MsgType::Sub || t == MsgType::Unsub; }

struct BusFrame {
  MsgType type = MsgType::Pub;
  std::string topic;
  std::vector<std::uint8_t> payload;

  bool operator==(const BusFrame&) const = default;

  static BusFrame pub(std::string topic, std::vector<std::uint8_t> payload) {
    return {MsgType::Pub, std::move(topic), std::move(payload)};
  }
  static BusFrame pub(std::string topic, std::string_view text) {
    return {MsgType::Pub, std::move(topic), std::vector<std::uint8_t>(text.begin(), text.end())};
  }
  static BusFrame sub(std::string topic) { return {MsgType::Sub, std::move(topic), {}}; }
  static BusFrame unsub(std::string topic) { return {MsgType::Unsub, std::move(topic), {}}; }
  static BusFrame ping() { return {MsgType::Ping, {}, {}}; }
  static BusFrame pong() { return {MsgType::Pong, {}, {}}; }

  std::string text() const { return std::string(payload.begin(), payload.end()); }
};

inline std::vector<std::uint8_t> encode(const BusFrame& f) {
  if (needs_topic(f.type) && f.topic.empty()) {
    throw InputError(std::string(to_string(f.type)) + " frame needs a topic");
  }
  if (f.topic.size() > 0xFFFF) throw InputError("topic longer than 65535 bytes");
  if (f.payload.size() > kMaxPayload) throw InputError("payload exceeds " + std::to_string(kMaxPayload) + " bytes");
  std::vector<std::uint8_t> out;
  out.reserve(kFixedSize + f.topic.size() + f.payload.size());
  out.insert(out.end(), {'H', 'I', 'R', 'O', kWireVersion, static_cast<std::uint8_t>(f.type)});
  const auto t = static_cast<std::uint16_t>(f.topic.size());
  out.push_back(static_cast<std::uint8_t>(t >> 8));
  out.push_back(static_cast<std::uint8_t>(t));
  out.insert(out.end(), f.topic.begin(), f.topic.end());
  const auto p = static_cast<std::uint32_t>(f.payload.size());
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(p >> s));
  out.insert(out.end(), f.payload.begin(), f.payload.end());
  return out;
}

struct Decoded {
  BusFrame frame;
  std::size_t consumed;
};

// Parses one frame from the front of a stream buffer. Returns nullopt when the
// bytes seen so far are a valid but incomplete prefix; throws FormatError as
// soon as the prefix cannot start a valid frame.
inline std::optional<Decoded> try_decode(std::span<const std::uint8_t> in) {
  static constexpr char kMagic[4] = {'H', 'I', 'R', 'O'};
  for (std::size_t i = 0; i < 4 && i < in.size(); ++i) {
    if (in[i] != static_cast<std::uint8_t>(kMagic[i])) throw FormatError("bad magic", i);
  }
  if (in.size() > 4 && in[4] != kWireVersion) {
    throw FormatError("unsupported version " + std::to_string(in[4]), 4);
  }
  if (in.size() > 5 && in[5] > static_cast<std::uint8_t>(MsgType::Pong)) {
    throw FormatError("unknown message type " + std::to_string(in[5]), 5);
  }
  if (in.size() < 8) return std::nullopt;
  const auto type = static_cast<MsgType>(in[5]);
  const std::size_t topic_len = (std::size_t(in[6]) << 8) | in[7];
  if (topic_len == 0 && needs_topic(type)) throw FormatError(std::string(to_string(type)) + " with empty topic", 6);
  const std::size_t plen_at = 8 + topic_len;
  if (in.size() < plen_at + 4) return std::nullopt;
  std::uint32_t payload_len = 0;
  for (std::size_t i = 0; i < 4; ++i) payload_len = (payload_len << 8) | in[plen_at + i];
  if (payload_len > kMaxPayload) throw FormatError("payload length " + std::to_string(payload_len) + " too large", plen_at);
  const std::size_t total = plen_at + 4 + payload_len;
  if (in.size() < total) return std::nullopt;
  Decoded d;
  d.frame.type = type;
  d.frame.topic.assign(reinterpret_cast<const char*>(in.data() + 8), topic_len);
  d.frame.payload.assign(in.begin() + static_cast<std::ptrdiff_t>(plen_at + 4), in.begin() + static_cast<std::ptrdiff_t>(total));
  d.consumed = total;
  return d;
}

// Decodes exactly one complete frame.
inline BusFrame decode(std::span<const std::uint8_t> in) {
  auto d = try_decode(in);
  if (!d) throw FormatError("truncated frame", in.size());
  if (d->consumed != in.size()) throw FormatError("trailing bytes after frame", d->consumed);
  return std::move(d->frame);
}

// Incremental decoder for a byte stream.
class FrameReader {
 public:
  void feed(std::span<const std::uint8_t> bytes) { buf_.insert(buf_.end(), bytes.begin(), bytes.end()); }

  std::optional<BusFrame> next() {
    auto d = try_decode(std::span(buf_).subspan(head_));
    if (!d) {
      compact();
      return std::nullopt;
    }
    head_ += d->consumed;
    return std::move(d->frame);
  }

  std::size_t buffered() const { return buf_.size() - head_; }

 private:
  void compact() {
    if (head_ == 0) return;
    buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(head_));
    head_ = 0;
  }

  std::vector<std::uint8_t> buf_;
  std::size_t head_ = 0;
};

}  // namespace hiros::bus
