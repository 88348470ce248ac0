#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hiros/dataset/clip.hpp"
#include "hiros/error.hpp"

namespace hiros::dataset {

// GCLP clip layout, integers big-endian:
//   "GCLP" | u8 version=1 | u16 T | u16 H | u16 W | u16 C | u16 class id |
//   u32 participant id | u8 stage | u64 variant seed | T*H*W*C pixel bytes
inline constexpr std::uint8_t kClipVersion = 1;
inline constexpr std::size_t kClipHeaderSize = 28;

// Streaming frames reuse the magic/version/dimension prefix with T = 1 and no
// label fields: "GCLP" | u8 version | u16 1 | u16 H | u16 W | u16 C | pixels.
inline constexpr std::size_t kFrameHeaderSize = 13;

namespace detail {

inline void put_be(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = bytes - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get_be(std::span<const std::uint8_t> in, std::size_t at, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v = (v << 8) | in[at + static_cast<std::size_t>(i)];
  return v;
}

inline void check_prefix(std::span<const std::uint8_t> bytes, std::size_t header, const char* what) {
  if (bytes.size() < 4) throw FormatError(std::string(what) + " shorter than its magic", bytes.size());
  if (!(bytes[0] == 'G' && bytes[1] == 'C' && bytes[2] == 'L' && bytes[3] == 'P')) {
    throw FormatError(std::string(what) + " has bad magic", 0);
  }
  if (bytes.size() < 5) throw FormatError(std::string(what) + " truncated before version", bytes.size());
  if (bytes[4] != kClipVersion) {
    throw FormatError(std::string(what) + " has unsupported version " + std::to_string(bytes[4]), 4);
  }
  if (bytes.size() < header) throw FormatError(std::string(what) + " header truncated", bytes.size());
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_clip(const Clip& clip) {
  if (clip.pixels.size() != clip.pixel_count()) {
    throw InputError("clip pixel buffer does not match its dimensions");
  }
  std::vector<std::uint8_t> out{'G', 'C', 'L', 'P', kClipVersion};
  out.reserve(kClipHeaderSize + clip.pixels.size());
  detail::put_be(out, clip.frames, 2);
  detail::put_be(out, clip.height, 2);
  detail::put_be(out, clip.width, 2);
  detail::put_be(out, clip.channels, 2);
  detail::put_be(out, clip.class_id, 2);
  detail::put_be(out, clip.participant_id, 4);
  detail::put_be(out, clip.stage, 1);
  detail::put_be(out, clip.variant_seed, 8);
  out.insert(out.end(), clip.pixels.begin(), clip.pixels.end());
  return out;
}

inline Clip decode_clip(std::span<const std::uint8_t> bytes) {
  detail::check_prefix(bytes, kClipHeaderSize, "clip");
  Clip c;
  c.frames = static_cast<std::uint16_t>(detail::get_be(bytes, 5, 2));
  c.height = static_cast<std::uint16_t>(detail::get_be(bytes, 7, 2));
  c.width = static_cast<std::uint16_t>(detail::get_be(bytes, 9, 2));
  c.channels = static_cast<std::uint16_t>(detail::get_be(bytes, 11, 2));
  c.class_id = static_cast<std::uint16_t>(detail::get_be(bytes, 13, 2));
  c.participant_id = static_cast<std::uint32_t>(detail::get_be(bytes, 15, 4));
  c.stage = static_cast<std::uint8_t>(detail::get_be(bytes, 19, 1));
  c.variant_seed = detail::get_be(bytes, 20, 8);
  const std::size_t n = c.pixel_count();
  if (bytes.size() - kClipHeaderSize < n) {
    throw FormatError("clip payload truncated: expected " + std::to_string(n) + " pixels", bytes.size());
  }
  if (bytes.size() - kClipHeaderSize > n) {
    throw FormatError("clip has trailing bytes", kClipHeaderSize + n);
  }
  c.pixels.assign(bytes.begin() + kClipHeaderSize, bytes.end());
  return c;
}

struct Frame {
  std::uint16_t height = 0;
  std::uint16_t width = 0;
  std::uint16_t channels = 0;
  std::vector<std::uint8_t> pixels;  // H x W x C

  bool operator==(const Frame&) const = default;
};

inline std::vector<std::uint8_t> encode_frame(const Frame& f) {
  if (f.pixels.size() != static_cast<std::size_t>(f.height) * f.width * f.channels) {
    throw InputError("frame pixel buffer does not match its dimensions");
  }
  std::vector<std::uint8_t> out{'G', 'C', 'L', 'P', kClipVersion};
  out.reserve(kFrameHeaderSize + f.pixels.size());
  detail::put_be(out, 1, 2);
  detail::put_be(out, f.height, 2);
  detail::put_be(out, f.width, 2);
  detail::put_be(out, f.channels, 2);
  out.insert(out.end(), f.pixels.begin(), f.pixels.end());
  return out;
}

inline Frame decode_frame(std::span<const std::uint8_t> bytes) {
  detail::check_prefix(bytes, kFrameHeaderSize, "frame");
  if (detail::get_be(bytes, 5, 2) != 1) throw FormatError("frame payload must carry T = 1", 5);
  Frame f;
  f.height = static_cast<std::uint16_t>(detail::get_be(bytes, 7, 2));
  f.width = static_cast<std::uint16_t>(detail::get_be(bytes, 9, 2));
  f.channels = static_cast<std::uint16_t>(detail::get_be(bytes, 11, 2));
  const std::size_t n = static_cast<std::size_t>(f.height) * f.width * f.channels;
  if (bytes.size() - kFrameHeaderSize != n) {
    throw FormatError("frame payload length does not match " + std::to_string(n) + " pixels",
                      std::min(bytes.size(), kFrameHeaderSize + n));
  }
  f.pixels.assign(bytes.begin() + kFrameHeaderSize, bytes.end());
  return f;
}

}  // namespace hiros::dataset
