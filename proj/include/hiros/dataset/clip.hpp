#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace hiros::dataset {

// A fixed-length grayscale (or multi-channel) clip, pixels stored T x H x W x C.
struct Clip {
  std::uint16_t frames = 0;
  std::uint16_t height = 0;
  std::uint16_t width = 0;
  std::uint16_t channels = 0;
  std::uint16_t class_id = 0;
  std::uint32_t participant_id = 0;
  std::uint8_t stage = 2;
  std::uint64_t variant_seed = 0;
  std::vector<std::uint8_t> pixels;

  std::size_t frame_size() const {
    return static_cast<std::size_t>(height) * width * channels;
  }
  std::size_t pixel_count() const { return frame_size() * frames; }

  bool operator==(const Clip&) const = default;
};

}  // namespace hiros::dataset
