#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "hiros/error.hpp"

namespace hiros::model {

using Triple = std::array<std::size_t, 3>;

// One conv3d -> ReLU -> maxpool3d stage. Convolution uses "same" zero padding
// (kernel/2 on each axis, stride 1), so only pooling shrinks the clip.
struct ConvBlock {
  std::size_t filters = 8;
  Triple kernel{3, 3, 3};
  Triple pool{2, 2, 2};

  bool operator==(const ConvBlock&) const = default;
};

struct ModelConfig {
  std::size_t frames = 16;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 1;
  ConvBlock block1{8, {3, 3, 3}, {2, 2, 2}};
  ConvBlock block2{16, {3, 3, 3}, {2, 2, 2}};
  std::size_t lstm_hidden = 64;
  std::size_t num_classes = 27;
  std::uint64_t seed = 1;

  bool operator==(const ModelConfig&) const = default;

  // Spatiotemporal extent left after both blocks: {T, H, W}.
  Triple feature_extent() const {
    Triple dims{frames, height, width};
    for (const ConvBlock* b : {&block1, &block2}) {
      for (int a = 0; a < 3; ++a) {
        if (b->pool[a] == 0 || dims[a] % b->pool[a] != 0) {
          throw ConfigError("pool window " + std::to_string(b->pool[a]) + " does not divide axis " +
                            std::to_string(a) + " of length " + std::to_string(dims[a]));
        }
        dims[a] /= b->pool[a];
      }
    }
    return dims;
  }

  // Features fed to the LSTM at each remaining time step.
  std::size_t lstm_input() const {
    const Triple e = feature_extent();
    return block2.filters * e[1] * e[2];
  }

  void validate() const {
    if (frames == 0 || height == 0 || width == 0 || channels == 0 || lstm_hidden == 0 ||
        num_classes == 0 || block1.filters == 0 || block2.filters == 0) {
      throw ConfigError("model dimensions must be positive");
    }
    for (const ConvBlock* b : {&block1, &block2}) {
      for (std::size_t k : b->kernel) {
        if (k == 0 || k % 2 == 0) throw ConfigError("conv kernel sizes must be odd and positive");
      }
    }
    const Triple e = feature_extent();
    if (e[0] < 1 || e[1] < 1 || e[2] < 1) throw ConfigError("pooling leaves an empty feature map");
  }

  std::size_t clip_values() const { return frames * height * width * channels; }
};

inline void to_json(nlohmann::json& j, const ConvBlock& b) {
  j = nlohmann::json{{"filters", b.filters}, {"kernel", b.kernel}, {"pool", b.pool}};
}

inline void from_json(const nlohmann::json& j, ConvBlock& b) {
  j.at("filters").get_to(b.filters);
  j.at("kernel").get_to(b.kernel);
  j.at("pool").get_to(b.pool);
}

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"frames", c.frames},         {"height", c.height},
                     {"width", c.width},           {"channels", c.channels},
                     {"block1", c.block1},         {"block2", c.block2},
                     {"lstm_hidden", c.lstm_hidden}, {"num_classes", c.num_classes},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("frames").get_to(c.frames);
  j.at("height").get_to(c.height);
  j.at("width").get_to(c.width);
  j.at("channels").get_to(c.channels);
  j.at("block1").get_to(c.block1);
  j.at("block2").get_to(c.block2);
  j.at("lstm_hidden").get_to(c.lstm_hidden);
  j.at("num_classes").get_to(c.num_classes);
  j.at("seed").get_to(c.seed);
}

}  // namespace hiros::model
