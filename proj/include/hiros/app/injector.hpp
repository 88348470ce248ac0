#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "hiros/dataset/classes.hpp"
#include "hiros/dataset/clip_codec.hpp"
#include "hiros/dataset/generator.hpp"
#include "hiros/model/config.hpp"

namespace hiros::app {

// Synthetic camera feed for one injected gesture: the resting pose, the
// gesture performed continuously, then rest again.
struct InjectionOptions {
  std::size_t lead_frames = 16;
  std::size_t gesture_frames = 40;
  std::size_t tail_frames = 24;
  dataset::JitterLevels jitter{0.10, 0.0, 2.0, 8.0};
  std::uint64_t seed = 1;
};

inline std::vector<dataset::Frame> render_injection(const model::ModelConfig& cfg, int class_id,
                                                    const InjectionOptions& opt, std::uint64_t sequence) {
  dataset::gesture_class(class_id);  // validates the id
  static const auto pool = dataset::primitive_pool();
  const dataset::RenderOptions ro{cfg.height, cfg.width, cfg.channels, opt.jitter.noise_sigma};
  const std::size_t frame_size = cfg.height * cfg.width * cfg.channels;
  std::mt19937_64 rng(dataset::detail::mix(opt.seed, sequence));

  std::vector<dataset::Frame> out;
  const auto append = [&](int cls, std::size_t count) {
    if (count == 0) return;
    const dataset::Jitter j = opt.jitter.draw(rng);
    const auto& proto = pool[static_cast<std::size_t>(dataset::kCanonicalPrimitive[static_cast<std::size_t>(cls)])];
    const auto pixels = dataset::render_frames(proto, j, ro, 0, count, cfg.frames, rng);
    for (std::size_t f = 0; f < count; ++f) {
      dataset::Frame fr{static_cast<std::uint16_t>(cfg.height), static_cast<std::uint16_t>(cfg.width),
                        static_cast<std::uint16_t>(cfg.channels), {}};
      fr.pixels.assign(pixels.begin() + static_cast<std::ptrdiff_t>(f * frame_size),
                       pixels.begin() + static_cast<std::ptrdiff_t>((f + 1) * frame_size));
      out.push_back(std::move(fr));
    }
  };
  append(dataset::kDoingNothing, opt.lead_frames);
  append(class_id, opt.gesture_frames);
  append(dataset::kDoingNothing, opt.tail_frames);
  return out;
}

}  // namespace hiros::app
