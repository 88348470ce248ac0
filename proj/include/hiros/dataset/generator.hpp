#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hiros/dataset/classes.hpp"
#include "hiros/dataset/clip.hpp"
#include "hiros/error.hpp"

namespace hiros::dataset {

// ---------------------------------------------------------------------------
// Motion primitives
//
// An actor is a torso rectangle with a head and two hand discs. Each hand
// follows anchor + amplitude * shape(2*pi*(frequency*t + phase)) for t in
// [0, 1) across the clip; coordinates are normalized to the frame.
// ---------------------------------------------------------------------------

enum class MotionShape : std::uint8_t { kStatic, kHorizontal, kVertical, kCircle, kDiagonal };

struct HandMotion {
  double anchor_x = 0.5;
  double anchor_y = 0.5;
  MotionShape shape = MotionShape::kStatic;
  double amplitude = 0.0;
  double frequency = 1.0;
  double phase = 0.0;

  std::array<double, 2> at(double t, double amp_scale, double phase_shift) const {
    const double a = amplitude * amp_scale;
    const double th = 2.0 * std::numbers::pi * (frequency * t + phase + phase_shift);
    switch (shape) {
      case MotionShape::kStatic: return {anchor_x, anchor_y};
      case MotionShape::kHorizontal: return {anchor_x + a * std::sin(th), anchor_y};
      case MotionShape::kVertical: return {anchor_x, anchor_y + a * std::sin(th)};
      case MotionShape::kCircle: return {anchor_x + a * std::cos(th), anchor_y + a * std::sin(th)};
      case MotionShape::kDiagonal:
        return {anchor_x + 0.7 * a * std::sin(th), anchor_y - 0.7 * a * std::sin(th)};
    }
    return {anchor_x, anchor_y};
  }
};

struct MotionPrototype {
  int id = 0;
  HandMotion left;   // appears on the image right
  HandMotion right;  // appears on the image left
};

namespace detail {

// Right-hand repertoire (image-left side). Left-hand options mirror the first
// five of these across the vertical midline.
inline const std::array<HandMotion, 8>& hand_repertoire() {
  static const std::array<HandMotion, 8> r{{
      {0.34, 0.80, MotionShape::kStatic, 0.0, 1.0, 0.0},       // at rest
      {0.38, 0.20, MotionShape::kStatic, 0.0, 1.0, 0.0},       // raised overhead
      {0.32, 0.30, MotionShape::kHorizontal, 0.10, 2.0, 0.0},  // wave beside head
      {0.38, 0.55, MotionShape::kVertical, 0.12, 1.0, 0.0},    // pump in front of chest
      {0.38, 0.52, MotionShape::kCircle, 0.10, 1.0, 0.0},      // circle at chest
      {0.20, 0.45, MotionShape::kStatic, 0.0, 1.0, 0.0},       // extended sideways
      {0.38, 0.50, MotionShape::kDiagonal, 0.12, 1.0, 0.25},   // diagonal sweep
      {0.38, 0.74, MotionShape::kHorizontal, 0.10, 2.0, 0.5},  // low wave
  }};
  return r;
}

inline HandMotion mirrored(HandMotion m) {
  m.anchor_x = 1.0 - m.anchor_x;
  if (m.shape == MotionShape::kCircle) m.phase += 0.5;
  return m;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return splitmix64(a ^ splitmix64(b)); }

}  // namespace detail

inline constexpr std::size_t kLeftOptions = 5;
inline constexpr std::size_t kDefaultPoolSize = 40;

// Pool of distinct two-hand motion primitives; primitive i combines right-hand
// option i / 5 with left-hand option i % 5. Primitive 0 is the resting pose.
inline std::vector<MotionPrototype> primitive_pool(std::size_t size = kDefaultPoolSize) {
  const auto& rep = detail::hand_repertoire();
  const std::size_t capacity = rep.size() * kLeftOptions;
  if (size > capacity) {
    throw ConfigError("primitive pool size " + std::to_string(size) + " exceeds " +
                      std::to_string(capacity) + " distinct primitives");
  }
  std::vector<MotionPrototype> pool;
  pool.reserve(size);
  for (std::size_t i = 0; i < size; ++i) {
    MotionPrototype p;
    p.id = static_cast<int>(i);
    p.right = rep[i / kLeftOptions];
    p.left = detail::mirrored(rep[i % kLeftOptions]);
    pool.push_back(p);
  }
  return pool;
}

// Canonical (demonstrated) primitive for each class id. "Doing nothing" is the
// resting pose; the rest are fixed, pairwise distinct picks from the pool.
inline constexpr std::array<int, kNumClasses> kCanonicalPrimitive{
    6,   // Start: both hands raised
    25,  // Stop: right arm extended sideways
    10,  // Handwave
    15,  // Resume: chest pump
    1,   // Pause: left hand raised
    20,  // Agree: chest circle
    2,   // Disagree: left wave beside head
    24,  // Repeat: circles with both hands
    30,  // Undo: diagonal sweep
    27,  // Point to an Object: extended arm + left wave
    26,  // Point to an Area
    13,  // I will Follow You
    17,  // Follow Me
    12,  // Watch Me
    11,  // Watch Out
    18,  // Speed up
    16,  // Slow down
    5,   // Thumbs up
    3,   // Thumbs down
    21,  // Give me an item
    22,  // Receive an item
    35,  // Move backwards
    8,   // Come forward
    4,   // Move to the left
    33,  // Move to the right
    0,   // Doing nothing
    37,  // Doing something else
};

struct Jitter {
  double amplitude_scale = 1.0;
  double phase_shift = 0.0;
  double offset_x_px = 0.0;
  double offset_y_px = 0.0;
};

struct RenderOptions {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 1;
  double noise_sigma = 8.0;
};

namespace detail {

inline constexpr double kBackground = 30.0;
inline constexpr double kTorso = 110.0;
inline constexpr double kHead = 150.0;
inline constexpr double kHand = 235.0;
inline constexpr double kHandRadius = 0.07;

inline double coverage(double signed_dist) { return std::clamp(0.5 - signed_dist, 0.0, 1.0); }

}  // namespace detail

// Renders `count` consecutive frames of a primitive starting at frame
// `first`, with time advancing 1/period_frames per frame. Throws if a hand
// leaves the frame.
inline std::vector<std::uint8_t> render_frames(const MotionPrototype& proto, const Jitter& jitter,
                                               const RenderOptions& opt, std::size_t first,
                                               std::size_t count, std::size_t period_frames,
                                               std::mt19937_64& noise_rng) {
  const double w = static_cast<double>(opt.width);
  const double h = static_cast<double>(opt.height);
  const double scale = std::min(w, h);
  const double hand_r = detail::kHandRadius * scale;
  const double head_r = 0.09 * scale;
  std::normal_distribution<double> noise(0.0, opt.noise_sigma);
  std::vector<std::uint8_t> out(count * opt.height * opt.width * opt.channels);
  std::vector<double> frame(opt.height * opt.width);

  for (std::size_t f = 0; f < count; ++f) {
    const double t = static_cast<double>(first + f) / static_cast<double>(period_frames);
    const double ox = jitter.offset_x_px;
    const double oy = jitter.offset_y_px;
    std::array<std::array<double, 2>, 2> hands{};
    int hi = 0;
    for (const HandMotion* hm : {&proto.right, &proto.left}) {
      const auto p = hm->at(t, jitter.amplitude_scale, jitter.phase_shift);
      const double cx = p[0] * w + ox;
      const double cy = p[1] * h + oy;
      if (cx - hand_r < 0.0 || cx + hand_r > w || cy - hand_r < 0.0 || cy + hand_r > h) {
        throw ConfigError("primitive " + std::to_string(proto.id) + " hand leaves the frame at t=" +
                          std::to_string(t));
      }
      hands[hi++] = {cx, cy};
    }
    const double torso_l = 0.38 * w + ox, torso_r = 0.62 * w + ox;
    const double torso_t = 0.34 * h + oy, torso_b = 0.98 * h + oy;
    const double head_x = 0.5 * w + ox, head_y = 0.20 * h + oy;

    for (std::size_t y = 0; y < opt.height; ++y) {
      for (std::size_t x = 0; x < opt.width; ++x) {
        const double px = static_cast<double>(x) + 0.5;
        const double py = static_cast<double>(y) + 0.5;
        double v = detail::kBackground;
        const double torso_d = std::max({torso_l - px, px - torso_r, torso_t - py, py - torso_b});
        const double a_torso = detail::coverage(torso_d);
        v += (detail::kTorso - v) * a_torso;
        const double a_head = detail::coverage(std::hypot(px - head_x, py - head_y) - head_r);
        v += (detail::kHead - v) * a_head;
        for (const auto& c : hands) {
          const double a = detail::coverage(std::hypot(px - c[0], py - c[1]) - hand_r);
          v += (detail::kHand - v) * a;
        }
        frame[y * opt.width + x] = v;
      }
    }
    std::uint8_t* dst = out.data() + f * opt.height * opt.width * opt.channels;
    for (std::size_t i = 0; i < frame.size(); ++i) {
      for (std::size_t ch = 0; ch < opt.channels; ++ch) {
        const double n = opt.noise_sigma > 0.0 ? noise(noise_rng) : 0.0;
        dst[i * opt.channels + ch] =
            static_cast<std::uint8_t>(std::clamp(std::lround(frame[i] + n), 0L, 255L));
      }
    }
  }
  return out;
}

// Per-clip jitter drawn from the noise levels of a generation spec.
struct JitterLevels {
  double amplitude = 0.15;  // relative, uniform in [-a, +a]
  double phase = 0.1;       // cycles, uniform in [-p, +p]
  double offset_px = 3.0;   // uniform in [-o, +o] on each axis
  double noise_sigma = 8.0;

  Jitter draw(std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Jitter j;
    j.amplitude_scale = 1.0 + amplitude * u(rng);
    j.phase_shift = phase * u(rng);
    j.offset_x_px = offset_px * u(rng);
    j.offset_y_px = offset_px * u(rng);
    return j;
  }
};

struct GenerationSpec {
  int stage = 2;
  std::size_t participants = 10;
  std::size_t clips_per_class = 5;  // per participant
  std::size_t classes = kNumClasses;  // ids 0 .. classes-1
  std::size_t frames = 16;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 1;
  JitterLevels noise;
  std::size_t pool_size = kDefaultPoolSize;
  std::uint64_t seed = 1;
};

inline void to_json(nlohmann::json& j, const GenerationSpec& s) {
  j = nlohmann::json{{"stage", s.stage},
                     {"participants", s.participants},
                     {"clips_per_class", s.clips_per_class},
                     {"classes", s.classes},
                     {"frames", s.frames},
                     {"height", s.height},
                     {"width", s.width},
                     {"channels", s.channels},
                     {"amplitude_jitter", s.noise.amplitude},
                     {"phase_jitter", s.noise.phase},
                     {"offset_px", s.noise.offset_px},
                     {"noise_sigma", s.noise.noise_sigma},
                     {"pool_size", s.pool_size},
                     {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, GenerationSpec& s) {
  j.at("stage").get_to(s.stage);
  j.at("participants").get_to(s.participants);
  j.at("clips_per_class").get_to(s.clips_per_class);
  j.at("classes").get_to(s.classes);
  j.at("frames").get_to(s.frames);
  j.at("height").get_to(s.height);
  j.at("width").get_to(s.width);
  j.at("channels").get_to(s.channels);
  j.at("amplitude_jitter").get_to(s.noise.amplitude);
  j.at("phase_jitter").get_to(s.noise.phase);
  j.at("offset_px").get_to(s.noise.offset_px);
  j.at("noise_sigma").get_to(s.noise.noise_sigma);
  j.at("pool_size").get_to(s.pool_size);
  j.at("seed").get_to(s.seed);
}

// Class -> primitive mapping of one uninstructed participant: a seeded draw
// without replacement from the pool, so the mapping is injective for that
// participant but differs between participants.
inline std::vector<int> stage1_mapping(std::uint64_t seed, std::uint32_t participant,
                                       std::size_t pool_size = kDefaultPoolSize) {
  if (pool_size < kNumClasses) {
    throw ConfigError("stage-1 primitive pool of " + std::to_string(pool_size) +
                      " is smaller than the " + std::to_string(kNumClasses) + " classes");
  }
  std::vector<int> ids(pool_size);
  for (std::size_t i = 0; i < pool_size; ++i) ids[i] = static_cast<int>(i);
  std::mt19937_64 rng(detail::mix(seed, 0x5157A6E1ULL + participant));
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(kNumClasses);
  return ids;
}

// Primitive a given participant performs for a class under the given stage.
inline int primitive_for(const GenerationSpec& spec, std::uint32_t participant, int class_id) {
  if (spec.stage == 1) {
    return stage1_mapping(spec.seed, participant, spec.pool_size)[static_cast<std::size_t>(class_id)];
  }
  return kCanonicalPrimitive[static_cast<std::size_t>(class_id)];
}

inline std::uint64_t clip_seed(std::uint64_t seed, int stage, std::uint32_t participant, int class_id,
                               std::size_t index) {
  std::uint64_t s = detail::mix(seed, static_cast<std::uint64_t>(stage));
  s = detail::mix(s, participant);
  s = detail::mix(s, static_cast<std::uint64_t>(class_id));
  return detail::mix(s, index);
}

// Renders a single clip; a pure function of its arguments.
inline Clip render_clip(const MotionPrototype& proto, const GenerationSpec& spec, int class_id,
                        std::uint32_t participant, std::uint64_t variant_seed) {
  std::mt19937_64 rng(variant_seed);
  const Jitter j = spec.noise.draw(rng);
  RenderOptions ro{spec.height, spec.width, spec.channels, spec.noise.noise_sigma};
  Clip c;
  c.frames = static_cast<std::uint16_t>(spec.frames);
  c.height = static_cast<std::uint16_t>(spec.height);
  c.width = static_cast<std::uint16_t>(spec.width);
  c.channels = static_cast<std::uint16_t>(spec.channels);
  c.class_id = static_cast<std::uint16_t>(class_id);
  c.participant_id = participant;
  c.stage = static_cast<std::uint8_t>(spec.stage);
  c.variant_seed = variant_seed;
  c.pixels = render_frames(proto, j, ro, 0, spec.frames, spec.frames, rng);
  return c;
}

inline void validate(const GenerationSpec& spec) {
  if (spec.stage != 1 && spec.stage != 2) throw ConfigError("stage must be 1 or 2");
  if (spec.classes == 0 || spec.classes > kNumClasses) {
    throw ConfigError("class count must be in [1, 27]");
  }
  if (spec.participants == 0 || spec.clips_per_class == 0) {
    throw ConfigError("participants and clips per class must be positive");
  }
  if (spec.frames == 0 || spec.height == 0 || spec.width == 0 || spec.channels == 0) {
    throw ConfigError("clip dimensions must be positive");
  }
  if (spec.stage == 1 && spec.pool_size < kNumClasses) {
    throw ConfigError("stage-1 primitive pool of " + std::to_string(spec.pool_size) +
                      " is smaller than the " + std::to_string(kNumClasses) + " classes");
  }
}

// All clips of a spec, ordered participant-major, then class, then index.
inline std::vector<Clip> generate(const GenerationSpec& spec) {
  validate(spec);
  const auto pool = primitive_pool(std::max<std::size_t>(spec.pool_size, kDefaultPoolSize));
  std::vector<Clip> clips;
  clips.reserve(spec.participants * spec.classes * spec.clips_per_class);
  for (std::uint32_t p = 0; p < spec.participants; ++p) {
    std::vector<int> mapping;
    if (spec.stage == 1) mapping = stage1_mapping(spec.seed, p, spec.pool_size);
    for (std::size_t c = 0; c < spec.classes; ++c) {
      const int cls = static_cast<int>(c);
      const int prim = spec.stage == 1 ? mapping[c] : kCanonicalPrimitive[c];
      for (std::size_t i = 0; i < spec.clips_per_class; ++i) {
        clips.push_back(render_clip(pool[static_cast<std::size_t>(prim)], spec, cls, p,
                                    clip_seed(spec.seed, spec.stage, p, cls, i)));
      }
    }
  }
  return clips;
}

}  // namespace hiros::dataset
