#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hiros/dataset/classes.hpp"
#include "hiros/dataset/clip_codec.hpp"
#include "hiros/error.hpp"
#include "hiros/model/gesture_net.hpp"
#include "hiros/model/training.hpp"

namespace hiros::stream {

using dataset::Frame;

// Holds the most recent T frames in arrival order.
class FrameRing {
 public:
  FrameRing(std::size_t capacity, std::size_t frame_size)
      : capacity_(capacity), frame_size_(frame_size), data_(capacity * frame_size) {
    if (capacity == 0 || frame_size == 0) throw ConfigError("frame ring needs positive capacity and frame size");
  }

  void push(std::span<const std::uint8_t> frame) {
    if (frame.size() != frame_size_) {
      throw DimensionError("frame has " + std::to_string(frame.size()) + " bytes, ring expects " +
                           std::to_string(frame_size_));
    }
    std::copy(frame.begin(), frame.end(), data_.begin() + static_cast<std::ptrdiff_t>(head_ * frame_size_));
    head_ = (head_ + 1) % capacity_;
    size_ = std::min(size_ + 1, capacity_);
    ++frames_seen_;
  }

  bool full() const noexcept { return size_ == capacity_; }
  std::size_t size() const noexcept { return size_; }
  std::size_t capacity() const noexcept { return capacity_; }
  std::uint64_t frames_seen() const noexcept { return frames_seen_; }

  // Buffered frames oldest first, concatenated (T x H x W x C).
  std::vector<std::uint8_t> clip() const {
    std::vector<std::uint8_t> out;
    out.reserve(size_ * frame_size_);
    const std::size_t start = full() ? head_ : 0;
    for (std::size_t i = 0; i < size_; ++i) {
      const std::size_t slot = (start + i) % capacity_;
      out.insert(out.end(), data_.begin() + static_cast<std::ptrdiff_t>(slot * frame_size_),
                 data_.begin() + static_cast<std::ptrdiff_t>((slot + 1) * frame_size_));
    }
    return out;
  }

  void clear() noexcept {
    head_ = size_ = 0;
    frames_seen_ = 0;
  }

 private:
  std::size_t capacity_;
  std::size_t frame_size_;
  std::vector<std::uint8_t> data_;
  std::size_t head_ = 0;
  std::size_t size_ = 0;
  std::uint64_t frames_seen_ = 0;
};

struct SmootherConfig {
  std::size_t vote_window = 5;
  double emit_threshold = 0.85;
  std::size_t refractory_windows = 8;
  std::size_t stride = 4;
  // Classes that never produce events in addition to the two background classes.
  std::set<int> excluded;

  void validate() const {
    if (vote_window == 0) throw ConfigError("vote window must be at least 1");
    if (stride == 0) throw ConfigError("stride must be at least 1");
    if (!(emit_threshold >= 0.0 && emit_threshold <= 1.0)) throw ConfigError("emit threshold must lie in [0, 1]");
  }
};

struct PredictionEvent {
  int class_id = 0;
  std::string label;
  double prob = 0.0;  // mean probability over the vote window
  std::uint64_t window = 0;
  std::int64_t ts_ms = 0;

  bool operator==(const PredictionEvent&) const = default;
};

inline void to_json(nlohmann::json& j, const PredictionEvent& e) {
  j = nlohmann::json{{"class_id", e.class_id}, {"label", e.label}, {"prob", e.prob}, {"window", e.window},
                     {"ts_ms", e.ts_ms}};
}

inline void from_json(const nlohmann::json& j, PredictionEvent& e) {
  j.at("class_id").get_to(e.class_id);
  j.at("label").get_to(e.label);
  j.at("prob").get_to(e.prob);
  j.at("window").get_to(e.window);
  j.at("ts_ms").get_to(e.ts_ms);
}

// Majority vote over the last K windows. An event fires when one class is the
// argmax in more than K/2 of them, its mean probability over those K windows
// reaches the threshold, it is not a background or excluded class, and more
// than R windows have passed since the previous event.
class Smoother {
 public:
  explicit Smoother(SmootherConfig config = {}) : config_(std::move(config)) { config_.validate(); }

  const SmootherConfig& config() const noexcept { return config_; }

  std::optional<PredictionEvent> push(std::span<const double> probs, std::int64_t ts_ms = 0) {
    if (probs.empty()) throw DimensionError("smoother: empty probability row");
    if (!history_.empty() && probs.size() != history_.front().size()) {
      throw DimensionError("smoother: probability row width changed");
    }
    const std::uint64_t window = next_window_++;
    history_.emplace_back(probs.begin(), probs.end());
    if (history_.size() > config_.vote_window) history_.pop_front();
    if (history_.size() < config_.vote_window) return std::nullopt;

    std::vector<std::size_t> votes(probs.size(), 0);
    for (const auto& row : history_) {
      ++votes[static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin())];
    }
    const auto best = static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    if (2 * votes[best] <= config_.vote_window) return std::nullopt;
    const int cls = static_cast<int>(best);
    if (cls == dataset::kDoingNothing || cls == dataset::kDoingSomethingElse || config_.excluded.contains(cls)) {
      return std::nullopt;
    }
    double mean = 0.0;
    for (const auto& row : history_) mean += row[best];
    mean /= static_cast<double>(history_.size());
    if (mean < config_.emit_threshold) return std::nullopt;
    if (last_emit_ && window - *last_emit_ <= config_.refractory_windows) return std::nullopt;
    last_emit_ = window;
    return PredictionEvent{cls, label_of(cls), mean, window, ts_ms};
  }

  void reset() {
    history_.clear();
    last_emit_.reset();
    next_window_ = 0;
  }

 private:
  static std::string label_of(int cls) {
    return static_cast<std::size_t>(cls) < dataset::kNumClasses ? std::string(dataset::gesture_class(cls).label)
                                                                 : "class " + std::to_string(cls);
  }

  SmootherConfig config_;
  std::deque<std::vector<double>> history_;
  std::optional<std::uint64_t> last_emit_;
  std::uint64_t next_window_ = 0;
};

// Number of inferences after n frames with window t and stride s.
constexpr std::uint64_t expected_inferences(std::uint64_t n, std::uint64_t t, std::uint64_t s) {
  return n < t ? 0 : (n - t) / s + 1;
}

// Frame ring + network + smoother.
class Recognizer {
 public:
  struct Window {
    std::uint64_t index = 0;
    std::vector<double> probs;
  };

  Recognizer(model::GestureNet net, SmootherConfig config = {})
      : net_(std::move(net)),
        ring_(net_.config().frames, net_.config().height * net_.config().width * net_.config().channels),
        smoother_(std::move(config)) {}

  const model::ModelConfig& model_config() const noexcept { return net_.config(); }
  const SmootherConfig& smoother_config() const noexcept { return smoother_.config(); }
  std::uint64_t inferences() const noexcept { return inferences_; }

  // Buffers a frame; once the ring is full, runs the network on every S-th frame.
  std::optional<Window> push_frame(const Frame& frame) {
    const auto& c = net_.config();
    if (frame.height != c.height || frame.width != c.width || frame.channels != c.channels) {
      throw DimensionError("frame is " + std::to_string(frame.height) + "x" + std::to_string(frame.width) + "x" +
                           std::to_string(frame.channels) + ", model expects " + std::to_string(c.height) + "x" +
                           std::to_string(c.width) + "x" + std::to_string(c.channels));
    }
    ring_.push(frame.pixels);
    if (!ring_.full()) return std::nullopt;
    if ((ring_.frames_seen() - ring_.capacity()) % smoother_.config().stride != 0) return std::nullopt;
    const auto pixels = ring_.clip();
    const model::Sample sample{pixels, 0};
    const std::size_t idx = 0;
    const tensor::Tensor probs = net_.forward(model::make_batch(c, std::span(&sample, 1), std::span(&idx, 1)));
    Window w{inferences_++, std::vector<double>(probs.data().begin(), probs.data().end())};
    return w;
  }

  // push_frame followed by the smoother; returns the window (if any) and event (if any).
  std::pair<std::optional<Window>, std::optional<PredictionEvent>> process(const Frame& frame,
                                                                           std::int64_t ts_ms = 0) {
    auto w = push_frame(frame);
    if (!w) return {std::nullopt, std::nullopt};
    auto e = smoother_.push(w->probs, ts_ms);
    return {std::move(w), std::move(e)};
  }

  void reset() {
    ring_.clear();
    smoother_.reset();
    inferences_ = 0;
  }

 private:
  model::GestureNet net_;
  FrameRing ring_;
  Smoother smoother_;
  std::uint64_t inferences_ = 0;
};

}  // namespace hiros::stream
