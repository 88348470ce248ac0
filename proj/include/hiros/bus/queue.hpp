#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <utility>

#include "hiros/error.hpp"

namespace hiros::bus {

inline constexpr std::size_t kDefaultQueueBound = 64;

// Fixed-capacity FIFO that evicts the oldest element when full. Not
// synchronized; the owner holds the lock.
template <typename T>
class DropOldestQueue {
 public:
  explicit DropOldestQueue(std::size_t bound = kDefaultQueueBound) : bound_(bound) {
    if (bound == 0) throw ConfigError("queue bound must be positive");
  }

  // Returns true if an element was evicted to make room.
  bool push(T v) {
    ++pushed_;
    bool evicted = false;
    if (items_.size() == bound_) {
      items_.pop_front();
      ++dropped_;
      evicted = true;
    }
    items_.push_back(std::move(v));
    return evicted;
  }

  std::optional<T> pop() {
    if (items_.empty()) return std::nullopt;
    T v = std::move(items_.front());
    items_.pop_front();
    ++popped_;
    return v;
  }

  bool empty() const { return items_.empty(); }
  std::size_t size() const { return items_.size(); }
  std::size_t bound() const { return bound_; }
  std::uint64_t dropped() const { return dropped_; }
  std::uint64_t pushed() const { return pushed_; }
  std::uint64_t popped() const { return popped_; }

 private:
  std::size_t bound_;
  std::deque<T> items_;
  std::uint64_t dropped_ = 0;
  std::uint64_t pushed_ = 0;
  std::uint64_t popped_ = 0;
};

}  // namespace hiros::bus
