#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>

#include "hiros/error.hpp"

namespace hiros::dataset {

enum class ClassKind { kCommand, kBackground };

struct GestureClass {
  int id;
  std::string_view label;
  ClassKind kind;
};

inline constexpr std::size_t kNumClasses = 27;
inline constexpr std::size_t kNumCommands = 25;
inline constexpr int kDoingNothing = 25;
inline constexpr int kDoingSomethingElse = 26;

// The 25 robot commands in their published numbering, followed by the two
// background classes.
inline constexpr std::array<GestureClass, kNumClasses> kClassTable{{
    {0, "Start", ClassKind::kCommand},
    {1, "Stop", ClassKind::kCommand},
    {2, "Handwave", ClassKind::kCommand},
    {3, "Resume", ClassKind::kCommand},
    {4, "Pause", ClassKind::kCommand},
    {5, "Agree", ClassKind::kCommand},
    {6, "Disagree", ClassKind::kCommand},
    {7, "Repeat", ClassKind::kCommand},
    {8, "Undo", ClassKind::kCommand},
    {9, "Point to an Object", ClassKind::kCommand},
    {10, "Point to an Area", ClassKind::kCommand},
    {11, "I will Follow You", ClassKind::kCommand},
    {12, "Follow Me", ClassKind::kCommand},
    {13, "Watch Me", ClassKind::kCommand},
    {14, "Watch Out", ClassKind::kCommand},
    {15, "Speed up", ClassKind::kCommand},
    {16, "Slow down", ClassKind::kCommand},
    {17, "Thumbs up", ClassKind::kCommand},
    {18, "Thumbs down", ClassKind::kCommand},
    {19, "Give me an item", ClassKind::kCommand},
    {20, "Receive an item", ClassKind::kCommand},
    {21, "Move backwards", ClassKind::kCommand},
    {22, "Come forward", ClassKind::kCommand},
    {23, "Move to the left", ClassKind::kCommand},
    {24, "Move to the right", ClassKind::kCommand},
    {25, "Doing nothing", ClassKind::kBackground},
    {26, "Doing something else", ClassKind::kBackground},
}};

inline constexpr const std::array<GestureClass, kNumClasses>& class_table() { return kClassTable; }

inline const GestureClass& gesture_class(int id) {
  if (id < 0 || static_cast<std::size_t>(id) >= kNumClasses) {
    throw IndexError("gesture class id " + std::to_string(id) + " outside [0, 27)");
  }
  return kClassTable[static_cast<std::size_t>(id)];
}

inline bool is_background(int id) { return gesture_class(id).kind == ClassKind::kBackground; }

}  // namespace hiros::dataset
