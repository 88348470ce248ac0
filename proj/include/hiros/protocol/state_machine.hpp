#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hiros/dataset/classes.hpp"
#include "hiros/error.hpp"

namespace hiros::protocol {

// Values equal the gesture class ids 0..24.
enum class Command : int {
  Start,
  Stop,
  Handwave,
  Resume,
  Pause,
  Agree,
  Disagree,
  Repeat,
  Undo,
  PointToObject,
  PointToArea,
  WillFollowYou,
  FollowMe,
  WatchMe,
  WatchOut,
  SpeedUp,
  SlowDown,
  ThumbsUp,
  ThumbsDown,
  GiveItem,
  ReceiveItem,
  MoveBackwards,
  ComeForward,
  MoveLeft,
  MoveRight,
};

inline constexpr std::size_t kNumCommands = dataset::kNumCommands;

inline constexpr std::array<Command, kNumCommands> all_commands() {
  std::array<Command, kNumCommands> out{};
  for (std::size_t i = 0; i < kNumCommands; ++i) out[i] = static_cast<Command>(i);
  return out;
}

inline std::string_view command_name(Command c) { return dataset::gesture_class(static_cast<int>(c)).label; }

// Gestures dropped from the final system for low recall. They still map to
// commands; the recognizer can be configured to exclude them.
inline constexpr std::array<Command, 5> kDeprecated{Command::ReceiveItem, Command::GiveItem, Command::SpeedUp,
                                                   Command::SlowDown, Command::WillFollowYou};

inline bool is_deprecated(Command c) {
  for (Command d : kDeprecated)
    if (d == c) return true;
  return false;
}

// Command for a predicted class; background classes map to none.
inline std::optional<Command> map_prediction(int class_id) {
  if (class_id < 0 || static_cast<std::size_t>(class_id) >= dataset::kNumClasses) {
    throw ProtocolError("unknown gesture class id " + std::to_string(class_id));
  }
  if (dataset::is_background(class_id)) return std::nullopt;
  return static_cast<Command>(class_id);
}

enum class Attention { Active, Paused, Shutdown };
enum class Mode { Idle, BaseNav, ArmTargeting };
enum class Direction { Forward, Backward, Left, Right };
enum class ActionKind { BaseStep, ArmAdjust, ExecuteGraspHandover, ArmReset, None };

inline std::string_view to_string(Attention a) {
  switch (a) {
    case Attention::Active: return "ACTIVE";
    case Attention::Paused: return "PAUSED";
    case Attention::Shutdown: return "SHUTDOWN";
  }
  return "?";
}

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::Idle: return "IDLE";
    case Mode::BaseNav: return "BASE_NAV";
    case Mode::ArmTargeting: return "ARM_TARGETING";
  }
  return "?";
}

inline std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::Forward: return "forward";
    case Direction::Backward: return "backward";
    case Direction::Left: return "left";
    case Direction::Right: return "right";
  }
  return "?";
}

inline std::string_view to_string(ActionKind k) {
  switch (k) {
    case ActionKind::BaseStep: return "BASE_STEP";
    case ActionKind::ArmAdjust: return "ARM_ADJUST";
    case ActionKind::ExecuteGraspHandover: return "EXECUTE_GRASP_HANDOVER";
    case ActionKind::ArmReset: return "ARM_RESET";
    case ActionKind::None: return "NONE";
  }
  return "?";
}

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const std::array<E, N>& values, const char* what) {
  for (E v : values)
    if (to_string(v) == s) return v;
  throw ProtocolError(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

inline Attention parse_attention(std::string_view s) {
  return parse_enum(s, std::array{Attention::Active, Attention::Paused, Attention::Shutdown}, "attention");
}
inline Mode parse_mode(std::string_view s) {
  return parse_enum(s, std::array{Mode::Idle, Mode::BaseNav, Mode::ArmTargeting}, "mode");
}
inline Direction parse_direction(std::string_view s) {
  return parse_enum(s, std::array{Direction::Forward, Direction::Backward, Direction::Left, Direction::Right},
                    "direction");
}
inline ActionKind parse_action_kind(std::string_view s) {
  return parse_enum(s,
                    std::array{ActionKind::BaseStep, ActionKind::ArmAdjust, ActionKind::ExecuteGraspHandover,
                               ActionKind::ArmReset, ActionKind::None},
                    "action kind");
}

// Robot-frame unit vector of a direction: forward is +x, left is +y.
inline std::array<double, 2> unit(Direction d) {
  switch (d) {
    case Direction::Forward: return {1.0, 0.0};
    case Direction::Backward: return {-1.0, 0.0};
    case Direction::Left: return {0.0, 1.0};
    case Direction::Right: return {0.0, -1.0};
  }
  return {0.0, 0.0};
}

struct RobotAction {
  ActionKind kind = ActionKind::None;
  std::optional<Direction> dir;

  bool operator==(const RobotAction&) const = default;
};

inline void to_json(nlohmann::json& j, const RobotAction& a) {
  j = nlohmann::json{{"kind", to_string(a.kind)}};
  if (a.dir) j["dir"] = to_string(*a.dir);
}

inline void from_json(const nlohmann::json& j, RobotAction& a) {
  a.kind = parse_action_kind(j.at("kind").get<std::string>());
  a.dir.reset();
  if (j.contains("dir")) a.dir = parse_direction(j.at("dir").get<std::string>());
  if ((a.kind == ActionKind::BaseStep || a.kind == ActionKind::ArmAdjust) != a.dir.has_value()) {
    throw ProtocolError(std::string("action ") + std::string(to_string(a.kind)) +
                        (a.dir ? " takes no direction" : " requires a direction"));
  }
}

struct ControlState {
  Attention attention = Attention::Active;
  Mode mode = Mode::Idle;
  // Accumulated arm adjustment, in adjustment steps along robot x and y.
  std::optional<std::array<int, 2>> pending_target;

  bool operator==(const ControlState&) const = default;
};

inline void to_json(nlohmann::json& j, const ControlState& s) {
  j = nlohmann::json{{"attention", to_string(s.attention)}, {"mode", to_string(s.mode)}};
  j["pending_target"] = s.pending_target ? nlohmann::json(*s.pending_target) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, ControlState& s) {
  s.attention = parse_attention(j.at("attention").get<std::string>());
  s.mode = parse_mode(j.at("mode").get<std::string>());
  s.pending_target.reset();
  if (j.contains("pending_target") && !j.at("pending_target").is_null()) {
    s.pending_target = j.at("pending_target").get<std::array<int, 2>>();
  }
}

struct StepResult {
  ControlState state;
  std::vector<RobotAction> actions;
  // True when the command was accepted but carries no robot semantics here.
  bool ignored = false;
};

inline std::optional<Direction> direction_of(Command c) {
  switch (c) {
    case Command::ComeForward: return Direction::Forward;
    case Command::MoveBackwards: return Direction::Backward;
    case Command::MoveLeft: return Direction::Left;
    case Command::MoveRight: return Direction::Right;
    default: return std::nullopt;
  }
}

// Transition function of the attention-gated controller. Pure.
inline StepResult step(const ControlState& s, Command c) {
  StepResult r{s, {}, false};
  const auto none = [&r] {
    r.actions = {RobotAction{}};
    return r;
  };
  switch (s.attention) {
    case Attention::Shutdown:
      return none();
    case Attention::Paused:
      if (c == Command::Resume) {
        r.state.attention = Attention::Active;
      } else if (c == Command::Stop) {
        r.state.attention = Attention::Shutdown;
      }
      return none();
    case Attention::Active:
      break;
  }
  switch (c) {
    case Command::Pause:
      r.state.attention = Attention::Paused;
      return none();
    case Command::Stop:
      r.state.attention = Attention::Shutdown;
      r.state.mode = Mode::Idle;
      r.state.pending_target.reset();
      return none();
    case Command::Start:
      if (s.mode != Mode::BaseNav) {
        r.state.mode = Mode::BaseNav;
        r.state.pending_target.reset();
      }
      return none();
    case Command::PointToObject:
      r.state.mode = Mode::ArmTargeting;
      r.state.pending_target = std::array<int, 2>{0, 0};
      return none();
    case Command::Resume:
      if (s.mode == Mode::ArmTargeting) {
        r.state.mode = Mode::Idle;
        r.state.pending_target.reset();
        r.actions = {RobotAction{ActionKind::ExecuteGraspHandover, std::nullopt}};
        return r;
      }
      return none();
    case Command::Undo:
      r.state.mode = Mode::Idle;
      r.state.pending_target.reset();
      r.actions = {RobotAction{ActionKind::ArmReset, std::nullopt}};
      return r;
    default:
      break;
  }
  if (const auto dir = direction_of(c)) {
    if (s.mode == Mode::BaseNav) {
      r.actions = {RobotAction{ActionKind::BaseStep, dir}};
      return r;
    }
    if (s.mode == Mode::ArmTargeting) {
      auto target = s.pending_target.value_or(std::array<int, 2>{0, 0});
      const auto u = unit(*dir);
      target[0] += static_cast<int>(u[0]);
      target[1] += static_cast<int>(u[1]);
      r.state.pending_target = target;
      r.actions = {RobotAction{ActionKind::ArmAdjust, dir}};
      return r;
    }
    return none();
  }
  r.ignored = true;
  return none();
}

}  // namespace hiros::protocol
