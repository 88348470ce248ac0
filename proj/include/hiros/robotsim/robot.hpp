#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hiros/error.hpp"
#include "hiros/protocol/state_machine.hpp"

namespace hiros::robotsim {

using Vec2 = std::array<double, 2>;
using protocol::ActionKind;
using protocol::RobotAction;

inline double normalize_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);  // [-pi, pi]
  return a <= -std::numbers::pi ? a + 2.0 * std::numbers::pi : a;
}

inline Vec2 rotate(Vec2 v, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  return {c * v[0] - s * v[1], s * v[0] + c * v[1]};
}

inline double distance(Vec2 a, Vec2 b) { return std::hypot(a[0] - b[0], a[1] - b[1]); }

struct BasePose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;  // (-pi, pi]

  bool operator==(const BasePose&) const = default;
};

enum class Posture { Home, Extended, Grasping, Handover };

inline std::string_view to_string(Posture p) {
  switch (p) {
    case Posture::Home: return "HOME";
    case Posture::Extended: return "EXTENDED";
    case Posture::Grasping: return "GRASPING";
    case Posture::Handover: return "HANDOVER";
  }
  return "?";
}

inline Posture parse_posture(std::string_view s) {
  for (Posture p : {Posture::Home, Posture::Extended, Posture::Grasping, Posture::Handover})
    if (to_string(p) == s) return p;
  throw ProtocolError("unknown posture '" + std::string(s) + "'");
}

struct ArmState {
  Posture posture = Posture::Home;
  Vec2 offset{0.0, 0.0};  // end-effector offset from the reach point, robot frame
  bool gripper_open = true;
  bool holding = false;

  bool operator==(const ArmState&) const = default;
};

struct WorldState {
  std::optional<Vec2> object;  // world position, absent while held
  bool object_held = false;
  Vec2 handover{0.5, 0.0};

  bool operator==(const WorldState&) const = default;
};

enum class EventKind { TaskDone, Failed, Busy, MotionDone };

inline std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::TaskDone: return "TASK_DONE";
    case EventKind::Failed: return "FAILED";
    case EventKind::Busy: return "BUSY";
    case EventKind::MotionDone: return "MOTION_DONE";
  }
  return "?";
}

inline EventKind parse_event_kind(std::string_view s) {
  for (EventKind k : {EventKind::TaskDone, EventKind::Failed, EventKind::Busy, EventKind::MotionDone})
    if (to_string(k) == s) return k;
  throw ProtocolError("unknown robot event '" + std::string(s) + "'");
}

struct RobotEvent {
  EventKind kind = EventKind::MotionDone;
  std::string detail;
  std::uint64_t tick = 0;

  bool operator==(const RobotEvent&) const = default;
};

struct RobotConfig {
  double dt = 0.05;
  double base_step = 0.25;
  double base_speed = 0.25;
  double arm_step = 0.05;
  double arm_speed = 0.1;
  Vec2 reach{0.5, 0.0};  // end-effector position relative to the base at zero offset
  double grasp_tolerance = 0.05;
  std::uint64_t grasp_ticks = 10;
  Vec2 object{0.75, -0.20};
  Vec2 handover{0.5, 0.0};
};

struct Snapshot {
  std::uint64_t tick = 0;
  BasePose pose;
  ArmState arm;
  Vec2 end_effector{0.0, 0.0};
  WorldState world;
  bool busy = false;
  std::optional<RobotEvent> last_event;

  bool operator==(const Snapshot&) const = default;
};

inline void to_json(nlohmann::json& j, const RobotEvent& e) {
  j = nlohmann::json{{"kind", to_string(e.kind)}, {"detail", e.detail}, {"tick", e.tick}};
}

inline void from_json(const nlohmann::json& j, RobotEvent& e) {
  e.kind = parse_event_kind(j.at("kind").get<std::string>());
  j.at("detail").get_to(e.detail);
  j.at("tick").get_to(e.tick);
}

inline void to_json(nlohmann::json& j, const Snapshot& s) {
  j = nlohmann::json{
      {"tick", s.tick},
      {"pose", {{"x", s.pose.x}, {"y", s.pose.y}, {"theta", s.pose.theta}}},
      {"arm",
       {{"posture", to_string(s.arm.posture)},
        {"offset", s.arm.offset},
        {"gripper_open", s.arm.gripper_open},
        {"holding", s.arm.holding}}},
      {"end_effector", s.end_effector},
      {"world",
       {{"object", s.world.object ? nlohmann::json(*s.world.object) : nlohmann::json(nullptr)},
        {"object_held", s.world.object_held},
        {"handover", s.world.handover}}},
      {"busy", s.busy},
      {"last_event", s.last_event ? nlohmann::json(*s.last_event) : nlohmann::json(nullptr)}};
}

inline void from_json(const nlohmann::json& j, Snapshot& s) {
  j.at("tick").get_to(s.tick);
  const auto& p = j.at("pose");
  s.pose = {p.at("x").get<double>(), p.at("y").get<double>(), p.at("theta").get<double>()};
  const auto& a = j.at("arm");
  s.arm.posture = parse_posture(a.at("posture").get<std::string>());
  a.at("offset").get_to(s.arm.offset);
  a.at("gripper_open").get_to(s.arm.gripper_open);
  a.at("holding").get_to(s.arm.holding);
  j.at("end_effector").get_to(s.end_effector);
  const auto& w = j.at("world");
  s.world.object.reset();
  if (!w.at("object").is_null()) s.world.object = w.at("object").get<Vec2>();
  w.at("object_held").get_to(s.world.object_held);
  w.at("handover").get_to(s.world.handover);
  j.at("busy").get_to(s.busy);
  s.last_event.reset();
  if (!j.at("last_event").is_null()) s.last_event = j.at("last_event").get<RobotEvent>();
}

// Planar mobile manipulator advanced in fixed ticks. Motions are scheduled by
// apply() and played out by step(); actions arriving mid-motion are rejected.
class Robot {
 public:
  explicit Robot(RobotConfig config = {}) : config_(config) {
    world_.object = config_.object;
    world_.handover = config_.handover;
  }

  const RobotConfig& config() const noexcept { return config_; }
  bool busy() const noexcept { return motion_.has_value(); }
  const BasePose& pose() const noexcept { return pose_; }
  const ArmState& arm() const noexcept { return arm_; }
  const WorldState& world() const noexcept { return world_; }
  std::uint64_t tick() const noexcept { return tick_; }

  Vec2 end_effector() const {
    if (carry_) return *carry_;
    const Vec2 local{config_.reach[0] + arm_.offset[0], config_.reach[1] + arm_.offset[1]};
    const Vec2 r = rotate(local, pose_.theta);
    return {pose_.x + r[0], pose_.y + r[1]};
  }

  // Schedules an action. Returns an event when the action resolves at once
  // (BUSY rejection, failed grasp, instant reset).
  std::optional<RobotEvent> apply(const RobotAction& action) {
    if (action.kind == ActionKind::None) return std::nullopt;
    if (busy()) {
      return record(EventKind::Busy, std::string(protocol::to_string(action.kind)) + " rejected while moving");
    }
    switch (action.kind) {
      case ActionKind::BaseStep: {
        const Vec2 d = rotate(scaled(protocol::unit(require_dir(action)), config_.base_step), pose_.theta);
        Motion m{Motion::Kind::Base, ticks_for(config_.base_step, config_.base_speed)};
        m.from = {pose_.x, pose_.y};
        m.to = {pose_.x + d[0], pose_.y + d[1]};
        motion_ = m;
        return std::nullopt;
      }
      case ActionKind::ArmAdjust: {
        const Vec2 d = scaled(protocol::unit(require_dir(action)), config_.arm_step);
        Motion m{Motion::Kind::Arm, ticks_for(config_.arm_step, config_.arm_speed)};
        m.from = arm_.offset;
        m.to = {arm_.offset[0] + d[0], arm_.offset[1] + d[1]};
        arm_.posture = Posture::Extended;
        motion_ = m;
        return std::nullopt;
      }
      case ActionKind::ExecuteGraspHandover: {
        if (!world_.object) return record(EventKind::Failed, "no object to grasp");
        const double miss = distance(end_effector(), *world_.object);
        if (miss > config_.grasp_tolerance) {
          return record(EventKind::Failed, "end effector " + std::to_string(miss) + " m from object");
        }
        arm_.posture = Posture::Grasping;
        motion_ = Motion{Motion::Kind::Grasp, config_.grasp_ticks};
        return std::nullopt;
      }
      case ActionKind::ArmReset:
        arm_.posture = Posture::Home;
        arm_.offset = {0.0, 0.0};
        if (arm_.holding) {
          // Put the object down where the gripper is.
          world_.object = end_effector();
          world_.object_held = false;
          arm_.holding = false;
        }
        arm_.gripper_open = true;
        carry_.reset();
        return record(EventKind::MotionDone, "ARM_RESET");
      case ActionKind::None:
        break;
    }
    return std::nullopt;
  }

  // Advances one tick of config().dt seconds.
  std::optional<RobotEvent> step() {
    ++tick_;
    if (!motion_) return std::nullopt;
    Motion& m = *motion_;
    ++m.done;
    const double f = static_cast<double>(m.done) / static_cast<double>(m.total);
    const bool finished = m.done >= m.total;
    switch (m.kind) {
      case Motion::Kind::Base: {
        const Vec2 p = finished ? m.to : lerp(m.from, m.to, f);
        pose_.x = p[0];
        pose_.y = p[1];
        if (finished) return finish(EventKind::MotionDone, "BASE_STEP");
        return std::nullopt;
      }
      case Motion::Kind::Arm:
        arm_.offset = finished ? m.to : lerp(m.from, m.to, f);
        if (finished) return finish(EventKind::MotionDone, "ARM_ADJUST");
        return std::nullopt;
      case Motion::Kind::Grasp:
        if (!finished) return std::nullopt;
        arm_.gripper_open = false;
        arm_.holding = true;
        world_.object_held = true;
        carry_ = *world_.object;
        world_.object.reset();
        {
          Motion carry{Motion::Kind::Carry, ticks_for(distance(*carry_, world_.handover), config_.arm_speed)};
          carry.from = *carry_;
          carry.to = world_.handover;
          motion_ = carry;
        }
        return std::nullopt;
      case Motion::Kind::Carry:
        carry_ = finished ? m.to : lerp(m.from, m.to, f);
        if (!finished) return std::nullopt;
        world_.object = world_.handover;
        world_.object_held = false;
        arm_.holding = false;
        arm_.gripper_open = true;
        arm_.posture = Posture::Handover;
        return finish(EventKind::TaskDone, "object handed over");
    }
    return std::nullopt;
  }

  Snapshot snapshot() const {
    return Snapshot{tick_, pose_, arm_, end_effector(), world_, busy(), last_event_};
  }

 private:
  struct Motion {
    enum class Kind { Base, Arm, Grasp, Carry } kind;
    std::uint64_t total = 1;
    std::uint64_t done = 0;
    Vec2 from{0.0, 0.0};
    Vec2 to{0.0, 0.0};
  };

  static Vec2 scaled(Vec2 v, double s) { return {v[0] * s, v[1] * s}; }
  static Vec2 lerp(Vec2 a, Vec2 b, double f) { return {a[0] + (b[0] - a[0]) * f, a[1] + (b[1] - a[1]) * f}; }

  static protocol::Direction require_dir(const RobotAction& a) {
    if (!a.dir) throw ProtocolError(std::string(protocol::to_string(a.kind)) + " requires a direction");
    return *a.dir;
  }

  std::uint64_t ticks_for(double dist, double speed) const {
    const double t = dist / speed / config_.dt;
    const double r = std::round(t);
    return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::abs(t - r) < 1e-9 ? r : std::ceil(t)));
  }

  RobotEvent record(EventKind kind, std::string detail) {
    last_event_ = RobotEvent{kind, std::move(detail), tick_};
    return *last_event_;
  }

  RobotEvent finish(EventKind kind, std::string detail) {
    motion_.reset();
    return record(kind, std::move(detail));
  }

  RobotConfig config_;
  BasePose pose_;
  ArmState arm_;
  WorldState world_;
  std::optional<Vec2> carry_;
  std::optional<Motion> motion_;
  std::optional<RobotEvent> last_event_;
  std::uint64_t tick_ = 0;
};

}  // namespace hiros::robotsim
