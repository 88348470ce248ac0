#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hiros/bus/broker.hpp"
#include "hiros/bus/client.hpp"
#include "hiros/dataset/classes.hpp"
#include "hiros/protocol/state_machine.hpp"
#include "hiros/robotsim/robot.hpp"
#include "hiros/stream/recognizer.hpp"

namespace hiros::app {

struct DemoExpectation {
  std::optional<std::array<double, 2>> base;
  bool object_at_handover = false;
  std::optional<protocol::Attention> attention;
  double tolerance = 1e-9;
};

struct DemoScript {
  std::vector<int> gestures;
  DemoExpectation expect;
  double step_timeout_s = 30.0;
};

// Accepts a class id or its label, case-insensitively.
inline int parse_gesture(const nlohmann::json& g) {
  if (g.is_number_integer()) {
    const int id = g.get<int>();
    dataset::gesture_class(id);
    return id;
  }
  if (!g.is_string()) throw InputError("gesture must be a class id or label, got " + g.dump());
  const auto lower = [](std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
  };
  const std::string want = lower(g.get<std::string>());
  for (const auto& c : dataset::kClassTable)
    if (lower(c.label) == want) return c.id;
  throw InputError("unknown gesture '" + g.get<std::string>() + "'");
}

inline DemoScript parse_demo_script(const nlohmann::json& j) {
  DemoScript s;
  if (!j.contains("gestures") || !j["gestures"].is_array() || j["gestures"].empty()) {
    throw InputError("demo script needs a non-empty \"gestures\" array");
  }
  for (const auto& g : j["gestures"]) {
    const int id = parse_gesture(g);
    if (dataset::is_background(id)) {
      throw InputError("demo gestures must be commands; '" + std::string(dataset::gesture_class(id).label) +
                       "' never produces one");
    }
    s.gestures.push_back(id);
  }
  if (j.contains("expect")) {
    const auto& e = j["expect"];
    if (e.contains("base")) s.expect.base = e["base"].get<std::array<double, 2>>();
    s.expect.object_at_handover = e.value("object_at_handover", false);
    if (e.contains("attention")) s.expect.attention = protocol::parse_attention(e["attention"].get<std::string>());
    s.expect.tolerance = e.value("tolerance", 1e-9);
  }
  s.step_timeout_s = j.value("step_timeout_s", 30.0);
  if (!(s.step_timeout_s > 0.0)) throw InputError("step_timeout_s must be positive");
  return s;
}

inline DemoScript load_demo_script(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open demo script " + path.string());
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw InputError("demo script " + path.string() + " is not valid JSON");
  return parse_demo_script(j);
}

struct DemoStep {
  int requested = 0;
  std::optional<stream::PredictionEvent> predicted;
  nlohmann::json control;
  double seconds = 0.0;
};

struct DemoResult {
  bool passed = false;
  std::vector<std::string> failures;
  std::vector<DemoStep> steps;
  robotsim::Snapshot final_snapshot;
  std::optional<protocol::ControlState> control;
  double seconds = 0.0;
};

// Checks a final snapshot and control state against the expectation.
inline std::vector<std::string> check_expectation(const DemoExpectation& e, const robotsim::Snapshot& s,
                                                  const std::optional<protocol::ControlState>& control) {
  std::vector<std::string> failures;
  const auto fmt = [](double x, double y) { return "(" + std::to_string(x) + ", " + std::to_string(y) + ")"; };
  if (e.base && (std::abs(s.pose.x - (*e.base)[0]) > e.tolerance || std::abs(s.pose.y - (*e.base)[1]) > e.tolerance)) {
    failures.push_back("base at " + fmt(s.pose.x, s.pose.y) + ", expected " + fmt((*e.base)[0], (*e.base)[1]));
  }
  if (e.object_at_handover) {
    if (!s.world.object || s.world.object_held) {
      failures.push_back("object is not resting in the world");
    } else if (robotsim::distance(*s.world.object, s.world.handover) > e.tolerance) {
      failures.push_back("object at " + fmt((*s.world.object)[0], (*s.world.object)[1]) + ", handover is " +
                         fmt(s.world.handover[0], s.world.handover[1]));
    }
  }
  if (e.attention && (!control || control->attention != *e.attention)) {
    failures.push_back("attention is " + std::string(control ? protocol::to_string(control->attention) : "unknown") +
                       ", expected " + std::string(protocol::to_string(*e.attention)));
  }
  return failures;
}

// Drives running recognizer and robot services through the bus: each gesture
// is requested on camera/inject, then the runner waits for the matching
// prediction, the controller's reaction and the robot to finish moving.
class DemoRunner {
 public:
  DemoRunner(std::string host, std::uint16_t port, std::function<void(const std::string&)> log = {})
      : host_(std::move(host)), port_(port), log_(std::move(log)) {}

  DemoResult run(const DemoScript& script) {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    bus::Client client(host_, port_, [this](bus::BusFrame f) { on_message(std::move(f)); });
    for (const char* t : {bus::topics::kPrediction, bus::topics::kAttention, bus::topics::kRobotState}) client.subscribe(t);

    DemoResult result;
    const auto timeout = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(script.step_timeout_s));
    std::uint64_t expected_actions = 0;
    if (!wait_for([&] { return state_.has_value(); }, timeout)) {
      result.failures.push_back("no robot/state received; is the robot service running?");
    }
    for (std::size_t i = 0; i < script.gestures.size() && result.failures.empty(); ++i) {
      const auto ts = clock::now();
      const int cls = script.gestures[i];
      const std::string label(dataset::gesture_class(cls).label);
      DemoStep step{cls, std::nullopt, {}, 0.0};
      std::size_t preds_before, controls_before;
      {
        std::lock_guard lock(mu_);
        preds_before = predictions_.size();
        controls_before = controls_.size();
      }
      note("step " + std::to_string(i + 1) + ": " + label);
      client.publish(bus::topics::kCameraInject, nlohmann::json{{"class_id", cls}}.dump());

      if (!wait_for([&] { return predictions_.size() > preds_before; }, timeout)) {
        result.failures.push_back("step " + std::to_string(i + 1) + " (" + label + "): no prediction");
        result.steps.push_back(step);
        break;
      }
      {
        std::lock_guard lock(mu_);
        step.predicted = predictions_[preds_before];
      }
      if (step.predicted->class_id != cls) {
        result.failures.push_back("step " + std::to_string(i + 1) + ": injected " + label + ", recognized " +
                                  step.predicted->label);
        result.steps.push_back(step);
        break;
      }
      if (!wait_for([&] { return controls_.size() > controls_before; }, timeout)) {
        result.failures.push_back("step " + std::to_string(i + 1) + " (" + label + "): controller did not react");
        result.steps.push_back(step);
        break;
      }
      {
        std::lock_guard lock(mu_);
        step.control = controls_[controls_before];
      }
      expected_actions += step.control["actions"].size();
      const bool settled = wait_for(
          [&] {
            return state_ && (*state_)["actions_handled"].get<std::uint64_t>() >= expected_actions &&
                   !(*state_)["busy"].get<bool>();
          },
          timeout);
      step.seconds = std::chrono::duration<double>(clock::now() - ts).count();
      result.steps.push_back(step);
      if (!settled) {
        result.failures.push_back("step " + std::to_string(i + 1) + " (" + label + "): robot did not settle");
      }
    }
    {
      std::lock_guard lock(mu_);
      if (state_) result.final_snapshot = state_->get<robotsim::Snapshot>();
      if (!controls_.empty()) result.control = controls_.back().get<protocol::ControlState>();
    }
    if (result.failures.empty()) {
      result.failures = check_expectation(script.expect, result.final_snapshot, result.control);
    }
    client.close();
    result.passed = result.failures.empty();
    result.seconds = std::chrono::duration<double>(clock::now() - t0).count();
    return result;
  }

 private:
  void note(const std::string& m) {
    if (log_) log_(m);
  }

  void on_message(bus::BusFrame f) {
    const auto j = nlohmann::json::parse(f.text(), nullptr, false);
    if (j.is_discarded()) return;
    std::lock_guard lock(mu_);
    try {
      if (f.topic == bus::topics::kPrediction) {
        predictions_.push_back(j.get<stream::PredictionEvent>());
      } else if (f.topic == bus::topics::kAttention) {
        if (!j["command"].is_null()) controls_.push_back(j);
      } else if (f.topic == bus::topics::kRobotState) {
        state_ = j;
      }
    } catch (const std::exception&) {
      return;
    }
    cv_.notify_all();
  }

  template <typename Pred>
  bool wait_for(Pred p, std::chrono::steady_clock::duration timeout) {
    std::unique_lock lock(mu_);
    return cv_.wait_for(lock, timeout, p);
  }

  std::string host_;
  std::uint16_t port_;
  std::function<void(const std::string&)> log_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::vector<stream::PredictionEvent> predictions_;
  std::vector<nlohmann::json> controls_;
  std::optional<nlohmann::json> state_;
};

inline nlohmann::json to_json(const DemoResult& r) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : r.steps) {
    steps.push_back({{"requested", std::string(dataset::gesture_class(s.requested).label)},
                     {"predicted", s.predicted ? nlohmann::json(*s.predicted) : nlohmann::json(nullptr)},
                     {"control", s.control},
                     {"seconds", s.seconds}});
  }
  return {{"passed", r.passed},
          {"failures", r.failures},
          {"steps", steps},
          {"final", r.final_snapshot},
          {"control", r.control ? nlohmann::json(*r.control) : nlohmann::json(nullptr)},
          {"seconds", r.seconds}};
}

}  // namespace hiros::app
