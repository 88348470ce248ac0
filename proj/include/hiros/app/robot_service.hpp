#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <deque>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "hiros/bus/broker.hpp"
#include "hiros/bus/client.hpp"
#include "hiros/protocol/state_machine.hpp"
#include "hiros/robotsim/robot.hpp"
#include "hiros/stream/recognizer.hpp"

namespace hiros::app {

struct RobotServiceOptions {
  std::string bus_host = "127.0.0.1";
  std::uint16_t bus_port = bus::kDefaultBusPort;
  robotsim::RobotConfig robot;
  double speed = 1.0;  // simulated seconds per wall-clock second
  double state_hz = 10.0;
  std::function<void(const std::string&)> log;
};

// Attention-gated controller plus simulated robot. Predictions go through the
// state machine; resulting actions are published on robot/command and the
// simulator executes whatever arrives there between ticks.
class RobotService {
 public:
  explicit RobotService(RobotServiceOptions opts) : opts_(std::move(opts)), robot_(opts_.robot) {
    if (!(opts_.speed > 0.0)) throw ConfigError("simulation speed must be positive");
    if (!(opts_.state_hz > 0.0)) throw ConfigError("state rate must be positive");
  }
  ~RobotService() { stop(); }

  void start() {
    client_ = std::make_unique<bus::Client>(opts_.bus_host, opts_.bus_port,
                                            [this](bus::BusFrame f) { on_message(std::move(f)); });
    client_->subscribe(bus::topics::kPrediction);
    client_->subscribe(bus::topics::kRobotCommand);
    publish_control(std::nullopt, {});
    running_ = true;
    sim_ = std::thread([this] { sim_loop(); });
  }

  void stop() {
    running_ = false;
    if (sim_.joinable()) sim_.join();
    if (client_) client_->close();
  }

  protocol::ControlState control() const {
    std::lock_guard lock(mu_);
    return control_;
  }

  robotsim::Snapshot snapshot() const {
    std::lock_guard lock(mu_);
    return last_snapshot_;
  }

 private:
  void note(const std::string& m) {
    if (opts_.log) opts_.log(m);
  }

  void on_message(bus::BusFrame f) {
    try {
      if (f.topic == bus::topics::kPrediction) {
        on_prediction(nlohmann::json::parse(f.text()).get<stream::PredictionEvent>());
      } else if (f.topic == bus::topics::kRobotCommand) {
        auto action = nlohmann::json::parse(f.text()).get<protocol::RobotAction>();
        std::lock_guard lock(mu_);
        pending_.push_back(action);
      }
    } catch (const std::exception& e) {
      note("ignoring message on " + f.topic + ": " + e.what());
    }
  }

  void on_prediction(const stream::PredictionEvent& ev) {
    const auto cmd = protocol::map_prediction(ev.class_id);
    if (!cmd) return;
    protocol::StepResult r;
    {
      std::lock_guard lock(mu_);
      r = protocol::step(control_, *cmd);
      control_ = r.state;
    }
    note(std::string(protocol::command_name(*cmd)) + " -> " + std::string(protocol::to_string(r.state.attention)) +
         "/" + std::string(protocol::to_string(r.state.mode)));
    publish_control(cmd, r);
    for (const auto& a : r.actions) {
      if (a.kind != protocol::ActionKind::None) client_->publish(bus::topics::kRobotCommand, nlohmann::json(a).dump());
    }
  }

  void publish_control(std::optional<protocol::Command> cmd, const protocol::StepResult& r) {
    nlohmann::json j;
    {
      std::lock_guard lock(mu_);
      j = control_;
      j["seq"] = control_seq_++;
    }
    j["command"] = cmd ? nlohmann::json(std::string(protocol::command_name(*cmd))) : nlohmann::json(nullptr);
    j["ignored"] = r.ignored;
    nlohmann::json actions = nlohmann::json::array();
    for (const auto& a : r.actions)
      if (a.kind != protocol::ActionKind::None) actions.push_back(a);
    j["actions"] = actions;
    client_->publish(bus::topics::kAttention, j.dump());
  }

  void sim_loop() {
    using clock = std::chrono::steady_clock;
    const auto period =
        std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(opts_.robot.dt / opts_.speed));
    const auto publish_every = std::max<std::uint64_t>(
        1, static_cast<std::uint64_t>(std::llround(1.0 / (opts_.state_hz * opts_.robot.dt))));
    auto next = clock::now();
    std::uint64_t handled = 0;
    for (std::uint64_t n = 0; running_; ++n) {
      std::deque<protocol::RobotAction> actions;
      {
        std::lock_guard lock(mu_);
        actions.swap(pending_);
      }
      for (const auto& a : actions) {
        if (auto e = robot_.apply(a)) note(std::string(robotsim::to_string(e->kind)) + ": " + e->detail);
        ++handled;
      }
      if (auto e = robot_.step()) note(std::string(robotsim::to_string(e->kind)) + ": " + e->detail);
      const auto snap = robot_.snapshot();
      {
        std::lock_guard lock(mu_);
        last_snapshot_ = snap;
      }
      if (n % publish_every == 0 || !actions.empty()) {
        nlohmann::json j = snap;
        j["actions_handled"] = handled;
        client_->publish(bus::topics::kRobotState, j.dump());
      }
      next += period;
      std::this_thread::sleep_until(next);
    }
  }

  RobotServiceOptions opts_;
  robotsim::Robot robot_;
  std::unique_ptr<bus::Client> client_;
  std::thread sim_;
  std::atomic<bool> running_{false};
  mutable std::mutex mu_;
  protocol::ControlState control_;
  std::uint64_t control_seq_ = 0;
  std::deque<protocol::RobotAction> pending_;
  robotsim::Snapshot last_snapshot_;
};

}  // namespace hiros::app
