#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "hiros/app/injector.hpp"
#include "hiros/bus/broker.hpp"
#include "hiros/bus/client.hpp"
#include "hiros/protocol/state_machine.hpp"
#include "hiros/stream/recognizer.hpp"

namespace hiros::app {

inline std::int64_t now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

struct RecognizerServiceOptions {
  std::string bus_host = "127.0.0.1";
  std::uint16_t bus_port = bus::kDefaultBusPort;
  stream::SmootherConfig smoother;
  bool publish_probs = true;
  bool injector = true;
  double inject_fps = 30.0;
  InjectionOptions injection;
  std::function<void(const std::string&)> log;
};

// Streaming recognizer on the bus: camera/frames in, gesture/prediction out.
// The optional injector answers camera/inject requests by playing synthetic
// clips into camera/frames.
class RecognizerService {
 public:
  RecognizerService(model::GestureNet net, RecognizerServiceOptions opts)
      : opts_(std::move(opts)), config_(net.config()), recognizer_(std::move(net), opts_.smoother) {}
  ~RecognizerService() { stop(); }

  void start() {
    client_ = std::make_unique<bus::Client>(opts_.bus_host, opts_.bus_port,
                                            [this](bus::BusFrame f) { on_message(std::move(f)); });
    client_->subscribe(bus::topics::kCameraFrames);
    if (opts_.injector) {
      injector_client_ = std::make_unique<bus::Client>(opts_.bus_host, opts_.bus_port);
      client_->subscribe(bus::topics::kCameraInject);
      injector_ = std::thread([this] { inject_loop(); });
    }
  }

  void stop() {
    {
      std::lock_guard lock(mu_);
      stopping_ = true;
    }
    cv_.notify_all();
    if (injector_.joinable()) injector_.join();
    if (client_) client_->close();
    if (injector_client_) injector_client_->close();
  }

  std::uint64_t frames_processed() const { return frames_.load(); }
  std::uint64_t events_emitted() const { return events_.load(); }
  std::uint64_t injections_done() const { return injections_.load(); }

 private:
  void note(const std::string& m) {
    if (opts_.log) opts_.log(m);
  }

  void on_message(bus::BusFrame f) {
    if (f.topic == bus::topics::kCameraFrames) return on_frame(f);
    if (f.topic == bus::topics::kCameraInject) return on_inject(f);
  }

  void on_frame(const bus::BusFrame& f) {
    dataset::Frame frame;
    try {
      frame = dataset::decode_frame(f.payload);
      auto [window, event] = recognizer_.process(frame, now_ms());
      ++frames_;
      if (window && opts_.publish_probs) {
        client_->publish(bus::topics::kProbs, nlohmann::json{{"window", window->index}, {"probs", window->probs}}.dump());
      }
      if (event) {
        ++events_;
        note("prediction " + event->label + " p=" + std::to_string(event->prob));
        client_->publish(bus::topics::kPrediction, nlohmann::json(*event).dump());
      }
    } catch (const Error& e) {
      note(std::string("dropping frame: ") + e.what());
    }
  }

  void on_inject(const bus::BusFrame& f) {
    const auto j = nlohmann::json::parse(f.text(), nullptr, false);
    if (j.is_discarded() || !j.contains("class_id") || !j["class_id"].is_number_integer()) {
      note("ignoring malformed inject request: " + f.text());
      return;
    }
    const int cls = j["class_id"].get<int>();
    if (cls < 0 || static_cast<std::size_t>(cls) >= dataset::kNumClasses) {
      note("ignoring inject request for unknown class " + std::to_string(cls));
      return;
    }
    std::lock_guard lock(mu_);
    requests_.push_back(cls);
    cv_.notify_all();
  }

  void inject_loop() {
    using clock = std::chrono::steady_clock;
    const auto period = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(1.0 / opts_.inject_fps));
    std::uint64_t sequence = 0;
    for (;;) {
      int cls = 0;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return stopping_ || !requests_.empty(); });
        if (stopping_) return;
        cls = requests_.front();
        requests_.pop_front();
      }
      note("injecting " + std::string(dataset::gesture_class(cls).label));
      auto next = clock::now();
      for (const auto& frame : render_injection(config_, cls, opts_.injection, sequence++)) {
        std::this_thread::sleep_until(next);
        next += period;
        {
          std::lock_guard lock(mu_);
          if (stopping_) return;
        }
        injector_client_->publish(bus::topics::kCameraFrames, dataset::encode_frame(frame));
      }
      ++injections_;
    }
  }

  RecognizerServiceOptions opts_;
  model::ModelConfig config_;
  stream::Recognizer recognizer_;
  std::unique_ptr<bus::Client> client_;
  std::unique_ptr<bus::Client> injector_client_;
  std::thread injector_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<int> requests_;
  bool stopping_ = false;
  std::atomic<std::uint64_t> frames_{0};
  std::atomic<std::uint64_t> events_{0};
  std::atomic<std::uint64_t> injections_{0};
};

}  // namespace hiros::app
