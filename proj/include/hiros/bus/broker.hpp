#pragma once

#include <array>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <functional>
#include <future>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <boost/asio.hpp>

#include "hiros/bus/frame.hpp"
#include "hiros/bus/queue.hpp"

namespace hiros::bus {

namespace asio = boost::asio;
using tcp = asio::ip::tcp;

inline constexpr std::uint16_t kDefaultBusPort = 7447;
inline constexpr std::uint16_t kDefaultWsPort = 7448;

namespace topics {
inline constexpr const char* kCameraFrames = "camera/frames";
inline constexpr const char* kCameraInject = "camera/inject";
inline constexpr const char* kPrediction = "gesture/prediction";
inline constexpr const char* kProbs = "gesture/probs";
inline constexpr const char* kRobotCommand = "robot/command";
inline constexpr const char* kRobotState = "robot/state";
inline constexpr const char* kAttention = "system/attention";
}  // namespace topics

inline std::uint16_t port_from_env(const char* name, std::uint16_t fallback) {
  const char* v = std::getenv(name);
  if (!v || !*v) return fallback;
  char* end = nullptr;
  const long p = std::strtol(v, &end, 10);
  if (*end != '\0' || p <= 0 || p > 65535) throw ConfigError(std::string(name) + " is not a valid port: " + v);
  return static_cast<std::uint16_t>(p);
}

inline std::uint16_t bus_port() { return port_from_env("HIROS_BUS_PORT", kDefaultBusPort); }
inline std::uint16_t ws_port() { return port_from_env("HIROS_WS_PORT", kDefaultWsPort); }

struct SubscriptionStats {
  std::uint64_t client = 0;
  std::string topic;
  std::size_t queued = 0;
  std::uint64_t enqueued = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
};

struct BrokerOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;  // 0 picks a free port
  std::size_t queue_bound = kDefaultQueueBound;
  std::function<void(const std::string&)> log;
};

// Topic pub/sub broker. All socket work happens on one internal io thread.
class Broker {
 public:
  explicit Broker(BrokerOptions opts = {}) : opts_(std::move(opts)), acceptor_(io_) {}
  Broker(const Broker&) = delete;
  Broker& operator=(const Broker&) = delete;
  ~Broker() { stop(); }

  void start() {
    const tcp::endpoint ep(asio::ip::make_address(opts_.host), opts_.port);
    acceptor_.open(ep.protocol());
    acceptor_.set_option(tcp::acceptor::reuse_address(true));
    acceptor_.bind(ep);
    acceptor_.listen();
    port_ = acceptor_.local_endpoint().port();
    accept();
    thread_ = std::thread([this] { io_.run(); });
  }

  void stop() {
    if (!thread_.joinable()) return;
    asio::post(io_, [this] {
      boost::system::error_code ec;
      acceptor_.close(ec);
      auto sessions = sessions_;
      for (auto& [id, s] : sessions) s->close();
    });
    thread_.join();
    sessions_.clear();
  }

  std::uint16_t port() const { return port_; }

  std::vector<SubscriptionStats> stats() {
    return run_on_io([this] {
      std::vector<SubscriptionStats> out;
      for (auto& [id, s] : sessions_)
        for (auto& [topic, sub] : s->subs) {
          out.push_back({id, topic, sub.q.size(), sub.q.pushed(), sub.q.popped(), sub.q.dropped()});
        }
      return out;
    });
  }

  std::size_t client_count() {
    return run_on_io([this] { return sessions_.size(); });
  }

  std::uint64_t published() {
    return run_on_io([this] { return published_; });
  }

  std::uint64_t rejected_connections() {
    return run_on_io([this] { return rejected_; });
  }

 private:
  using Bytes = std::shared_ptr<const std::vector<std::uint8_t>>;

  struct Subscription {
    explicit Subscription(std::size_t bound) : q(bound) {}
    DropOldestQueue<Bytes> q;
  };

  static constexpr std::size_t kFramesPerTurn = 32;
  static constexpr std::size_t kWriteBatch = 256;

  struct Session : std::enable_shared_from_this<Session> {
    Session(Broker& b, tcp::socket s, std::uint64_t id) : broker(b), socket(std::move(s)), id(id) {}

    Broker& broker;
    tcp::socket socket;
    std::uint64_t id;
    std::array<std::uint8_t, 1 << 16> buf{};
    FrameReader reader;
    std::map<std::string, Subscription> subs;
    std::deque<Bytes> control;
    std::vector<Bytes> inflight;
    std::string last_topic;
    bool writing = false;
    bool open = true;

    void read() {
      socket.async_read_some(asio::buffer(buf), [self = shared_from_this()](boost::system::error_code ec, std::size_t n) {
        if (ec) return self->close();
        self->reader.feed(std::span(self->buf.data(), n));
        self->drain();
      });
    }

    // Handles a bounded number of buffered frames per turn so pending writes
    // to other sessions get to run between them.
    void drain() {
      try {
        for (std::size_t i = 0; i < kFramesPerTurn; ++i) {
          auto f = reader.next();
          if (!f) return read();
          handle(std::move(*f));
          if (!open) return;
        }
      } catch (const FormatError& e) {
        broker.note("client " + std::to_string(id) + ": " + e.what());
        ++broker.rejected_;
        return close();
      }
      asio::post(socket.get_executor(), [self = shared_from_this()] {
        if (self->open) self->drain();
      });
    }

    void handle(BusFrame f) {
      switch (f.type) {
        case MsgType::Pub:
          broker.route(f.topic, std::make_shared<const std::vector<std::uint8_t>>(encode(f)));
          break;
        case MsgType::Sub:
          subs.try_emplace(f.topic, broker.opts_.queue_bound);
          break;
        case MsgType::Unsub:
          subs.erase(f.topic);
          break;
        case MsgType::Ping:
          control.push_back(std::make_shared<const std::vector<std::uint8_t>>(encode(BusFrame::pong())));
          write();
          break;
        case MsgType::Pong:
          break;
      }
    }

    void enqueue(const std::string& topic, const Bytes& bytes) {
      auto it = subs.find(topic);
      if (it == subs.end()) return;
      it->second.q.push(bytes);
      write();
    }

    // Control replies first, then subscriptions round-robin by topic.
    Bytes next_message() {
      if (!control.empty()) {
        Bytes b = control.front();
        control.pop_front();
        return b;
      }
      if (subs.empty()) return nullptr;
      auto start = subs.upper_bound(last_topic);
      for (std::size_t i = 0; i < subs.size(); ++i, ++start) {
        if (start == subs.end()) start = subs.begin();
        if (auto m = start->second.q.pop()) {
          last_topic = start->first;
          return *m;
        }
      }
      return nullptr;
    }

    void write() {
      if (writing || !open) return;
      while (inflight.size() < kWriteBatch) {
        Bytes msg = next_message();
        if (!msg) break;
        inflight.push_back(std::move(msg));
      }
      if (inflight.empty()) return;
      std::vector<asio::const_buffer> bufs;
      bufs.reserve(inflight.size());
      for (const auto& m : inflight) bufs.push_back(asio::buffer(*m));
      writing = true;
      asio::async_write(socket, bufs, [self = shared_from_this()](boost::system::error_code ec, std::size_t) {
        self->writing = false;
        self->inflight.clear();
        if (ec) return self->close();
        self->write();
      });
    }

    void close() {
      if (!open) return;
      open = false;
      boost::system::error_code ec;
      socket.shutdown(tcp::socket::shutdown_both, ec);
      socket.close(ec);
      subs.clear();
      broker.sessions_.erase(id);
    }
  };

  template <typename F>
  auto run_on_io(F f) -> decltype(f()) {
    if (!thread_.joinable()) return f();
    std::packaged_task<decltype(f())()> task(std::move(f));
    auto fut = task.get_future();
    asio::post(io_, [&task] { task(); });
    return fut.get();
  }

  void note(const std::string& msg) {
    if (opts_.log) opts_.log(msg);
  }

  void accept() {
    acceptor_.async_accept([this](boost::system::error_code ec, tcp::socket socket) {
      if (ec) return;
      socket.set_option(tcp::no_delay(true), ec);
      const std::uint64_t id = next_id_++;
      auto s = std::make_shared<Session>(*this, std::move(socket), id);
      sessions_.emplace(id, s);
      s->read();
      accept();
    });
  }

  void route(const std::string& topic, const Bytes& bytes) {
    ++published_;
    auto sessions = sessions_;
    for (auto& [id, s] : sessions) s->enqueue(topic, bytes);
  }

  BrokerOptions opts_;
  asio::io_context io_;
  tcp::acceptor acceptor_;
  std::thread thread_;
  std::uint16_t port_ = 0;
  std::map<std::uint64_t, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 1;
  std::uint64_t published_ = 0;
  std::uint64_t rejected_ = 0;
};

}  // namespace hiros::bus
