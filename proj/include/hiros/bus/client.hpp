#pragma once

#include <array>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <boost/asio.hpp>

#include "hiros/bus/frame.hpp"

namespace hiros::bus {

// Blocking bus client. A background thread reads incoming frames and either
// hands them to the handler or queues them for next().
class Client {
 public:
  using Handler = std::function<void(BusFrame)>;

  Client(const std::string& host, std::uint16_t port, Handler handler = {}) : socket_(io_), handler_(std::move(handler)) {
    boost::asio::ip::tcp::resolver resolver(io_);
    boost::asio::connect(socket_, resolver.resolve(host, std::to_string(port)));
    socket_.set_option(boost::asio::ip::tcp::no_delay(true));
    reader_ = std::thread([this] { read_loop(); });
  }

  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;
  ~Client() { close(); }

  void send(const BusFrame& f) { send_raw(encode(f)); }

  void send_raw(const std::vector<std::uint8_t>& bytes) {
    std::lock_guard lock(write_mu_);
    boost::asio::write(socket_, boost::asio::buffer(bytes));
  }

  void publish(const std::string& topic, std::vector<std::uint8_t> payload) {
    send(BusFrame::pub(topic, std::move(payload)));
  }
  void publish(const std::string& topic, std::string_view text) { send(BusFrame::pub(topic, text)); }

  // Subscribes and waits until the broker has registered the subscription.
  void subscribe(const std::string& topic) {
    send(BusFrame::sub(topic));
    sync();
  }

  void unsubscribe(const std::string& topic) {
    send(BusFrame::unsub(topic));
    sync();
  }

  // Round trip through the broker; every frame sent before has been handled
  // when this returns.
  void sync(std::chrono::milliseconds timeout = std::chrono::seconds(5)) {
    std::unique_lock lock(mu_);
    const std::uint64_t want = ++pings_sent_;
    lock.unlock();
    send(BusFrame::ping());
    lock.lock();
    if (!cv_.wait_for(lock, timeout, [&] { return pongs_ >= want || closed_; })) {
      throw StateError("bus sync timed out");
    }
    if (pongs_ < want) throw StateError("bus connection closed");
  }

  std::optional<BusFrame> next(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, timeout, [&] { return !inbox_.empty() || closed_; });
    if (inbox_.empty()) return std::nullopt;
    BusFrame f = std::move(inbox_.front());
    inbox_.pop_front();
    return f;
  }

  bool closed() const {
    std::lock_guard lock(mu_);
    return closed_;
  }

  void close() {
    boost::system::error_code ec;
    socket_.shutdown(boost::asio::ip::tcp::socket::shutdown_both, ec);
    if (reader_.joinable()) reader_.join();
    socket_.close(ec);
  }

 private:
  void read_loop() {
    std::array<std::uint8_t, 1 << 16> buf{};
    FrameReader reader;
    try {
      for (;;) {
        boost::system::error_code ec;
        const std::size_t n = socket_.read_some(boost::asio::buffer(buf), ec);
        if (ec) break;
        reader.feed(std::span(buf.data(), n));
        while (auto f = reader.next()) dispatch(std::move(*f));
      }
    } catch (const FormatError&) {
    }
    std::lock_guard lock(mu_);
    closed_ = true;
    cv_.notify_all();
  }

  void dispatch(BusFrame f) {
    if (f.type == MsgType::Pong) {
      std::lock_guard lock(mu_);
      ++pongs_;
      cv_.notify_all();
      return;
    }
    if (f.type != MsgType::Pub) return;
    if (handler_) return handler_(std::move(f));
    std::lock_guard lock(mu_);
    inbox_.push_back(std::move(f));
    cv_.notify_all();
  }

  boost::asio::io_context io_;
  boost::asio::ip::tcp::socket socket_;
  Handler handler_;
  std::thread reader_;
  std::mutex write_mu_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<BusFrame> inbox_;
  std::uint64_t pings_sent_ = 0;
  std::uint64_t pongs_ = 0;
  bool closed_ = false;
};

}  // namespace hiros::bus
