#pragma once

#include <deque>
#include <filesystem>
#include <fstream>
#include <future>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "hiros/bus/broker.hpp"
#include "hiros/bus/client.hpp"
#include "hiros/bus/envelope.hpp"

namespace hiros::bus {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;

struct BridgeOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;  // 0 picks a free port
  std::string bus_host = "127.0.0.1";
  std::uint16_t bus_port = kDefaultBusPort;
  std::optional<std::filesystem::path> static_root;
  std::function<void(const std::string&)> log;
};

inline std::string_view mime_type(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html";
  if (ext == ".js" || ext == ".mjs") return "application/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  if (ext == ".ico") return "image/x-icon";
  return "application/octet-stream";
}

// Websocket endpoint translating JSON envelopes to bus frames. Each websocket
// connection gets its own bus connection. Plain HTTP GETs are answered from
// static_root when one is configured.
class WsBridge {
 public:
  explicit WsBridge(BridgeOptions opts) : opts_(std::move(opts)), acceptor_(io_) {}
  WsBridge(const WsBridge&) = delete;
  WsBridge& operator=(const WsBridge&) = delete;
  ~WsBridge() { stop(); }

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
    // Bus clients post into io_, so they go before the loop stops.
    std::promise<void> done;
    asio::post(io_, [this, &done] {
      beast::error_code ec;
      acceptor_.close(ec);
      for (auto& w : sessions_)
        if (auto s = w.lock(); s && s->client) s->client->close();
      done.set_value();
    });
    done.get_future().wait();
    io_.stop();
    thread_.join();
  }

  std::uint16_t port() const { return port_; }

 private:
  struct Session : std::enable_shared_from_this<Session> {
    Session(WsBridge& b, tcp::socket s) : bridge(b), stream(std::move(s)) {}
    ~Session() {
      if (client) client->close();
    }

    WsBridge& bridge;
    beast::tcp_stream stream;
    beast::flat_buffer buffer;
    http::request<http::string_body> request;
    std::optional<websocket::stream<beast::tcp_stream>> ws;
    std::unique_ptr<Client> client;
    std::deque<std::string> outbox;
    bool writing = false;

    void start() {
      http::async_read(stream, buffer, request, [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) return;
        if (websocket::is_upgrade(self->request)) return self->upgrade();
        self->serve_file();
      });
    }

    void upgrade() {
      ws.emplace(std::move(stream));
      ws->set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
      ws->async_accept(request, [self = shared_from_this()](beast::error_code ec) {
        if (ec) return;
        std::weak_ptr<Session> weak = self;
        auto& io = self->bridge.io_;
        try {
          self->client = std::make_unique<Client>(self->bridge.opts_.bus_host, self->bridge.opts_.bus_port,
                                                  [weak, &io](BusFrame f) {
                                                    asio::post(io, [weak, text = to_envelope(f)]() mutable {
                                                      if (auto s = weak.lock()) s->send(std::move(text));
                                                    });
                                                  });
        } catch (const std::exception& e) {
          self->bridge.note(std::string("bus connect failed: ") + e.what());
          self->send(error_envelope("bus unavailable"));
          return;
        }
        self->read();
      });
    }

    void read() {
      buffer.clear();
      ws->async_read(buffer, [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) return;
        self->handle(beast::buffers_to_string(self->buffer.data()));
        self->read();
      });
    }

    void handle(const std::string& text) {
      BusFrame f;
      try {
        f = from_envelope(text);
      } catch (const InputError& e) {
        return send(error_envelope(e.what()));
      }
      try {
        client->send(f);
      } catch (const std::exception& e) {
        send(error_envelope(std::string("bus write failed: ") + e.what()));
      }
    }

    void send(std::string text) {
      outbox.push_back(std::move(text));
      flush();
    }

    void flush() {
      if (writing || outbox.empty() || !ws) return;
      writing = true;
      ws->text(true);
      ws->async_write(asio::buffer(outbox.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
        self->writing = false;
        if (ec) return;
        self->outbox.pop_front();
        self->flush();
      });
    }

    void serve_file() {
      auto res = std::make_shared<http::response<http::string_body>>();
      res->version(request.version());
      res->keep_alive(false);
      const auto body = bridge.lookup(std::string(request.target()));
      if (request.method() != http::verb::get || !body) {
        res->result(http::status::not_found);
        res->set(http::field::content_type, "text/plain");
        res->body() = "not found\n";
      } else {
        res->result(http::status::ok);
        res->set(http::field::content_type, body->second);
        res->body() = std::move(body->first);
      }
      res->prepare_payload();
      http::async_write(stream, *res, [self = shared_from_this(), res](beast::error_code, std::size_t) {
        beast::error_code ec;
        self->stream.socket().shutdown(tcp::socket::shutdown_send, ec);
      });
    }
  };

  std::optional<std::pair<std::string, std::string>> lookup(std::string target) const {
    if (!opts_.static_root) return std::nullopt;
    if (const auto q = target.find('?'); q != std::string::npos) target.resize(q);
    if (target.empty() || target.front() != '/' || target.find("..") != std::string::npos) return std::nullopt;
    if (target.back() == '/') target += "index.html";
    const auto path = *opts_.static_root / target.substr(1);
    std::ifstream in(path, std::ios::binary);
    if (!in || std::filesystem::is_directory(path)) return std::nullopt;
    std::ostringstream ss;
    ss << in.rdbuf();
    return std::pair{ss.str(), std::string(mime_type(path))};
  }

  void note(const std::string& msg) {
    if (opts_.log) opts_.log(msg);
  }

  void accept() {
    acceptor_.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      auto s = std::make_shared<Session>(*this, std::move(socket));
      std::erase_if(sessions_, [](const auto& w) { return w.expired(); });
      sessions_.push_back(s);
      s->start();
      accept();
    });
  }

  BridgeOptions opts_;
  asio::io_context io_;
  tcp::acceptor acceptor_;
  std::thread thread_;
  std::uint16_t port_ = 0;
  std::vector<std::weak_ptr<Session>> sessions_;
};

}  // namespace hiros::bus
