#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <boost/beast/core/detail/base64.hpp>
#include <nlohmann/json.hpp>

#include "hiros/bus/frame.hpp"

namespace hiros::bus {

inline std::string base64_encode(std::span<const std::uint8_t> bytes) {
  namespace b64 = boost::beast::detail::base64;
  std::string out(b64::encoded_size(bytes.size()), '\0');
  out.resize(b64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

inline std::vector<std::uint8_t> base64_decode(std::string_view text) {
  namespace b64 = boost::beast::detail::base64;
  if (text.size() % 4 != 0) throw InputError("base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out(b64::decoded_size(text.size()));
  const auto [written, read] = b64::decode(out.data(), text.data(), text.size());
  const std::size_t padding = text.size() - read;
  if (padding > 2 || text.find_first_not_of('=', read) != std::string_view::npos) {
    throw InputError("invalid base64 character at " + std::to_string(read));
  }
  out.resize(written);
  return out;
}

// Bus message to websocket text. JSON payloads are embedded verbatim so they
// reach the browser byte-identical; anything else travels as base64.
inline std::string to_envelope(const BusFrame& f) {
  std::string out = R"({"topic":)" + nlohmann::json(f.topic).dump() + R"(,"payload":)";
  const std::string_view text(reinterpret_cast<const char*>(f.payload.data()), f.payload.size());
  if (!text.empty() && nlohmann::json::accept(text)) {
    out.append(text);
  } else {
    out += '"' + base64_encode(f.payload) + R"(","encoding":"base64")";
  }
  out += '}';
  return out;
}

inline std::string error_envelope(std::string_view message) {
  return nlohmann::json{{"error", std::string(message)}}.dump();
}

// A websocket client request translated to a bus frame.
inline BusFrame from_envelope(std::string_view text) {
  const auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw InputError("message is not valid JSON");
  if (!j.is_object()) throw InputError("message must be a JSON object");
  const auto topic_of = [&j] {
    if (!j.contains("topic") || !j["topic"].is_string() || j["topic"].get<std::string>().empty()) {
      throw InputError("message needs a non-empty string \"topic\"");
    }
    return j["topic"].get<std::string>();
  };
  if (j.contains("op")) {
    const auto& op = j["op"];
    if (op == "sub") return BusFrame::sub(topic_of());
    if (op == "unsub") return BusFrame::unsub(topic_of());
    throw InputError("unknown op " + op.dump());
  }
  std::string topic = topic_of();
  if (!j.contains("payload")) throw InputError("message needs \"payload\"");
  const auto& payload = j["payload"];
  if (j.value("encoding", "") == "base64") {
    if (!payload.is_string()) throw InputError("base64 payload must be a string");
    return BusFrame::pub(std::move(topic), base64_decode(payload.get<std::string>()));
  }
  return BusFrame::pub(std::move(topic), std::string_view(payload.dump()));
}

}  // namespace hiros::bus
