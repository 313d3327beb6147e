#include "tikzmcts/http_transport.hpp"

#include <httplib.h>

#include "tikzmcts/errors.hpp"

namespace tikzmcts {

HttpTransport::HttpTransport(std::string base_url, TransportOptions options)
    : base_url_(std::move(base_url)), options_(options) {
  while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
  if (base_url_.empty()) throw InvalidConfig("empty endpoint URL");
}

HttpTransport::~HttpTransport() = default;

nlohmann::ordered_json HttpTransport::post_json(const std::string& path,
                                                const nlohmann::ordered_json& body) {
  return post(path, body.dump(), "application/json");
}

nlohmann::ordered_json HttpTransport::post_bytes(const std::string& path,
                                                 const std::vector<std::uint8_t>& body,
                                                 const std::string& content_type) {
  return post(path, std::string(body.begin(), body.end()), content_type);
}

nlohmann::ordered_json HttpTransport::post(const std::string& path, const std::string& body,
                                           const std::string& content_type) {
  const auto seconds = static_cast<time_t>(options_.timeout_s);
  const auto micros = static_cast<time_t>((options_.timeout_s - seconds) * 1e6);
  std::string last_error;
  for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
    httplib::Client client(base_url_);
    client.set_connection_timeout(seconds, micros);
    client.set_read_timeout(seconds, micros);
    client.set_write_timeout(seconds, micros);
    auto res = client.Post(path, body, content_type);
    if (!res) {
      last_error = "POST " + base_url_ + path + ": " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "POST " + base_url_ + path + ": HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw ProtocolError("POST " + path + " returned HTTP " + std::to_string(res->status) + ": " +
                          res->body.substr(0, 200));
    }
    auto parsed = nlohmann::ordered_json::parse(res->body, nullptr, false);
    if (parsed.is_discarded()) throw ProtocolError("POST " + path + ": response is not JSON");
    return parsed;
  }
  throw GatewayError(last_error, options_.max_retries);
}

}  // namespace tikzmcts
