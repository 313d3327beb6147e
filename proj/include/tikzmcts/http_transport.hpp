#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

namespace tikzmcts {

struct TransportOptions {
  double timeout_s = 120.0;
  int max_retries = 2;
};

/// Thin JSON-over-HTTP client with retry on transport failure. Retries are
/// safe because the wire protocol treats identical requests as replays.
class HttpTransport {
 public:
  explicit HttpTransport(std::string base_url, TransportOptions options = {});
  ~HttpTransport();

  HttpTransport(const HttpTransport&) = delete;
  HttpTransport& operator=(const HttpTransport&) = delete;

  /// POSTs a JSON body. Transport failures and 5xx answers are retried, then
  /// raise GatewayError; 4xx answers or unparsable JSON raise ProtocolError.
  nlohmann::ordered_json post_json(const std::string& path, const nlohmann::ordered_json& body);
  nlohmann::ordered_json post_bytes(const std::string& path, const std::vector<std::uint8_t>& body,
                                    const std::string& content_type);

  const std::string& base_url() const { return base_url_; }

 private:
  nlohmann::ordered_json post(const std::string& path, const std::string& body,
                              const std::string& content_type);

  std::string base_url_;
  TransportOptions options_;
};

}  // namespace tikzmcts
