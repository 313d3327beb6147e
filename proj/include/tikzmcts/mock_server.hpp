#pragma once

#include <cstddef>
#include <memory>
#include <string>

#include "tikzmcts/embed.hpp"
#include "tikzmcts/policy.hpp"

namespace tikzmcts {

/// HTTP server speaking the /v1/images, /v1/rollout and /v1/embed protocol on
/// top of in-process policy and embedder objects. Errors come back as
/// {"error": "..."} with status 400 (bad request), 404 (unknown image_id) or
/// 500.
class MockWireServer {
 public:
  MockWireServer(std::shared_ptr<RolloutPolicy> policy, std::shared_ptr<Embedder> embedder,
                 std::size_t image_capacity = 1024);
  ~MockWireServer();

  MockWireServer(const MockWireServer&) = delete;
  MockWireServer& operator=(const MockWireServer&) = delete;

  /// Binds (port 0 picks a free one) and serves on a background thread.
  /// Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Binds and serves on the calling thread until stop().
  void serve_forever(const std::string& host, int port);
  void stop();

  std::string url() const;
  std::size_t requests_served() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace tikzmcts
