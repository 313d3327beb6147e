#include "tikzmcts/mock_server.hpp"

#include <httplib.h>

#include <atomic>
#include <thread>

#include "tikzmcts/errors.hpp"
#include "tikzmcts/hashing.hpp"
#include "tikzmcts/image.hpp"
#include "tikzmcts/wire.hpp"

namespace tikzmcts {

struct MockWireServer::Impl {
  std::shared_ptr<RolloutPolicy> policy;
  std::shared_ptr<Embedder> embedder;
  LruCache<RasterImage> images;
  httplib::Server server;
  std::thread worker;
  std::string host = "127.0.0.1";
  int port = 0;
  std::atomic<std::size_t> served{0};

  Impl(std::shared_ptr<RolloutPolicy> p, std::shared_ptr<Embedder> e, std::size_t capacity)
      : policy(std::move(p)), embedder(std::move(e)), images(capacity) {
    routes();
  }

  static void reply(httplib::Response& res, int status, const wire::Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  template <typename Fn>
  void guarded(httplib::Response& res, Fn&& fn) {
    ++served;
    try {
      fn();
    } catch (const ProtocolError& e) {
      reply(res, 400, wire::encode_error(e.what()));
    } catch (const ContractViolation& e) {
      reply(res, 400, wire::encode_error(e.what()));
    } catch (const std::exception& e) {
      reply(res, 500, wire::encode_error(e.what()));
    }
  }

  static wire::Json parse(const std::string& body) {
    auto j = wire::Json::parse(body, nullptr, false);
    if (j.is_discarded()) throw ProtocolError("request body is not JSON");
    return j;
  }

  bool lookup(const std::string& id, RasterImage& out, httplib::Response& res) {
    auto hit = images.get(id);
    if (!hit) {
      reply(res, 404, wire::encode_error("unknown image_id " + id));
      return false;
    }
    out = std::move(*hit);
    return true;
  }

  void routes() {
    server.Post("/v1/images", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        std::vector<std::uint8_t> bytes(req.body.begin(), req.body.end());
        RasterImage img;
        try {
          img = decode_png(bytes);
        } catch (const std::exception& e) {
          throw ProtocolError(std::string("body is not a PNG image: ") + e.what());
        }
        const std::string id = sha256_hex(bytes);
        images.put(id, std::move(img));
        reply(res, 200, wire::encode_image_response(id));
      });
    });

    server.Post("/v1/rollout", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const PolicyRequest preq = wire::decode_rollout_request(parse(req.body));
        validate_request(preq);
        RasterImage img;
        if (!lookup(preq.image_ref, img, res)) return;
        reply(res, 200, wire::encode_rollout_response(policy->sample_continuation(preq)));
      });
    });

    server.Post("/v1/embed", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto ereq = wire::decode_embed_request(parse(req.body));
        RasterImage img;
        if (!lookup(ereq.image_id, img, res)) return;
        if (ereq.mode == wire::EmbedMode::Pooled) {
          reply(res, 200, wire::encode_pooled_response(embedder->embed_image(img)));
        } else {
          reply(res, 200, wire::encode_patches_response(embedder->embed_patches(img, ereq.layer_index)));
        }
      });
    });
  }
};

MockWireServer::MockWireServer(std::shared_ptr<RolloutPolicy> policy, std::shared_ptr<Embedder> embedder,
                               std::size_t image_capacity)
    : impl_(std::make_unique<Impl>(std::move(policy), std::move(embedder), image_capacity)) {}

MockWireServer::~MockWireServer() { stop(); }

int MockWireServer::start(const std::string& host, int port) {
  impl_->host = host;
  if (port == 0) {
    impl_->port = impl_->server.bind_to_any_port(host);
  } else if (impl_->server.bind_to_port(host, port)) {
    impl_->port = port;
  } else {
    impl_->port = -1;
  }
  if (impl_->port < 0) throw EnvironmentError("cannot bind " + host + ":" + std::to_string(port));
  impl_->worker = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return impl_->port;
}

void MockWireServer::serve_forever(const std::string& host, int port) {
  impl_->host = host;
  impl_->port = port;
  if (!impl_->server.listen(host, port)) {
    throw EnvironmentError("cannot serve on " + host + ":" + std::to_string(port));
  }
}

void MockWireServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->worker.joinable()) impl_->worker.join();
}

std::string MockWireServer::url() const {
  return "http://" + impl_->host + ":" + std::to_string(impl_->port);
}

std::size_t MockWireServer::requests_served() const { return impl_->served.load(); }

}  // namespace tikzmcts
