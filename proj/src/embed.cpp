#include "tikzmcts/embed.hpp"

#include <algorithm>
#include <cmath>

#include "tikzmcts/errors.hpp"
#include "tikzmcts/hashing.hpp"
#include "tikzmcts/http_transport.hpp"
#include "tikzmcts/wire.hpp"

namespace tikzmcts {

void validate_embedding(const Embedding& emb) {
  if (emb.values.empty()) throw ProtocolError("embedding has zero dimension");
  for (double v : emb.values) {
    if (!std::isfinite(v)) throw ProtocolError("embedding contains non-finite values");
  }
}

void validate_patches(const PatchEmbeddings& p) {
  if (p.patches.empty()) throw ProtocolError("patch embeddings are empty");
  const std::size_t dim = p.patches.front().size();
  if (dim == 0) throw ProtocolError("patch embeddings have zero dimension");
  for (const auto& row : p.patches) {
    if (row.size() != dim) throw ProtocolError("patch embeddings have ragged rows");
    for (double v : row) {
      if (!std::isfinite(v)) throw ProtocolError("patch embeddings contain non-finite values");
    }
  }
}

MockEmbedder::MockEmbedder(int grid, int patch_grid) : grid_(grid), patch_grid_(patch_grid) {
  if (grid_ < 1 || patch_grid_ < 1 || grid_ % patch_grid_ != 0) {
    throw InvalidConfig("mock embedder: grid must be a positive multiple of patch_grid");
  }
}

std::string MockEmbedder::describe() const {
  return "mock:grid=" + std::to_string(grid_) + ",patches=" + std::to_string(patch_grid_);
}

std::vector<double> MockEmbedder::lattice(const RasterImage& image) const {
  if (image.empty()) throw ContractViolation("embed: empty image");
  auto span = [](int cell, int cells, int size) {
    const int lo = static_cast<int>(static_cast<long long>(cell) * size / cells);
    int hi = static_cast<int>(static_cast<long long>(cell + 1) * size / cells);
    hi = std::min(size, std::max(hi, lo + 1));
    return std::pair{std::min(lo, size - 1), hi};
  };
  std::vector<double> g(static_cast<std::size_t>(grid_) * grid_);
  for (int cy = 0; cy < grid_; ++cy) {
    const auto [y0, y1] = span(cy, grid_, image.height);
    for (int cx = 0; cx < grid_; ++cx) {
      const auto [x0, x1] = span(cx, grid_, image.width);
      double sum = 0;
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) sum += image.gray(x, y);
      }
      g[static_cast<std::size_t>(cy) * grid_ + cx] = sum / ((y1 - y0) * (x1 - x0));
    }
  }
  double mean = 0;
  for (double v : g) mean += v;
  mean /= static_cast<double>(g.size());
  for (double& v : g) v -= mean;
  return g;
}

Embedding MockEmbedder::embed_image(const RasterImage& image) { return {lattice(image)}; }

PatchEmbeddings MockEmbedder::embed_patches(const RasterImage& image,
                                            std::optional<int> layer_index) {
  const auto g = lattice(image);
  const int block = grid_ / patch_grid_;
  PatchEmbeddings out;
  out.layer_index = layer_index;
  for (int py = 0; py < patch_grid_; ++py) {
    for (int px = 0; px < patch_grid_; ++px) {
      std::vector<double> row;
      row.reserve(static_cast<std::size_t>(block) * block);
      for (int y = py * block; y < (py + 1) * block; ++y) {
        for (int x = px * block; x < (px + 1) * block; ++x) {
          row.push_back(g[static_cast<std::size_t>(y) * grid_ + x]);
        }
      }
      out.patches.push_back(std::move(row));
    }
  }
  return out;
}

HttpEmbedder::HttpEmbedder(std::shared_ptr<HttpTransport> transport,
                           std::optional<std::size_t> expected_dim, std::size_t cache_capacity)
    : transport_(std::move(transport)),
      expected_dim_(expected_dim),
      pooled_cache_(cache_capacity),
      patch_cache_(cache_capacity) {}

std::string HttpEmbedder::describe() const { return transport_->base_url(); }

std::string HttpEmbedder::upload(const std::vector<std::uint8_t>& png) {
  const std::string expected = sha256_hex(png);
  const std::string id =
      wire::decode_image_response(transport_->post_bytes("/v1/images", png, "image/png"));
  if (id != expected) {
    throw ProtocolError("image_id mismatch: server returned " + id + ", expected " + expected);
  }
  return id;
}

Embedding HttpEmbedder::embed_image(const RasterImage& image) {
  const auto png = encode_png(image);
  const std::string key = sha256_hex(png);
  if (auto hit = pooled_cache_.get(key)) return *hit;

  const std::string id = upload(png);
  ++server_calls_;
  Embedding emb = wire::decode_pooled_response(
      transport_->post_json("/v1/embed", wire::encode_embed_request({id, wire::EmbedMode::Pooled, std::nullopt})));
  if (expected_dim_ && emb.dim() != *expected_dim_) {
    throw ProtocolError("embedding dim " + std::to_string(emb.dim()) + " != configured " +
                        std::to_string(*expected_dim_));
  }
  pooled_cache_.put(key, emb);
  return emb;
}

PatchEmbeddings HttpEmbedder::embed_patches(const RasterImage& image,
                                            std::optional<int> layer_index) {
  const auto png = encode_png(image);
  const std::string key =
      sha256_hex(png) + ":" + (layer_index ? std::to_string(*layer_index) : std::string("-"));
  if (auto hit = patch_cache_.get(key)) return *hit;

  const std::string id = upload(png);
  ++server_calls_;
  PatchEmbeddings p = wire::decode_patches_response(transport_->post_json(
      "/v1/embed", wire::encode_embed_request({id, wire::EmbedMode::Patches, layer_index})));
  p.layer_index = layer_index;
  patch_cache_.put(key, p);
  return p;
}

}  // namespace tikzmcts
