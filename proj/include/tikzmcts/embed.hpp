#pragma once

#include <atomic>
#include <cstddef>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tikzmcts/image.hpp"

namespace tikzmcts {

class HttpTransport;

/// Pooled image embedding. Not normalized.
struct Embedding {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
  bool operator==(const Embedding&) const = default;
};

/// Per-patch embeddings, one row per patch; all rows share one dimension.
struct PatchEmbeddings {
  std::vector<std::vector<double>> patches;
  std::optional<int> layer_index;

  std::size_t num_patches() const { return patches.size(); }
  std::size_t dim() const { return patches.empty() ? 0 : patches.front().size(); }
  bool operator==(const PatchEmbeddings&) const = default;
};

/// Throws ProtocolError if the embedding is empty or non-finite.
void validate_embedding(const Embedding& emb);
void validate_patches(const PatchEmbeddings& patches);

class Embedder {
 public:
  virtual ~Embedder() = default;

  virtual Embedding embed_image(const RasterImage& image) = 0;
  virtual PatchEmbeddings embed_patches(const RasterImage& image, std::optional<int> layer_index) = 0;

  virtual std::string describe() const = 0;
};

/// Deterministic stand-in encoder.
///
/// The image is converted to luma in [0,1] and area-averaged onto a
/// grid×grid lattice G; G is mean-centered with its global mean. The pooled
/// embedding is G flattened row-major (dim grid²). Patch k of an n×n patch
/// grid is the (grid/n)×(grid/n) block of the same centered lattice,
/// flattened row-major, so the patches partition the pooled vector.
class MockEmbedder final : public Embedder {
 public:
  explicit MockEmbedder(int grid = 16, int patch_grid = 4);

  Embedding embed_image(const RasterImage& image) override;
  PatchEmbeddings embed_patches(const RasterImage& image, std::optional<int> layer_index) override;
  std::string describe() const override;

  /// Centered grid×grid luma lattice, row-major.
  std::vector<double> lattice(const RasterImage& image) const;

 private:
  int grid_;
  int patch_grid_;
};

/// Bounded LRU map; thread-safe.
template <typename V>
class LruCache {
 public:
  explicit LruCache(std::size_t capacity) : capacity_(capacity) {}

  std::optional<V> get(const std::string& key) {
    std::lock_guard lock(mu_);
    auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    order_.splice(order_.begin(), order_, it->second);
    return it->second->second;
  }

  void put(const std::string& key, V value) {
    if (capacity_ == 0) return;
    std::lock_guard lock(mu_);
    if (auto it = index_.find(key); it != index_.end()) {
      it->second->second = std::move(value);
      order_.splice(order_.begin(), order_, it->second);
      return;
    }
    order_.emplace_front(key, std::move(value));
    index_[key] = order_.begin();
    if (order_.size() > capacity_) {
      index_.erase(order_.back().first);
      order_.pop_back();
    }
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return order_.size();
  }

 private:
  std::size_t capacity_;
  std::list<std::pair<std::string, V>> order_;
  std::unordered_map<std::string, typename std::list<std::pair<std::string, V>>::iterator> index_;
  mutable std::mutex mu_;
};

/// Client for /v1/images + /v1/embed. Results are cached by image content
/// hash. When `expected_dim` is set, pooled responses of another dimension
/// raise ProtocolError.
class HttpEmbedder final : public Embedder {
 public:
  HttpEmbedder(std::shared_ptr<HttpTransport> transport, std::optional<std::size_t> expected_dim,
               std::size_t cache_capacity = 256);

  Embedding embed_image(const RasterImage& image) override;
  PatchEmbeddings embed_patches(const RasterImage& image, std::optional<int> layer_index) override;
  std::string describe() const override;

  std::size_t server_calls() const { return server_calls_.load(); }

 private:
  std::string upload(const std::vector<std::uint8_t>& png);

  std::shared_ptr<HttpTransport> transport_;
  std::optional<std::size_t> expected_dim_;
  LruCache<Embedding> pooled_cache_;
  LruCache<PatchEmbeddings> patch_cache_;
  std::atomic<std::size_t> server_calls_{0};
};

}  // namespace tikzmcts
