#pragma once

#include <json.hpp>

#include <optional>
#include <string>

#include "tikzmcts/embed.hpp"
#include "tikzmcts/policy.hpp"

namespace tikzmcts::wire {

using Json = nlohmann::ordered_json;

Json encode_rollout_request(const PolicyRequest& req);
PolicyRequest decode_rollout_request(const Json& body);

Json encode_rollout_response(const PolicyResponse& resp);
PolicyResponse decode_rollout_response(const Json& body);

Json encode_image_response(const std::string& image_id);
std::string decode_image_response(const Json& body);

enum class EmbedMode { Pooled, Patches };

struct EmbedRequest {
  std::string image_id;
  EmbedMode mode = EmbedMode::Pooled;
  std::optional<int> layer_index;

  bool operator==(const EmbedRequest&) const = default;
};

Json encode_embed_request(const EmbedRequest& req);
EmbedRequest decode_embed_request(const Json& body);

Json encode_pooled_response(const Embedding& emb);
Embedding decode_pooled_response(const Json& body);

Json encode_patches_response(const PatchEmbeddings& patches);
PatchEmbeddings decode_patches_response(const Json& body);

/// {"error": message}
Json encode_error(const std::string& message);

}  // namespace tikzmcts::wire
