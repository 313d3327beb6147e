#include "tikzmcts/wire.hpp"

#include "tikzmcts/errors.hpp"

namespace tikzmcts::wire {

namespace {

const Json& field(const Json& body, const char* name) {
  if (!body.is_object()) throw ProtocolError("expected a JSON object");
  auto it = body.find(name);
  if (it == body.end()) throw ProtocolError(std::string("missing field '") + name + "'");
  return *it;
}

std::vector<std::string> string_list(const Json& j, const char* name) {
  if (!j.is_array()) throw ProtocolError(std::string("field '") + name + "' must be an array");
  std::vector<std::string> out;
  out.reserve(j.size());
  for (const auto& item : j) {
    if (!item.is_string()) throw ProtocolError(std::string("field '") + name + "' must hold strings");
    out.push_back(item.get<std::string>());
  }
  return out;
}

std::vector<double> number_list(const Json& j, const char* name) {
  if (!j.is_array()) throw ProtocolError(std::string("field '") + name + "' must be an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& item : j) {
    if (!item.is_number()) throw ProtocolError(std::string("field '") + name + "' must hold numbers");
    out.push_back(item.get<double>());
  }
  return out;
}

template <typename T>
T integer(const Json& j, const char* name) {
  if (!j.is_number_integer()) throw ProtocolError(std::string("field '") + name + "' must be an integer");
  return j.get<T>();
}

}  // namespace

Json encode_rollout_request(const PolicyRequest& req) {
  Json j;
  j["image_id"] = req.image_ref;
  j["prefix_lines"] = req.prefix_lines;
  j["temperature"] = req.temperature;
  j["max_new_lines"] = req.max_new_lines;
  j["seed"] = req.seed ? Json(*req.seed) : Json(nullptr);
  return j;
}

PolicyRequest decode_rollout_request(const Json& body) {
  PolicyRequest req;
  const auto& id = field(body, "image_id");
  if (!id.is_string()) throw ProtocolError("field 'image_id' must be a string");
  req.image_ref = id.get<std::string>();
  req.prefix_lines = string_list(field(body, "prefix_lines"), "prefix_lines");
  const auto& t = field(body, "temperature");
  if (!t.is_number()) throw ProtocolError("field 'temperature' must be a number");
  req.temperature = t.get<double>();
  req.max_new_lines = integer<int>(field(body, "max_new_lines"), "max_new_lines");
  if (auto it = body.find("seed"); it != body.end() && !it->is_null()) {
    req.seed = integer<std::uint64_t>(*it, "seed");
  }
  return req;
}

Json encode_rollout_response(const PolicyResponse& resp) {
  Json j;
  j["new_lines"] = resp.new_lines;
  j["eos"] = resp.eos;
  j["tokens_used"] = resp.tokens_used;
  return j;
}

PolicyResponse decode_rollout_response(const Json& body) {
  PolicyResponse resp;
  resp.new_lines = string_list(field(body, "new_lines"), "new_lines");
  const auto& eos = field(body, "eos");
  if (!eos.is_boolean()) throw ProtocolError("field 'eos' must be a boolean");
  resp.eos = eos.get<bool>();
  resp.tokens_used = integer<int>(field(body, "tokens_used"), "tokens_used");
  if (resp.tokens_used < 0) throw ProtocolError("field 'tokens_used' must be nonnegative");
  return resp;
}

Json encode_image_response(const std::string& image_id) { return Json{{"image_id", image_id}}; }

std::string decode_image_response(const Json& body) {
  const auto& id = field(body, "image_id");
  if (!id.is_string()) throw ProtocolError("field 'image_id' must be a string");
  return id.get<std::string>();
}

Json encode_embed_request(const EmbedRequest& req) {
  Json j;
  j["image_id"] = req.image_id;
  j["mode"] = req.mode == EmbedMode::Pooled ? "pooled" : "patches";
  j["layer_index"] = req.layer_index ? Json(*req.layer_index) : Json(nullptr);
  return j;
}

EmbedRequest decode_embed_request(const Json& body) {
  EmbedRequest req;
  const auto& id = field(body, "image_id");
  if (!id.is_string()) throw ProtocolError("field 'image_id' must be a string");
  req.image_id = id.get<std::string>();
  const auto& mode = field(body, "mode");
  if (mode == "pooled") {
    req.mode = EmbedMode::Pooled;
  } else if (mode == "patches") {
    req.mode = EmbedMode::Patches;
  } else {
    throw ProtocolError("field 'mode' must be \"pooled\" or \"patches\"");
  }
  if (auto it = body.find("layer_index"); it != body.end() && !it->is_null()) {
    req.layer_index = integer<int>(*it, "layer_index");
  }
  return req;
}

Json encode_pooled_response(const Embedding& emb) {
  Json j;
  j["dim"] = emb.dim();
  j["values"] = emb.values;
  return j;
}

Embedding decode_pooled_response(const Json& body) {
  const auto dim = integer<std::size_t>(field(body, "dim"), "dim");
  Embedding emb{number_list(field(body, "values"), "values")};
  if (emb.dim() != dim) throw ProtocolError("'dim' disagrees with length of 'values'");
  validate_embedding(emb);
  return emb;
}

Json encode_patches_response(const PatchEmbeddings& p) {
  Json j;
  j["num_patches"] = p.num_patches();
  j["dim"] = p.dim();
  j["patches"] = p.patches;
  return j;
}

PatchEmbeddings decode_patches_response(const Json& body) {
  const auto n = integer<std::size_t>(field(body, "num_patches"), "num_patches");
  const auto dim = integer<std::size_t>(field(body, "dim"), "dim");
  const auto& rows = field(body, "patches");
  if (!rows.is_array()) throw ProtocolError("field 'patches' must be an array");
  PatchEmbeddings p;
  for (const auto& row : rows) p.patches.push_back(number_list(row, "patches"));
  if (p.num_patches() != n) throw ProtocolError("'num_patches' disagrees with 'patches'");
  validate_patches(p);
  if (p.dim() != dim) throw ProtocolError("'dim' disagrees with patch rows");
  return p;
}

Json encode_error(const std::string& message) { return Json{{"error", message}}; }

}  // namespace tikzmcts::wire
