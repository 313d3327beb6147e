#include "tikzmcts/policy.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>

#include "tikzmcts/errors.hpp"
#include "tikzmcts/hashing.hpp"
#include "tikzmcts/http_transport.hpp"
#include "tikzmcts/tex_tokens.hpp"
#include "tikzmcts/wire.hpp"

namespace tikzmcts {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

bool has_prefix(const std::vector<std::string>& whole, const std::vector<std::string>& prefix) {
  return prefix.size() <= whole.size() && std::equal(prefix.begin(), prefix.end(), whole.begin());
}

}  // namespace

void validate_request(const PolicyRequest& req) {
  if (!(req.temperature > 0)) throw ContractViolation("policy request: temperature must be > 0");
  if (req.max_new_lines < 1) throw ContractViolation("policy request: max_new_lines must be >= 1");
}

void validate_response(const PolicyResponse& resp, const PolicyRequest& req) {
  if (!resp.eos && resp.new_lines.empty()) {
    throw ProtocolError("policy response without eos must carry at least one line");
  }
  if (static_cast<int>(resp.new_lines.size()) > req.max_new_lines) {
    throw ProtocolError("policy response exceeds max_new_lines");
  }
  for (const auto& line : resp.new_lines) {
    if (line.find_first_of("\r\n") != std::string::npos) {
      throw ProtocolError("policy response line contains a line separator");
    }
  }
  if (resp.tokens_used < 0) throw ProtocolError("policy response reports negative tokens");
}

int mock_token_count(const std::vector<std::string>& lines, bool eos) {
  int n = eos ? 1 : 0;
  for (const auto& line : lines) n += static_cast<int>(tokenize_tex(line).size()) + 1;
  return n;
}

std::string RolloutPolicy::upload_image(const std::vector<std::uint8_t>& png_bytes) {
  return sha256_hex(png_bytes);
}

// --- ScriptedPolicy -------------------------------------------------------

ScriptedPolicy::ScriptedPolicy(Script script) : phases_{std::move(script)} {}

ScriptedPolicy::ScriptedPolicy(std::vector<Script> phases) : phases_(std::move(phases)) {
  if (phases_.empty()) phases_.emplace_back();
}

std::size_t ScriptedPolicy::phase() const {
  std::lock_guard lock(mu_);
  return phase_;
}

PolicyResponse ScriptedPolicy::sample_continuation(const PolicyRequest& req) {
  validate_request(req);
  std::lock_guard lock(mu_);
  const Script& script = phases_[phase_];
  const auto& prefix = req.prefix_lines;

  const ScriptEntry* best = nullptr;
  std::size_t consumed = 0;
  for (const auto& entry : script) {
    if (!has_prefix(prefix, entry.prefix)) continue;
    const std::size_t extra = prefix.size() - entry.prefix.size();
    if (extra > entry.lines.size()) continue;
    if (!std::equal(prefix.begin() + static_cast<std::ptrdiff_t>(entry.prefix.size()), prefix.end(),
                    entry.lines.begin())) {
      continue;
    }
    if (extra == entry.lines.size() && !entry.eos) continue;
    if (!best || entry.prefix.size() > best->prefix.size()) {
      best = &entry;
      consumed = extra;
    }
  }

  PolicyResponse resp;
  if (!best) {
    resp.eos = true;
  } else {
    const std::size_t remaining = best->lines.size() - consumed;
    const std::size_t take = std::min<std::size_t>(remaining, static_cast<std::size_t>(req.max_new_lines));
    resp.new_lines.assign(best->lines.begin() + static_cast<std::ptrdiff_t>(consumed),
                          best->lines.begin() + static_cast<std::ptrdiff_t>(consumed + take));
    resp.eos = best->eos && take == remaining;
  }
  resp.tokens_used = mock_token_count(resp.new_lines, resp.eos);
  if (resp.eos && phase_ + 1 < phases_.size()) ++phase_;
  return resp;
}

// --- SeededStochasticPolicy -----------------------------------------------

SeededStochasticPolicy::SeededStochasticPolicy(std::vector<std::vector<WeightedLine>> positions,
                                               std::uint64_t seed)
    : positions_(std::move(positions)), seed_(seed), rng_(seed) {
  for (const auto& menu : positions_) {
    if (menu.empty()) throw InvalidConfig("stochastic policy: empty menu");
    for (const auto& w : menu) {
      if (!(w.weight > 0) || !std::isfinite(w.weight)) {
        throw InvalidConfig("stochastic policy: weights must be positive");
      }
    }
  }
}

PolicyResponse SeededStochasticPolicy::sample_continuation(const PolicyRequest& req) {
  validate_request(req);
  std::mt19937_64 local(0);
  std::unique_lock lock(mu_, std::defer_lock);
  std::mt19937_64* rng = &local;
  if (req.seed) {
    local.seed(splitmix64(seed_ ^ splitmix64(*req.seed)));
  } else {
    lock.lock();
    rng = &rng_;
  }

  PolicyResponse resp;
  std::size_t depth = req.prefix_lines.size();
  while (static_cast<int>(resp.new_lines.size()) < req.max_new_lines && depth < positions_.size()) {
    const auto& menu = positions_[depth];
    std::vector<double> weights;
    weights.reserve(menu.size());
    for (const auto& w : menu) weights.push_back(std::pow(w.weight, 1.0 / req.temperature));
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    resp.new_lines.push_back(menu[pick(*rng)].line);
    ++depth;
  }
  resp.eos = depth >= positions_.size();
  resp.tokens_used = mock_token_count(resp.new_lines, resp.eos);
  return resp;
}

// --- AdversarialPolicy ----------------------------------------------------

AdversarialPolicy::AdversarialPolicy(std::shared_ptr<RolloutPolicy> inner, double probability,
                                     std::string fatal_line, std::uint64_t seed,
                                     std::set<std::size_t> inject_depths)
    : inner_(std::move(inner)),
      probability_(probability),
      fatal_line_(std::move(fatal_line)),
      seed_(seed),
      inject_depths_(std::move(inject_depths)),
      rng_(seed) {
  if (!inner_) throw InvalidConfig("adversarial policy needs an inner policy");
  if (probability_ < 0 || probability_ > 1) throw InvalidConfig("adversarial probability not in [0,1]");
}

PolicyResponse AdversarialPolicy::sample_continuation(const PolicyRequest& req) {
  PolicyResponse resp = inner_->sample_continuation(req);

  std::mt19937_64 local(0);
  std::unique_lock lock(mu_, std::defer_lock);
  std::mt19937_64* rng = &local;
  if (req.seed) {
    local.seed(splitmix64(seed_ ^ splitmix64(~*req.seed)));
  } else {
    lock.lock();
    rng = &rng_;
  }
  std::bernoulli_distribution coin(probability_);
  for (std::size_t i = 0; i < resp.new_lines.size(); ++i) {
    const std::size_t depth = req.prefix_lines.size() + i;
    if (!inject_depths_.empty() && !inject_depths_.contains(depth)) continue;
    if (coin(*rng)) {
      resp.new_lines.resize(i + 1);
      resp.new_lines[i] = fatal_line_;
      resp.eos = false;
      resp.tokens_used = mock_token_count(resp.new_lines, false);
      break;
    }
  }
  return resp;
}

// --- CountingPolicy -------------------------------------------------------

PolicyResponse CountingPolicy::sample_continuation(const PolicyRequest& req) {
  PolicyResponse resp = inner_->sample_continuation(req);
  std::lock_guard lock(mu_);
  requests_.push_back(req);
  tokens_ += resp.tokens_used;
  return resp;
}

std::size_t CountingPolicy::calls() const {
  std::lock_guard lock(mu_);
  return requests_.size();
}

std::vector<PolicyRequest> CountingPolicy::requests() const {
  std::lock_guard lock(mu_);
  return requests_;
}

int CountingPolicy::tokens_reported() const {
  std::lock_guard lock(mu_);
  return tokens_;
}

void CountingPolicy::reset() {
  std::lock_guard lock(mu_);
  requests_.clear();
  tokens_ = 0;
}

// --- HttpPolicyClient -----------------------------------------------------

HttpPolicyClient::HttpPolicyClient(std::shared_ptr<HttpTransport> transport)
    : transport_(std::move(transport)) {}

std::string HttpPolicyClient::describe() const { return transport_->base_url(); }

std::string HttpPolicyClient::upload_image(const std::vector<std::uint8_t>& png_bytes) {
  const std::string expected = sha256_hex(png_bytes);
  const std::string id =
      wire::decode_image_response(transport_->post_bytes("/v1/images", png_bytes, "image/png"));
  if (id != expected) {
    throw ProtocolError("image_id mismatch: server returned " + id + ", expected " + expected);
  }
  return id;
}

PolicyResponse HttpPolicyClient::sample_continuation(const PolicyRequest& req) {
  validate_request(req);
  PolicyResponse resp =
      wire::decode_rollout_response(transport_->post_json("/v1/rollout", wire::encode_rollout_request(req)));
  validate_response(resp, req);
  return resp;
}

// --- YAML loading ---------------------------------------------------------

namespace {

std::vector<std::string> yaml_lines(const YAML::Node& node) {
  std::vector<std::string> out;
  if (!node) return out;
  if (!node.IsSequence()) throw InvalidConfig("mock policy: expected a list of lines");
  for (const auto& item : node) out.push_back(item.as<std::string>());
  return out;
}

Script yaml_script(const YAML::Node& node) {
  if (!node.IsSequence()) throw InvalidConfig("mock policy: script must be a list");
  Script script;
  for (const auto& e : node) {
    ScriptEntry entry;
    entry.prefix = yaml_lines(e["prefix"]);
    entry.lines = yaml_lines(e["lines"]);
    entry.eos = e["eos"] ? e["eos"].as<bool>() : true;
    script.push_back(std::move(entry));
  }
  return script;
}

std::shared_ptr<RolloutPolicy> policy_from_yaml(const YAML::Node& root) {
  const std::string kind = root["kind"] ? root["kind"].as<std::string>() : "";
  if (kind == "scripted") {
    if (root["phases"]) {
      std::vector<Script> phases;
      for (const auto& p : root["phases"]) phases.push_back(yaml_script(p));
      return std::make_shared<ScriptedPolicy>(std::move(phases));
    }
    return std::make_shared<ScriptedPolicy>(yaml_script(root["script"]));
  }
  if (kind == "stochastic") {
    std::vector<std::vector<WeightedLine>> positions;
    for (const auto& menu : root["positions"]) {
      std::vector<WeightedLine> choices;
      for (const auto& c : menu) {
        if (c.IsScalar()) {
          choices.push_back({c.as<std::string>(), 1.0});
        } else {
          choices.push_back({c["line"].as<std::string>(), c["weight"] ? c["weight"].as<double>() : 1.0});
        }
      }
      positions.push_back(std::move(choices));
    }
    return std::make_shared<SeededStochasticPolicy>(std::move(positions),
                                                    root["seed"] ? root["seed"].as<std::uint64_t>() : 0);
  }
  if (kind == "adversarial") {
    if (!root["inner"]) throw InvalidConfig("adversarial mock policy needs 'inner'");
    std::set<std::size_t> depths;
    if (root["inject_depths"]) {
      for (const auto& d : root["inject_depths"]) depths.insert(d.as<std::size_t>());
    }
    return std::make_shared<AdversarialPolicy>(
        policy_from_yaml(root["inner"]), root["probability"] ? root["probability"].as<double>() : 0.1,
        root["fatal_line"] ? root["fatal_line"].as<std::string>() : std::string("\\end{nonexistent}"),
        root["seed"] ? root["seed"].as<std::uint64_t>() : 0, std::move(depths));
  }
  throw InvalidConfig("mock policy: unknown kind '" + kind + "'");
}

}  // namespace

std::shared_ptr<RolloutPolicy> load_mock_policy(const std::filesystem::path& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path.string());
  } catch (const YAML::Exception& e) {
    throw InvalidConfig("cannot load mock policy " + path.string() + ": " + e.what());
  }
  try {
    return policy_from_yaml(root);
  } catch (const YAML::Exception& e) {
    throw InvalidConfig("malformed mock policy " + path.string() + ": " + e.what());
  }
}

}  // namespace tikzmcts
