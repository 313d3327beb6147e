#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace tikzmcts {

class HttpTransport;

struct PolicyRequest {
  /// Content hash of the conditioning image (as returned by /v1/images).
  std::string image_ref;
  std::vector<std::string> prefix_lines;
  double temperature = 0.8;
  int max_new_lines = 1;
  std::optional<std::uint64_t> seed;

  bool operator==(const PolicyRequest&) const = default;
};

struct PolicyResponse {
  std::vector<std::string> new_lines;
  bool eos = false;
  int tokens_used = 0;

  bool operator==(const PolicyResponse&) const = default;
};

/// Throws ContractViolation on a malformed request.
void validate_request(const PolicyRequest& req);
/// Throws ProtocolError when a response breaks the line contract.
void validate_response(const PolicyResponse& resp, const PolicyRequest& req);

/// Token count the mocks report: TeX tokens per line plus one for each line
/// break, plus one for the end marker.
int mock_token_count(const std::vector<std::string>& lines, bool eos);

/// Line-oriented sampling interface of the rollout policy.
class RolloutPolicy {
 public:
  virtual ~RolloutPolicy() = default;

  virtual PolicyResponse sample_continuation(const PolicyRequest& req) = 0;

  /// Registers the conditioning image; returns its content handle.
  virtual std::string upload_image(const std::vector<std::uint8_t>& png_bytes);

  virtual std::string describe() const = 0;
};

struct ScriptEntry {
  std::vector<std::string> prefix;
  std::vector<std::string> lines;
  bool eos = true;
};
using Script = std::vector<ScriptEntry>;

/// Replays a prefix → continuation table. A request is served by the entry
/// with the longest `prefix` such that the request prefix lies within
/// `prefix + lines`; the remaining lines are returned in batches of at most
/// max_new_lines. Unknown prefixes get an immediate end marker.
///
/// With several phases, each response carrying eos advances to the next phase
/// (the last phase repeats).
class ScriptedPolicy final : public RolloutPolicy {
 public:
  explicit ScriptedPolicy(Script script);
  explicit ScriptedPolicy(std::vector<Script> phases);

  PolicyResponse sample_continuation(const PolicyRequest& req) override;
  std::string describe() const override { return "mock:scripted"; }

  std::size_t phase() const;

 private:
  std::vector<Script> phases_;
  std::size_t phase_ = 0;
  mutable std::mutex mu_;
};

struct WeightedLine {
  std::string line;
  double weight = 1.0;
};

/// Samples line k of the program from a fixed weighted menu for position k;
/// emits the end marker after the last position. Weights are tempered as
/// w^(1/T). A request seed makes the draw a pure function of (seed, request).
class SeededStochasticPolicy final : public RolloutPolicy {
 public:
  SeededStochasticPolicy(std::vector<std::vector<WeightedLine>> positions, std::uint64_t seed);

  PolicyResponse sample_continuation(const PolicyRequest& req) override;
  std::string describe() const override { return "mock:stochastic"; }

  const std::vector<std::vector<WeightedLine>>& positions() const { return positions_; }

 private:
  std::vector<std::vector<WeightedLine>> positions_;
  std::uint64_t seed_;
  std::mt19937_64 rng_;
  std::mutex mu_;
};

/// Wraps another policy and, with probability p, replaces a sampled line with
/// a known-fatal line (the batch is cut right after the injected line).
class AdversarialPolicy final : public RolloutPolicy {
 public:
  AdversarialPolicy(std::shared_ptr<RolloutPolicy> inner, double probability,
                    std::string fatal_line, std::uint64_t seed,
                    std::set<std::size_t> inject_depths = {});

  PolicyResponse sample_continuation(const PolicyRequest& req) override;
  std::string describe() const override { return "mock:adversarial(" + inner_->describe() + ")"; }

 private:
  std::shared_ptr<RolloutPolicy> inner_;
  double probability_;
  std::string fatal_line_;
  std::uint64_t seed_;
  std::set<std::size_t> inject_depths_;
  std::mt19937_64 rng_;
  std::mutex mu_;
};

/// Decorator that records every request; used to assert call counts.
class CountingPolicy final : public RolloutPolicy {
 public:
  explicit CountingPolicy(std::shared_ptr<RolloutPolicy> inner) : inner_(std::move(inner)) {}

  PolicyResponse sample_continuation(const PolicyRequest& req) override;
  std::string describe() const override { return inner_->describe(); }

  std::size_t calls() const;
  std::vector<PolicyRequest> requests() const;
  int tokens_reported() const;
  void reset();

 private:
  std::shared_ptr<RolloutPolicy> inner_;
  std::vector<PolicyRequest> requests_;
  int tokens_ = 0;
  mutable std::mutex mu_;
};

/// Client for the /v1/images + /v1/rollout wire protocol.
class HttpPolicyClient final : public RolloutPolicy {
 public:
  explicit HttpPolicyClient(std::shared_ptr<HttpTransport> transport);

  PolicyResponse sample_continuation(const PolicyRequest& req) override;
  std::string upload_image(const std::vector<std::uint8_t>& png_bytes) override;
  std::string describe() const override;

 private:
  std::shared_ptr<HttpTransport> transport_;
};

/// Builds a mock policy from a YAML description (`kind: scripted | stochastic
/// | adversarial`). See README for the schema.
std::shared_ptr<RolloutPolicy> load_mock_policy(const std::filesystem::path& path);

}  // namespace tikzmcts
