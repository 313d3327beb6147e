#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tikzmcts/compile.hpp"
#include "tikzmcts/embed.hpp"
#include "tikzmcts/transport.hpp"

namespace tikzmcts {

enum class RewardKind { Diagnostics, SelfSim, Emd };

std::string_view to_string(RewardKind kind);

/// A simulation value in [-1, 1].
struct RewardValue {
  double value = -1.0;
  RewardKind kind = RewardKind::Diagnostics;
};

/// +1 clean, 0 recoverable errors, -1 fatal.
RewardValue diagnostics_reward(CompileStatus status);
RewardValue diagnostics_reward(const CompileOutcome& outcome);

/// Cosine similarity clamped to [-1, 1]; throws DegenerateEmbedding on a
/// zero-norm argument and ContractViolation on a dimension mismatch.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Cosine similarity of the two embeddings, or -1 when the output is absent
/// (compilation produced nothing to embed).
RewardValue selfsim(const Embedding& input, const std::optional<Embedding>& output);

/// Per-node min-max rescaling of visual rewards. Entries equal to -1 stay -1;
/// the rest map to (v - min) / (max - min) with min taken over the non-failure
/// entries, or to 0 when that range is empty. Output lies in {-1} ∪ [0, 1].
std::vector<double> rescale_values(std::span<const double> values);

/// D[i][j] = 1 - cos(x_i, y_j).
Matrix patch_distance_matrix(const PatchEmbeddings& x, const PatchEmbeddings& y);

/// Earth mover's distance between the patch sets under uniform marginals.
double earth_movers_distance(const PatchEmbeddings& x, const PatchEmbeddings& y);

/// 2·tanh(-EMD) + 1, or -1 when the output is absent.
RewardValue emd_reward(const PatchEmbeddings& x, const std::optional<PatchEmbeddings>& y);

/// Scores a finished rollout. Visual rewards ask the search to rescale node
/// value histories before computing UCT.
class RewardFunction {
 public:
  virtual ~RewardFunction() = default;

  virtual RewardValue evaluate(const std::vector<std::string>& program_lines,
                               const CompileOutcome& outcome) = 0;
  virtual bool rescaled() const = 0;
  virtual RewardKind kind() const = 0;
};

class DiagnosticsReward final : public RewardFunction {
 public:
  RewardValue evaluate(const std::vector<std::string>&, const CompileOutcome& outcome) override {
    return diagnostics_reward(outcome);
  }
  bool rescaled() const override { return false; }
  RewardKind kind() const override { return RewardKind::Diagnostics; }
};

/// SelfSim against a fixed input embedding. A render whose embedding has zero
/// norm (e.g. a blank page under the mock embedder) scores 0.
class SelfSimReward final : public RewardFunction {
 public:
  SelfSimReward(std::shared_ptr<Embedder> embedder, const RasterImage& input);

  RewardValue evaluate(const std::vector<std::string>&, const CompileOutcome& outcome) override;
  bool rescaled() const override { return true; }
  RewardKind kind() const override { return RewardKind::SelfSim; }

 private:
  std::shared_ptr<Embedder> embedder_;
  Embedding input_;
};

class EmdReward final : public RewardFunction {
 public:
  EmdReward(std::shared_ptr<Embedder> embedder, const RasterImage& input,
            std::optional<int> layer_index);

  RewardValue evaluate(const std::vector<std::string>&, const CompileOutcome& outcome) override;
  bool rescaled() const override { return true; }
  RewardKind kind() const override { return RewardKind::Emd; }

 private:
  std::shared_ptr<Embedder> embedder_;
  std::optional<int> layer_index_;
  PatchEmbeddings input_;
};

}  // namespace tikzmcts
