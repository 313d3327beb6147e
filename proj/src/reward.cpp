#include "tikzmcts/reward.hpp"

#include <algorithm>
#include <cmath>

#include "tikzmcts/errors.hpp"

namespace tikzmcts {

std::string_view to_string(RewardKind kind) {
  switch (kind) {
    case RewardKind::Diagnostics: return "diagnostics";
    case RewardKind::SelfSim: return "selfsim";
    case RewardKind::Emd: return "emd";
  }
  return "diagnostics";
}

RewardValue diagnostics_reward(CompileStatus status) {
  switch (status) {
    case CompileStatus::CleanSuccess: return {1.0, RewardKind::Diagnostics};
    case CompileStatus::RecoverableErrors: return {0.0, RewardKind::Diagnostics};
    case CompileStatus::FatalFailure: return {-1.0, RewardKind::Diagnostics};
  }
  return {-1.0, RewardKind::Diagnostics};
}

RewardValue diagnostics_reward(const CompileOutcome& outcome) {
  return diagnostics_reward(outcome.status);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ContractViolation("cosine: dimension mismatch");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) throw DegenerateEmbedding("cosine of a zero-norm vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

RewardValue selfsim(const Embedding& input, const std::optional<Embedding>& output) {
  if (!output) return {-1.0, RewardKind::SelfSim};
  return {cosine_similarity(input.values, output->values), RewardKind::SelfSim};
}

std::vector<double> rescale_values(std::span<const double> values) {
  std::vector<double> out(values.begin(), values.end());
  bool any = false;
  double lo = 0, hi = 0;
  for (double v : values) {
    if (v == -1.0) continue;
    lo = any ? std::min(lo, v) : v;
    hi = any ? std::max(hi, v) : v;
    any = true;
  }
  if (!any) return out;
  // max over all entries equals max over non-failure entries whenever one exists.
  for (double& v : out) {
    if (v == -1.0) continue;
    v = hi == lo ? 0.0 : (v - lo) / (hi - lo);
  }
  return out;
}

Matrix patch_distance_matrix(const PatchEmbeddings& x, const PatchEmbeddings& y) {
  if (x.num_patches() == 0 || y.num_patches() == 0) {
    throw ContractViolation("emd: patch sets must be non-empty");
  }
  Matrix d(x.num_patches(), std::vector<double>(y.num_patches()));
  for (std::size_t i = 0; i < x.num_patches(); ++i) {
    for (std::size_t j = 0; j < y.num_patches(); ++j) {
      d[i][j] = 1.0 - cosine_similarity(x.patches[i], y.patches[j]);
    }
  }
  return d;
}

double earth_movers_distance(const PatchEmbeddings& x, const PatchEmbeddings& y) {
  return solve_uniform_transport(patch_distance_matrix(x, y)).distance;
}

RewardValue emd_reward(const PatchEmbeddings& x, const std::optional<PatchEmbeddings>& y) {
  if (!y) return {-1.0, RewardKind::Emd};
  const double emd = earth_movers_distance(x, *y);
  return {std::clamp(2.0 * std::tanh(-emd) + 1.0, -1.0, 1.0), RewardKind::Emd};
}

SelfSimReward::SelfSimReward(std::shared_ptr<Embedder> embedder, const RasterImage& input)
    : embedder_(std::move(embedder)), input_(embedder_->embed_image(input)) {
  double norm = 0;
  for (double v : input_.values) norm += v * v;
  if (norm == 0) throw DegenerateEmbedding("input image embedding has zero norm");
}

RewardValue SelfSimReward::evaluate(const std::vector<std::string>&, const CompileOutcome& outcome) {
  if (!outcome.raster) return selfsim(input_, std::nullopt);
  try {
    return selfsim(input_, embedder_->embed_image(*outcome.raster));
  } catch (const DegenerateEmbedding&) {
    return {0.0, RewardKind::SelfSim};
  }
}

EmdReward::EmdReward(std::shared_ptr<Embedder> embedder, const RasterImage& input,
                     std::optional<int> layer_index)
    : embedder_(std::move(embedder)),
      layer_index_(layer_index),
      input_(embedder_->embed_patches(input, layer_index)) {}

RewardValue EmdReward::evaluate(const std::vector<std::string>&, const CompileOutcome& outcome) {
  if (!outcome.raster) return emd_reward(input_, std::nullopt);
  try {
    return emd_reward(input_, embedder_->embed_patches(*outcome.raster, layer_index_));
  } catch (const DegenerateEmbedding&) {
    return {0.0, RewardKind::Emd};
  }
}

}  // namespace tikzmcts
