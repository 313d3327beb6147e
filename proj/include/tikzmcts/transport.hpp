#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace tikzmcts {

using Matrix = std::vector<std::vector<double>>;

struct TransportPlan {
  /// flow[i][j] >= 0; rows sum to supply[i], columns to demand[j] (as given).
  std::vector<std::vector<std::int64_t>> flow;
  /// Σ flow·cost with flow in the caller's integer units.
  double cost = 0.0;
  int augmentations = 0;
};

/// Exact balanced transportation problem with integer masses, solved by
/// successive shortest augmenting paths (Dijkstra with node potentials on the
/// dense bipartite residual graph). Costs may be any finite reals.
///
/// Throws ContractViolation on unbalanced or negative masses and SolverError
/// if the augmentation budget is exhausted.
TransportPlan solve_transport(const Matrix& cost, std::span<const std::int64_t> supply,
                              std::span<const std::int64_t> demand);

struct UniformTransport {
  /// Normalized flow F with rows summing to 1/rows and columns to 1/cols.
  Matrix flow;
  /// ⟨F, D⟩ / ΣF
  double distance = 0.0;
  /// Largest deviation of a marginal from its target.
  double max_residual = 0.0;
};

/// Earth mover's distance between uniform distributions over the rows and
/// columns of `cost`. Masses are scaled to integers (|cols| per row, |rows|
/// per column) so the solve is exact.
UniformTransport solve_uniform_transport(const Matrix& cost);

}  // namespace tikzmcts
