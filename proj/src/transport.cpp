#include "tikzmcts/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tikzmcts/errors.hpp"

namespace tikzmcts {

TransportPlan solve_transport(const Matrix& cost, std::span<const std::int64_t> supply,
                              std::span<const std::int64_t> demand) {
  const std::size_t m = supply.size();
  const std::size_t n = demand.size();
  if (m == 0 || n == 0) throw ContractViolation("transport: empty marginals");
  if (cost.size() != m) throw ContractViolation("transport: cost rows != supply size");
  for (const auto& row : cost) {
    if (row.size() != n) throw ContractViolation("transport: cost cols != demand size");
    for (double c : row) {
      if (!std::isfinite(c)) throw ContractViolation("transport: non-finite cost");
    }
  }
  if (std::any_of(supply.begin(), supply.end(), [](auto v) { return v < 0; }) ||
      std::any_of(demand.begin(), demand.end(), [](auto v) { return v < 0; })) {
    throw ContractViolation("transport: negative mass");
  }
  const std::int64_t total = std::accumulate(supply.begin(), supply.end(), std::int64_t{0});
  if (total != std::accumulate(demand.begin(), demand.end(), std::int64_t{0})) {
    throw ContractViolation("transport: unbalanced marginals");
  }

  constexpr double kInf = std::numeric_limits<double>::infinity();
  TransportPlan plan;
  plan.flow.assign(m, std::vector<std::int64_t>(n, 0));
  std::vector<std::int64_t> left(supply.begin(), supply.end());
  std::vector<std::int64_t> need(demand.begin(), demand.end());

  // Potentials keep every residual reduced cost nonnegative.
  std::vector<double> pot_src(m, 0.0), pot_dst(n, kInf);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) pot_dst[j] = std::min(pot_dst[j], cost[i][j]);
  }

  std::vector<double> dist_src(m), dist_dst(n);
  std::vector<bool> done_src(m), done_dst(n);
  std::vector<std::ptrdiff_t> pred_dst(n);  // source feeding sink j
  std::vector<std::ptrdiff_t> pred_src(m);  // sink returning flow to source i (-1 = root)

  std::int64_t shipped = 0;
  const long max_augmentations = static_cast<long>(4 * (m + n) * (m + n) + 16);
  while (shipped < total) {
    if (plan.augmentations >= max_augmentations) {
      throw SolverError("transport: augmentation budget exhausted",
                        static_cast<double>(total - shipped));
    }
    std::fill(dist_src.begin(), dist_src.end(), kInf);
    std::fill(dist_dst.begin(), dist_dst.end(), kInf);
    std::fill(done_src.begin(), done_src.end(), false);
    std::fill(done_dst.begin(), done_dst.end(), false);
    for (std::size_t i = 0; i < m; ++i) {
      if (left[i] > 0) {
        dist_src[i] = 0.0;
        pred_src[i] = -1;
      }
    }

    // Dense Dijkstra over m + n nodes.
    std::ptrdiff_t target = -1;
    for (;;) {
      double best = kInf;
      std::ptrdiff_t pick = -1;
      bool pick_is_src = false;
      for (std::size_t i = 0; i < m; ++i) {
        if (!done_src[i] && dist_src[i] < best) {
          best = dist_src[i];
          pick = static_cast<std::ptrdiff_t>(i);
          pick_is_src = true;
        }
      }
      for (std::size_t j = 0; j < n; ++j) {
        if (!done_dst[j] && dist_dst[j] < best) {
          best = dist_dst[j];
          pick = static_cast<std::ptrdiff_t>(j);
          pick_is_src = false;
        }
      }
      if (pick < 0) break;
      if (pick_is_src) {
        const auto i = static_cast<std::size_t>(pick);
        done_src[i] = true;
        for (std::size_t j = 0; j < n; ++j) {
          if (done_dst[j]) continue;
          const double rc = std::max(0.0, cost[i][j] + pot_src[i] - pot_dst[j]);
          if (dist_src[i] + rc < dist_dst[j]) {
            dist_dst[j] = dist_src[i] + rc;
            pred_dst[j] = pick;
          }
        }
      } else {
        const auto j = static_cast<std::size_t>(pick);
        done_dst[j] = true;
        if (need[j] > 0) {
          target = pick;
          break;
        }
        for (std::size_t i = 0; i < m; ++i) {
          if (done_src[i] || plan.flow[i][j] == 0) continue;
          const double rc = std::max(0.0, -cost[i][j] - pot_src[i] + pot_dst[j]);
          if (dist_dst[j] + rc < dist_src[i]) {
            dist_src[i] = dist_dst[j] + rc;
            pred_src[i] = pick;
          }
        }
      }
    }
    if (target < 0) {
      throw SolverError("transport: no augmenting path", static_cast<double>(total - shipped));
    }

    const double reach = dist_dst[static_cast<std::size_t>(target)];
    for (std::size_t i = 0; i < m; ++i) pot_src[i] += std::min(dist_src[i], reach);
    for (std::size_t j = 0; j < n; ++j) pot_dst[j] += std::min(dist_dst[j], reach);

    // Walk back to find the bottleneck, then apply.
    std::int64_t amount = need[static_cast<std::size_t>(target)];
    std::size_t j = static_cast<std::size_t>(target);
    for (;;) {
      const auto i = static_cast<std::size_t>(pred_dst[j]);
      if (pred_src[i] < 0) {
        amount = std::min(amount, left[i]);
        break;
      }
      const auto jj = static_cast<std::size_t>(pred_src[i]);
      amount = std::min(amount, plan.flow[i][jj]);
      j = jj;
    }
    j = static_cast<std::size_t>(target);
    need[j] -= amount;
    for (;;) {
      const auto i = static_cast<std::size_t>(pred_dst[j]);
      plan.flow[i][j] += amount;
      if (pred_src[i] < 0) {
        left[i] -= amount;
        break;
      }
      const auto jj = static_cast<std::size_t>(pred_src[i]);
      plan.flow[i][jj] -= amount;
      j = jj;
    }
    shipped += amount;
    ++plan.augmentations;
  }

  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) plan.cost += static_cast<double>(plan.flow[i][j]) * cost[i][j];
  }
  return plan;
}

UniformTransport solve_uniform_transport(const Matrix& cost) {
  if (cost.empty() || cost.front().empty()) throw ContractViolation("transport: empty cost matrix");
  const std::size_t m = cost.size();
  const std::size_t n = cost.front().size();
  const std::vector<std::int64_t> supply(m, static_cast<std::int64_t>(n));
  const std::vector<std::int64_t> demand(n, static_cast<std::int64_t>(m));
  const TransportPlan plan = solve_transport(cost, supply, demand);

  const double scale = static_cast<double>(m) * static_cast<double>(n);
  UniformTransport out;
  out.flow.assign(m, std::vector<double>(n, 0.0));
  double mass = 0.0;
  double weighted = 0.0;
  std::vector<double> col(n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double f = static_cast<double>(plan.flow[i][j]) / scale;
      out.flow[i][j] = f;
      row += f;
      col[j] += f;
      mass += f;
      weighted += f * cost[i][j];
    }
    out.max_residual = std::max(out.max_residual, std::abs(row - 1.0 / static_cast<double>(m)));
  }
  for (std::size_t j = 0; j < n; ++j) {
    out.max_residual = std::max(out.max_residual, std::abs(col[j] - 1.0 / static_cast<double>(n)));
  }
  if (out.max_residual > 1e-9) {
    throw SolverError("transport: marginals violated", out.max_residual);
  }
  out.distance = weighted / mass;
  return out;
}

}  // namespace tikzmcts
