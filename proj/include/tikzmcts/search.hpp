#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tikzmcts/compile.hpp"
#include "tikzmcts/errors.hpp"
#include "tikzmcts/image.hpp"
#include "tikzmcts/policy.hpp"
#include "tikzmcts/program.hpp"
#include "tikzmcts/reward.hpp"

namespace tikzmcts {

enum class SearchMode { OI, TI };

std::string_view to_string(SearchMode mode);
SearchMode search_mode_from_string(std::string_view name);

struct SearchConfig {
  SearchMode mode = SearchMode::TI;
  double exploration_c = 0.6;
  double temperature = 0.8;
  double budget_seconds = 600.0;
  int max_rollout_lines = 150;
  double compile_timeout_seconds = 60.0;
  int raster_dpi = 300;
  std::uint64_t rng_seed = 0;
  /// Lines requested per policy call.
  int lines_per_request = 1;
  /// Optional hard cap on simulations, on top of the time budget.
  std::optional<std::size_t> max_simulations;

  /// Throws InvalidConfig.
  void validate() const;
};

struct SearchNode {
  ProgramState state;
  bool is_backtracking = false;
  int visits = 0;
  std::vector<double> values;
  std::vector<std::unique_ptr<SearchNode>> children;
  SearchNode* parent = nullptr;
  /// Policy tokens attributed to the last line of `state`.
  int line_tokens = 0;

  SearchNode() = default;
  explicit SearchNode(ProgramState s) : state(std::move(s)) {}

  bool is_leaf() const { return children.empty(); }
  /// State new children of this node extend: the parent's for backtracking nodes.
  const SearchNode& expansion_anchor() const;
  SearchNode& expansion_anchor();
};

/// Scores returned for never-visited children.
inline constexpr double kUnvisitedScore = std::numeric_limits<double>::infinity();

/// mean(values) + c·sqrt(ln n_parent / n_i). Values are min-max rescaled first
/// when `rescale` is set. Unvisited nodes score +inf; a visited node without
/// values (backtracking) has exploitation term 0.
double uct_score(const SearchNode& node, double c, bool rescale = false);

/// Greedy UCT descent from the root to a leaf; ties go to the lowest index.
std::vector<SearchNode*> select(SearchNode& root, double c, bool rescale = false);

struct Rollout {
  ProgramState origin_state;
  std::vector<std::string> lines;
  /// Tokens attributed to each entry of `lines`.
  std::vector<int> line_tokens;
  std::optional<CompileOutcome> outcome;
  std::optional<double> raw_reward;
  /// Policy tokens spent producing this rollout during its own simulation.
  int tokens_generated = 0;
  std::size_t simulation_index = 0;
  bool truncated = false;
  /// Served from the fault memo instead of being sampled to the end.
  bool reused = false;

  std::size_t line_count() const { return lines.size(); }
  std::string program_text() const { return join_lines(lines); }
  int program_tokens() const;
};

/// Faulty prefixes seen so far, keyed by key_of_lines of the prefix that ends
/// at the fatal line.
class FaultMemo {
 public:
  /// Registers a fatal rollout; returns false when it carries no fatal line or
  /// the key is already present.
  bool record(const Rollout& rollout);
  const Rollout* find(const std::string& key) const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::unordered_map<std::string, Rollout> entries_;
};

/// Samples a continuation of `state` until the end marker or the line cap.
/// After each appended line the grown prefix is looked up in `memo`; on a hit
/// sampling stops and the memoized program and outcome are returned with
/// `reused` set. `origin_tokens` attributes tokens to the lines of `state`.
Rollout run_rollout(RolloutPolicy& policy, const std::string& image_ref, const ProgramState& state,
                    const SearchConfig& cfg, const FaultMemo& memo, std::mt19937_64& seeds,
                    std::vector<int> origin_tokens = {});

/// max(1, floor(sqrt(rollout_lines - leaf_depth))).
std::size_t expansion_count(std::size_t rollout_lines, std::size_t leaf_depth);

/// Attaches up to expansion_count successive rollout lines below `leaf` (below
/// its parent for a backtracking leaf), merging into existing children with the
/// same state and adding one backtracking sibling per parent for each new
/// node. Lines from the fatal line on are never added. Returns the chain, in
/// order, including merged existing nodes.
std::vector<SearchNode*> expand(SearchNode& leaf, const Rollout& rollout);

/// Adds a visit to every node of path + added and appends `value` to each
/// non-backtracking one.
void backpropagate(const std::vector<SearchNode*>& path, const std::vector<SearchNode*>& added,
                   double value);

/// Time source for budgets and trace offsets.
class Clock {
 public:
  virtual ~Clock() = default;
  /// Seconds since an arbitrary origin; nondecreasing.
  virtual double now() = 0;
};

class SteadyClock final : public Clock {
 public:
  double now() override;
};

/// Virtual time advancing by a fixed step on every reading; makes traces
/// reproducible byte for byte.
class StepClock final : public Clock {
 public:
  explicit StepClock(double step_s) : step_(step_s) {}
  double now() override;

 private:
  double step_;
  double t_ = 0.0;
};

struct TraceEvent {
  std::size_t sim = 0;
  double t_offset_s = 0.0;
  double reward = -1.0;
  CompileStatus status = CompileStatus::FatalFailure;
  int tokens = 0;
  bool unique = false;
  std::string program_sha256;
  bool artifact = false;
  bool reused = false;
  int program_tokens = 0;

  bool operator==(const TraceEvent&) const = default;
};

struct SearchTrace {
  std::vector<TraceEvent> events;
};

enum class ExitReason { EarlyExit, BudgetExhausted, SimulationLimit };

std::string_view to_string(ExitReason reason);

struct SearchResult {
  Rollout best;
  SearchTrace trace;
  ExitReason exit_reason = ExitReason::BudgetExhausted;
  std::size_t simulations = 0;
  std::size_t tree_size = 0;
};

/// No simulation finished inside the budget.
class EmptySearchError : public Error {
 public:
  explicit EmptySearchError(SearchTrace trace)
      : Error("search finished without a completed simulation"), trace_(std::move(trace)) {}

  const SearchTrace& trace() const { return trace_; }

 private:
  SearchTrace trace_;
};

/// Observer hook called after every simulation, e.g. to check tree invariants.
struct SearchObserver {
  virtual ~SearchObserver() = default;
  virtual void on_simulation(const SearchNode& root, const Rollout& rollout, const TraceEvent& event) = 0;
};

struct SearchContext {
  RolloutPolicy& policy;
  RewardFunction& reward;
  CompileHarness& harness;
  Clock* clock = nullptr;
  SearchObserver* observer = nullptr;
};

/// Runs simulations (select, rollout, compile, reward, expand, backpropagate)
/// until OI's first artifact, the time budget or the simulation cap.
SearchResult run_search(const RasterImage& input_image, const SearchConfig& cfg, SearchContext ctx);

/// Throws ContractViolation on the first broken tree invariant.
void check_tree_invariants(const SearchNode& root);

std::size_t count_nodes(const SearchNode& root);

}  // namespace tikzmcts
